//! Best-fit CSTs for one chart with the linear, polynomial and
//! root-polynomial feature heads.

use chromacal::color::{angular_error, ChartObservation, Cst, FeatureHead, HeadKind};
use chromacal::dataset::{synthesize_dataset, SynthConfig};
use chromacal::fitting::oracle_fit_detailed;

fn mean_angle(obs: &ChartObservation, t: &Cst) -> chromacal::Result<f64> {
    let wb = obs.white_balanced()?;
    let mut sum = 0.0;
    for (p, g) in wb.iter().zip(&obs.gt_xyz) {
        sum += angular_error(t.apply_features(&t.head().expand(*p)), *g)?;
    }
    Ok(sum / wb.len() as f64)
}

fn main() -> chromacal::Result<()> {
    let ds = synthesize_dataset(&SynthConfig {
        illuminants: 20,
        ..SynthConfig::default()
    })?;
    let obs = &ds.charts[0];
    println!("chart {}", obs.illuminant_id);
    let heads = [
        (HeadKind::Linear, 3),
        (HeadKind::Poly, 9),
        (HeadKind::Poly, 19),
        (HeadKind::Rootpoly, 6),
        (HeadKind::Rootpoly, 13),
    ];
    for (kind, size) in heads {
        let head = FeatureHead::new(kind, size)?;
        let fit = oracle_fit_detailed(obs, head)?;
        println!(
            "{kind:?}-{size}: cosine loss {:.3e} (start {:.3e}), mean angle {:.4} deg, {} iterations",
            fit.loss,
            fit.lls_loss,
            mean_angle(obs, &fit.cst)?,
            fit.iterations
        );
    }
    Ok(())
}
