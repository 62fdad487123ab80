//! Generates the synthetic lightbox dataset and prints a summary.

use chromacal::dataset::{synthesize_dataset, SynthConfig};

fn main() -> chromacal::Result<()> {
    let t = std::time::Instant::now();
    let ds = synthesize_dataset(&SynthConfig::default())?;
    println!(
        "{} illuminants, {} kept, {} discarded ({:.2?})",
        ds.illuminants.len(),
        ds.charts.len(),
        ds.discarded.len(),
        t.elapsed()
    );
    let (train, val, test) = (ds.train(), ds.val(), ds.test());
    println!("split: {} train / {} val / {} test", train.len(), val.len(), test.len());
    let off = test
        .iter()
        .filter(|c| c.white.cct.is_some() && chromacal::cct::cct_lookup(c.white.xy.expect("derived")).off_locus)
        .count();
    println!("off-locus test charts: {off}");
    for c in test.iter().take(5) {
        let xy = c.white.xy.expect("derived");
        println!(
            "{}  r/g {:.3} b/g {:.3}  xy ({:.4}, {:.4})  {:.0} K",
            c.illuminant_id,
            c.white.raw.a,
            c.white.raw.b,
            xy.a,
            xy.b,
            c.white.cct.unwrap_or(f64::NAN)
        );
    }
    for a in ds.calibration_three.anchors() {
        println!("anchor {:.0} K: {:?}", a.cct, a.cst.as_linear());
    }
    Ok(())
}
