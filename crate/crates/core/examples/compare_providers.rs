//! Trains 1D and 2D CST-MLPs on the synthetic testbed and compares them with
//! interpolation, nearest-neighbor and oracle baselines.
//!
//! Usage: `compare_providers [iterations]` (default 100000).

use chromacal::color::FeatureHead;
use chromacal::dataset::{synthesize_dataset, SynthConfig};
use chromacal::fitting::nn_build;
use chromacal::mlp::{train, EncodingKind, InputEncoding, TrainConfig};
use chromacal::pipeline::{evaluate, CstProvider};

fn main() -> chromacal::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("iterations must be an integer"))
        .unwrap_or(100_000);
    let t = std::time::Instant::now();
    let ds = synthesize_dataset(&SynthConfig::default())?;
    let (train_set, test) = (ds.train(), ds.test());

    let mut providers = vec![
        CstProvider::Oracle(FeatureHead::Linear),
        CstProvider::Interpolated(ds.calibration_two.clone()),
        CstProvider::Interpolated(ds.calibration_three.clone()),
    ];
    for kind in [EncodingKind::Cct1D, EncodingKind::Xy2D] {
        let enc = InputEncoding::fit(kind, train_set.iter().map(|c| &c.white))?;
        providers.push(CstProvider::Nearest(nn_build(&train_set, &enc)?));
        let cfg = TrainConfig {
            iterations,
            ..TrainConfig::default()
        };
        let out = train(&train_set, &cfg, kind)?;
        providers.push(CstProvider::Mlp(Box::new(out.model)));
    }

    println!("{:<12} {:>9} {:>9} {:>9}", "provider", "all", "off-locus", "dE");
    for p in &providers {
        let r = evaluate(&test, p)?;
        let off = r.subset(|i| i.off_locus == Some(true))?;
        println!(
            "{:<12} {:>9.4} {:>9.4} {:>9.4}",
            p.name(),
            r.angular.mean,
            off.angular.mean,
            r.delta_e.mean
        );
    }
    println!("elapsed {:.1?}", t.elapsed());
    Ok(())
}
