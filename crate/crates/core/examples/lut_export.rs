//! Bakes a trained 2D CST-MLP into bilinear lookup tables of several sizes
//! and compares their test error with the network.

use chromacal::dataset::{synthesize_dataset, SynthConfig};
use chromacal::mlp::{train, EncodingKind, TrainConfig};
use chromacal::pipeline::{evaluate, lut_export, CstProvider};

fn main() -> chromacal::Result<()> {
    let ds = synthesize_dataset(&SynthConfig::default())?;
    let cfg = TrainConfig {
        iterations: 20_000,
        ..TrainConfig::default()
    };
    let model = train(&ds.train(), &cfg, EncodingKind::Xy2D)?.model;
    let test = ds.test();
    let base = evaluate(&test, &CstProvider::Mlp(Box::new(model.clone())))?;
    println!("mlp: {:.4} deg, {} bytes", base.angular.mean, base.size_bytes);
    for n in [5, 10, 20, 40] {
        let lut = lut_export(&model, n)?;
        let r = evaluate(&test, &CstProvider::Lut(Box::new(lut)))?;
        println!(
            "{n}x{n} LUT: {:.4} deg ({:+.4}), {:.1} KB",
            r.angular.mean,
            r.angular.mean - base.angular.mean,
            r.size_bytes as f64 / 1024.0
        );
    }
    Ok(())
}
