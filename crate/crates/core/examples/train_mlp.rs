//! Trains a 2D-xy CST-MLP, saves it and queries it at a few white points.
//!
//! Usage: `train_mlp [iterations] [out.json]`.

use chromacal::dataset::{synthesize_dataset, SynthConfig};
use chromacal::mlp::{train, EncodingKind, MlpModel, TrainConfig};

fn main() -> chromacal::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args
        .next()
        .map(|s| s.parse().expect("iterations must be an integer"))
        .unwrap_or(20_000);
    let out = args
        .next()
        .unwrap_or_else(|| std::env::temp_dir().join("cst_mlp.json").display().to_string());

    let ds = synthesize_dataset(&SynthConfig::default())?;
    let cfg = TrainConfig {
        iterations,
        ..TrainConfig::default()
    };
    let result = train(&ds.train(), &cfg, EncodingKind::Xy2D)?;
    for (k, chunk) in result.loss_curve.chunks(iterations.div_ceil(10).max(1)).enumerate() {
        println!(
            "window {k}: mean loss {:.3e}",
            chunk.iter().sum::<f64>() / chunk.len() as f64
        );
    }
    let model = result.model;
    println!("{} parameters, {} MACs per query", model.param_count(), model.macs());
    model.save(std::path::Path::new(&out))?;
    let back = MlpModel::load(std::path::Path::new(&out))?;
    for c in ds.val().iter().take(3) {
        println!("{}: {:?}", c.illuminant_id, back.predict_cst(&c.white)?.as_linear());
    }
    println!("saved {out}");
    Ok(())
}
