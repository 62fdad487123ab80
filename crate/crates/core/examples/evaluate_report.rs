//! Evaluates several providers on the test split and prints the merged
//! ranked table the `report` command writes.

use chromacal::color::FeatureHead;
use chromacal::dataset::{synthesize_dataset, SynthConfig};
use chromacal::fitting::nn_build;
use chromacal::jobs::ReportTable;
use chromacal::mlp::{EncodingKind, InputEncoding};
use chromacal::pipeline::{evaluate, CstProvider};

fn main() -> chromacal::Result<()> {
    let ds = synthesize_dataset(&SynthConfig::default())?;
    let (train_set, test) = (ds.train(), ds.test());
    let enc = InputEncoding::fit(EncodingKind::Xy2D, train_set.iter().map(|c| &c.white))?;
    let providers = [
        CstProvider::Interpolated(ds.calibration_two.clone()),
        CstProvider::Interpolated(ds.calibration_three.clone()),
        CstProvider::Nearest(nn_build(&train_set, &enc)?),
        CstProvider::Oracle(FeatureHead::Linear),
    ];
    let reports = providers
        .iter()
        .map(|p| evaluate(&test, p))
        .collect::<chromacal::Result<Vec<_>>>()?;
    let table = ReportTable::from_reports(&reports)?;
    print!("{}", table.to_text());
    let worst = &reports[0]
        .illuminants
        .iter()
        .max_by(|a, b| a.angular_mean.total_cmp(&b.angular_mean));
    if let Some(w) = worst {
        println!(
            "hardest chart for {}: {} ({:.2} deg)",
            reports[0].provider, w.illuminant_id, w.angular_mean
        );
    }
    Ok(())
}
