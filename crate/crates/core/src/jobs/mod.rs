//! Reproducible jobs behind the command-line tool: synthesis, training,
//! evaluation, LUT export and report tables.

mod cli;
mod config;
mod report;

use std::path::Path;

pub use cli::{run, Cli, Command};
pub use config::{
    echo_config, resolve, EvalJob, LutJob, ProviderKind, ReportJob, SplitPart, SynthJob, TrainJob, RESOLVED_CONFIG,
};
pub use report::{cmd_report, rank_marks, ReportTable};

use crate::cct::white_raw_to_xy;
use crate::color::{ChartObservation, FeatureHead, XyzTriple};
use crate::dataset::{files, perturb_white_with, synthesize_dataset, white_angle, DatasetFiles, SyntheticDataset};
use crate::error::{Error, Result};
use crate::fitting::nn_build;
use crate::mlp::{train, Architecture, InputEncoding, MlpModel, TrainConfig, TrainOutcome};
use crate::pipeline::{evaluate_with_white, lut_export_with_bounds, CstProvider, EvalReport, Lut};
use crate::rng::{stream, Stream};

/// Steps averaged into one row of `loss.csv`.
pub const LOSS_WINDOW: usize = 100;

fn check_dataset_dir(dir: &Path) -> Result<()> {
    if !dir.join(files::CHARTS).is_file() {
        return Err(Error::format(
            dir.join(files::CHARTS),
            "dataset not found; run `chromacal synth --out <dir>` first",
        ));
    }
    Ok(())
}

/// Generates the synthetic dataset and writes it to `job.out`.
pub fn cmd_synth(job: &SynthJob) -> Result<SyntheticDataset> {
    let ds = synthesize_dataset(&job.synth)?;
    ds.save(&job.out)?;
    echo_config(&job.out, job)?;
    Ok(ds)
}

/// Trains a CST-MLP on the training split and writes `model.json` and
/// `loss.csv`.
pub fn cmd_train(job: &TrainJob) -> Result<TrainOutcome> {
    check_dataset_dir(&job.data)?;
    let data = DatasetFiles::load(&job.data)?;
    let cfg = TrainConfig {
        iterations: job.iterations,
        lr: job.lr,
        noise_sigma: job.noise_sigma,
        batch: job.batch,
        seed: job.seed,
        arch: Architecture {
            hidden: job.hidden,
            layers: job.layers,
            activation: job.activation,
        },
    };
    let out = train(&data.train(), &cfg, job.encoding)?;
    echo_config(&job.out, job)?;
    out.model.save(&job.out.join("model.json"))?;
    let mut csv = String::from("iteration,loss\n");
    for (k, chunk) in out.loss_curve.chunks(LOSS_WINDOW).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        csv.push_str(&format!("{},{}\n", k * LOSS_WINDOW + chunk.len(), mean));
    }
    std::fs::write(job.out.join("loss.csv"), csv).map_err(|e| Error::io(&job.out, e))?;
    Ok(out)
}

/// Builds the provider an evaluation job asks for.
pub fn build_provider(job: &EvalJob, data: &DatasetFiles) -> Result<CstProvider> {
    let artifact = || {
        job.artifact
            .as_deref()
            .ok_or_else(|| Error::Config(format!("provider {} needs --artifact", job.provider.name())))
    };
    Ok(match job.provider {
        ProviderKind::Cst2 => CstProvider::Interpolated(data.calibration_two.clone()),
        ProviderKind::Cst3 => CstProvider::Interpolated(data.calibration_three.clone()),
        ProviderKind::Oracle => CstProvider::Oracle(FeatureHead::Linear),
        ProviderKind::Nn => {
            let train = data.train();
            let enc = InputEncoding::fit(job.encoding, train.iter().map(|c| &c.white))?;
            CstProvider::Nearest(nn_build(&train, &enc)?)
        }
        ProviderKind::Mlp => CstProvider::Mlp(Box::new(MlpModel::load(artifact()?)?)),
        ProviderKind::Lut => CstProvider::Lut(Box::new(Lut::load(artifact()?)?)),
    })
}

/// Rotates every chart's raw white point by `offset_deg` and re-derives xy
/// and CCT with the three-anchor calibration. Charts are visited in id
/// order on one seeded stream. Returns the measured offsets.
pub fn perturb_charts(
    charts: &mut [ChartObservation],
    offset_deg: f64,
    seed: u64,
    data: &DatasetFiles,
) -> Result<Vec<(String, f64)>> {
    charts.sort_by(|a, b| a.illuminant_id.cmp(&b.illuminant_id));
    let mut rng = stream(seed, Stream::WhitePerturbation);
    let mut measured = Vec::with_capacity(charts.len());
    for c in charts.iter_mut() {
        if offset_deg == 0.0 {
            measured.push((c.illuminant_id.clone(), 0.0));
            continue;
        }
        let p = perturb_white_with(&c.white, offset_deg, &mut rng).map_err(|e| e.for_illuminant(&c.illuminant_id))?;
        measured.push((c.illuminant_id.clone(), white_angle(&c.white, &p)?));
        // A white the calibration cannot place keeps only its raw form; the
        // providers that need xy then report it as failed.
        c.white = white_raw_to_xy(&p, &data.calibration_three).unwrap_or(p);
    }
    Ok(measured)
}

/// Evaluates a provider on one split and writes `report.json`,
/// `report.csv`, `patches.csv` and `white_offsets.csv`.
pub fn cmd_eval(job: &EvalJob) -> Result<EvalReport> {
    if !(job.wp_offset_deg >= 0.0 && job.wp_offset_deg.is_finite()) {
        return Err(Error::Config(format!(
            "white-point offset must be >= 0, got {}",
            job.wp_offset_deg
        )));
    }
    check_dataset_dir(&job.data)?;
    let data = DatasetFiles::load(&job.data)?;
    let prov = build_provider(job, &data)?;
    let mut charts = match job.split {
        SplitPart::Train => data.train(),
        SplitPart::Val => data.val(),
        SplitPart::Test => data.test(),
    };
    let offsets = perturb_charts(&mut charts, job.wp_offset_deg, job.seed, &data)?;
    let [x, y, z] = job.delta_e_white;
    if !([x, y, z].iter().all(|v| *v > 0.0 && v.is_finite())) {
        return Err(Error::Config(format!(
            "ΔE reference white must be positive, got {:?}",
            job.delta_e_white
        )));
    }
    let report = evaluate_with_white(&charts, &prov, XyzTriple::new(x, y, z))?;
    echo_config(&job.out, job)?;
    report.save(&job.out)?;
    let mut csv = String::from("id,requested_deg,measured_deg\n");
    for (id, m) in &offsets {
        csv.push_str(&format!("{id},{},{m}\n", job.wp_offset_deg));
    }
    std::fs::write(job.out.join("white_offsets.csv"), csv).map_err(|e| Error::io(&job.out, e))?;
    Ok(report)
}

/// Samples a 2D model into `lut.json`.
pub fn cmd_lut(job: &LutJob) -> Result<Lut> {
    if !(job.margin >= 0.0 && job.margin.is_finite()) {
        return Err(Error::Config(format!("LUT margin must be >= 0, got {}", job.margin)));
    }
    let model = MlpModel::load(&job.model)?;
    let m = job.margin;
    let lut = lut_export_with_bounds(&model, job.grid_n, [[-m, 1.0 + m]; 2])?;
    echo_config(&job.out, job)?;
    lut.save(&job.out.join("lut.json"))?;
    Ok(lut)
}
