use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use super::config::{resolve, EvalJob, LutJob, ProviderKind, ReportJob, SplitPart, SynthJob, TrainJob};
use super::{cmd_eval, cmd_lut, cmd_report, cmd_synth, cmd_train};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "chromacal",
    version,
    about = "Camera colorimetric mapping: synthesis, training, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML or JSON file with job settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic lightbox dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        illuminants: Option<usize>,
        #[arg(long)]
        clip_margin: Option<f64>,
    },
    /// Train a CST-MLP on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = ["cct1d", "raw2d", "xy2d"])]
        encoding: Option<String>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long, value_parser = ["relu", "tanh"])]
        activation: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a provider on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        provider: Option<ProviderKind>,
        /// Model file for `mlp`, LUT file for `lut`.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Key space of the nearest-neighbor index.
        #[arg(long, value_parser = ["cct1d", "raw2d", "xy2d"])]
        encoding: Option<String>,
        #[arg(long, value_enum)]
        split: Option<SplitPart>,
        #[arg(long)]
        wp_offset_deg: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Lab reference white for ΔE2000 as X,Y,Z (default D50).
        #[arg(long, value_delimiter = ',')]
        delta_e_white: Option<Vec<f64>>,
    },
    /// Export a 2D CST-MLP as a bilinear lookup table.
    Lut {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        grid_n: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Merge evaluation reports into one ranked table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report JSON files or evaluation output directories.
        reports: Vec<PathBuf>,
    },
}

struct Flags(Map<String, Value>);

impl Flags {
    fn new(common: &Common) -> Self {
        let mut f = Self(Map::new());
        f.set("out", common.out.as_ref().map(|p| p.display().to_string()));
        f
    }

    fn set<T: Into<Value>>(&mut self, key: &str, v: Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0.insert(key.into(), v.into());
        }
        self
    }

    fn path(&mut self, key: &str, v: &Option<PathBuf>) -> &mut Self {
        self.set(key, v.as_ref().map(|p| p.display().to_string()))
    }
}

/// Resolves the job configuration and runs it, printing a short summary.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            seed,
            illuminants,
            clip_margin,
        } => {
            let mut synth = Map::new();
            if let Some(s) = seed {
                synth.insert("seed".into(), s.into());
            }
            if let Some(n) = illuminants {
                synth.insert("illuminants".into(), n.into());
            }
            if let Some(m) = clip_margin {
                synth.insert("clip_margin".into(), m.into());
            }
            let mut f = Flags::new(&common);
            if !synth.is_empty() {
                f.0.insert("synth".into(), Value::Object(synth));
            }
            let job: SynthJob = resolve(common.config.as_deref(), f.0)?;
            let ds = cmd_synth(&job)?;
            println!(
                "{} illuminants: {} charts kept, {} discarded; split {}/{}/{} -> {}",
                ds.illuminants.len(),
                ds.charts.len(),
                ds.discarded.len(),
                ds.split.train.len(),
                ds.split.val.len(),
                ds.split.test.len(),
                job.out.display()
            );
        }
        Command::Train {
            common,
            data,
            encoding,
            noise_sigma,
            hidden,
            layers,
            activation,
            lr,
            iterations,
            batch,
            seed,
        } => {
            let mut f = Flags::new(&common);
            f.path("data", &data)
                .set("encoding", encoding)
                .set("noise_sigma", noise_sigma)
                .set("hidden", hidden)
                .set("layers", layers)
                .set("activation", activation)
                .set("lr", lr)
                .set("iterations", iterations)
                .set("batch", batch)
                .set("seed", seed);
            let job: TrainJob = resolve(common.config.as_deref(), f.0)?;
            let out = cmd_train(&job)?;
            let tail = &out.loss_curve[out.loss_curve.len().saturating_sub(super::LOSS_WINDOW)..];
            println!(
                "trained {} for {} iterations, final loss {:.3e} -> {}",
                job.encoding.name(),
                job.iterations,
                tail.iter().sum::<f64>() / tail.len() as f64,
                job.out.join("model.json").display()
            );
        }
        Command::Eval {
            common,
            data,
            provider,
            artifact,
            encoding,
            split,
            wp_offset_deg,
            seed,
            delta_e_white,
        } => {
            let mut f = Flags::new(&common);
            f.path("data", &data)
                .set(
                    "provider",
                    provider.map(|p| serde_json::to_value(p).expect("enum serializes")),
                )
                .path("artifact", &artifact)
                .set("encoding", encoding)
                .set(
                    "split",
                    split.map(|s| serde_json::to_value(s).expect("enum serializes")),
                )
                .set("wp_offset_deg", wp_offset_deg)
                .set("seed", seed)
                .set("delta_e_white", delta_e_white);
            let job: EvalJob = resolve(common.config.as_deref(), f.0)?;
            let r = cmd_eval(&job)?;
            println!(
                "{}: mean angular {:.3} deg (median {:.3}), mean dE2000 {:.3} over {} charts, {} failed -> {}",
                r.provider,
                r.angular.mean,
                r.angular.p50,
                r.delta_e.mean,
                r.illuminants.len(),
                r.failed.len(),
                job.out.display()
            );
        }
        Command::Lut {
            common,
            model,
            grid_n,
            margin,
        } => {
            let mut f = Flags::new(&common);
            f.path("model", &model).set("grid_n", grid_n).set("margin", margin);
            let job: LutJob = resolve(common.config.as_deref(), f.0)?;
            let lut = cmd_lut(&job)?;
            println!(
                "{}x{} LUT, {:.2} KB of matrices -> {}",
                lut.grid_n(),
                lut.grid_n(),
                lut.size_bytes() as f64 / 1024.0,
                job.out.join("lut.json").display()
            );
        }
        Command::Report { common, reports } => {
            let mut f = Flags::new(&common);
            if !reports.is_empty() {
                let list: Vec<Value> = reports.iter().map(|p| p.display().to_string().into()).collect();
                f.0.insert("reports".into(), Value::Array(list));
            }
            let job: ReportJob = resolve(common.config.as_deref(), f.0)?;
            let table = cmd_report(&job)?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}
