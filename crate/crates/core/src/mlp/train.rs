use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::color::ChartObservation;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

use super::loss::accumulate;
use super::{Architecture, EncodingKind, InputEncoding, MlpModel, TrainSample};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const DEFAULT_BATCH_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub noise_sigma: f64,
    /// Observations per step; `None` means `min(64, dataset size)`.
    pub batch: Option<usize>,
    pub seed: u64,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 100_000,
            lr: 1e-3,
            noise_sigma: 0.05,
            batch: None,
            seed: 0,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.batch == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.arch.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub iterations: usize,
    pub noise_sigma: f64,
    pub lr: f64,
    pub batch: usize,
    pub train_size: usize,
    pub dataset_fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean batch loss of every step.
    pub loss_curve: Vec<f64>,
}

/// SHA-256 over illuminant ids, raw patches, white points and reference XYZ.
pub fn dataset_fingerprint(data: &[ChartObservation]) -> String {
    let mut h = Sha256::new();
    for obs in data {
        h.update(obs.illuminant_id.as_bytes());
        h.update([0u8]);
        for p in &obs.patches_raw {
            p.to_array().iter().for_each(|v| h.update(v.to_le_bytes()));
        }
        h.update(obs.white.raw.a.to_le_bytes());
        h.update(obs.white.raw.b.to_le_bytes());
        for g in &obs.gt_xyz {
            g.to_array().iter().for_each(|v| h.update(v.to_le_bytes()));
        }
    }
    hex::encode(h.finalize())
}

/// Trains a CST-MLP with Adam on the cosine loss. Each step draws a batch with
/// replacement, jitters the normalized inputs with Gaussian noise, and takes
/// one update with the analytic gradient.
pub fn train(dataset: &[ChartObservation], cfg: &TrainConfig, kind: EncodingKind) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let encoding = InputEncoding::fit(kind, dataset.iter().map(|o| &o.white))?;
    let samples = dataset
        .iter()
        .map(|o| TrainSample::from_observation(o, &encoding).map_err(|e| e.for_illuminant(&o.illuminant_id)))
        .collect::<Result<Vec<_>>>()?;

    let mut init_rng = stream(cfg.seed, Stream::WeightInit);
    let mut batch_rng = stream(cfg.seed, Stream::BatchSampling);
    let mut noise_rng = stream(cfg.seed, Stream::InputNoise);

    let mut model = MlpModel::init(encoding, cfg.arch, &mut init_rng)?;
    let batch = cfg.batch.unwrap_or(DEFAULT_BATCH_CAP.min(samples.len()));
    let n_params = model.param_count();
    let mut params = model.params();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut z = vec![0.0; kind.dim()];
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    let w = 1.0 / batch as f64;

    for it in 1..=cfg.iterations {
        grad.fill(0.0);
        let mut loss = 0.0;
        for _ in 0..batch {
            let s = &samples[batch_rng.random_range(0..samples.len())];
            z.copy_from_slice(&s.z);
            if cfg.noise_sigma > 0.0 {
                for zi in &mut z {
                    let e: f64 = noise_rng.sample(StandardNormal);
                    *zi += cfg.noise_sigma * e;
                }
            }
            loss += w * accumulate(&model, &z, s, w, &mut grad).map_err(|e| Error::TrainingDivergence {
                iteration: it,
                reason: e.to_string(),
            })?;
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDivergence {
                iteration: it,
                reason: "non-finite loss or gradient".into(),
            });
        }
        loss_curve.push(loss);

        let b1 = 1.0 - ADAM_BETA1.powi(it as i32);
        let b2 = 1.0 - ADAM_BETA2.powi(it as i32);
        for k in 0..n_params {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * grad[k];
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
            params[k] -= cfg.lr * (m[k] / b1) / ((v[k] / b2).sqrt() + ADAM_EPS);
        }
        model.set_params(&params)?;
    }

    model.meta = Some(TrainMeta {
        seed: cfg.seed,
        iterations: cfg.iterations,
        noise_sigma: cfg.noise_sigma,
        lr: cfg.lr,
        batch,
        train_size: dataset.len(),
        dataset_fingerprint: dataset_fingerprint(dataset),
    });
    Ok(TrainOutcome { model, loss_curve })
}
