use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{correct_chart, CstProvider};
use crate::cct::cct_lookup;
use crate::color::{angular_error, chart_delta_e_with_white, ChartObservation, XyzTriple, CHART_PATCHES, D50_WHITE};
use crate::error::{Error, Result};

/// Image size used for the per-image MACs estimate (12 MP).
pub const DEFAULT_RESOLUTION: (usize, usize) = (4032, 3024);

/// Percentile `q ∈ [0, 1]` of `values` by linear interpolation between
/// order statistics (inclusive rule).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let f = pos - lo as f64;
    if f == 0.0 {
        v[lo]
    } else {
        v[lo] + f * (v[hi] - v[lo])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("cannot summarize an empty set".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p25: percentile_sorted(&v, 0.25),
            p50: percentile_sorted(&v, 0.50),
            p75: percentile_sorted(&v, 0.75),
            p90: percentile_sorted(&v, 0.90),
        })
    }

    pub fn as_row(&self) -> [f64; 5] {
        [self.mean, self.p25, self.p50, self.p75, self.p90]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminantResult {
    pub illuminant_id: String,
    pub cct: Option<f64>,
    pub xy: Option<[f64; 2]>,
    pub off_locus: Option<bool>,
    /// Mean angular error over the chart, degrees.
    pub angular_mean: f64,
    pub delta_e: f64,
    pub patch_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedIlluminant {
    pub illuminant_id: String,
    pub reason: String,
}

/// Per-illuminant and summary errors of one provider on one test set.
/// Summaries run over per-illuminant means of the illuminants that did not
/// fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provider: String,
    pub size_bytes: usize,
    pub query_macs: usize,
    pub resolution: (usize, usize),
    /// CST query plus a 3×3 product per pixel, in millions.
    pub image_mmacs: f64,
    pub angular: Summary,
    pub delta_e: Summary,
    pub illuminants: Vec<IlluminantResult>,
    pub failed: Vec<FailedIlluminant>,
}

fn evaluate_one(obs: &ChartObservation, prov: &CstProvider, white: XyzTriple) -> Result<IlluminantResult> {
    let pred = correct_chart(obs, prov)?;
    let patch_errors = pred
        .iter()
        .zip(&obs.gt_xyz)
        .map(|(p, g)| angular_error(*p, *g))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.for_illuminant(&obs.illuminant_id))?;
    let delta_e =
        chart_delta_e_with_white(&pred, &obs.gt_xyz, white).map_err(|e| e.for_illuminant(&obs.illuminant_id))?;
    Ok(IlluminantResult {
        illuminant_id: obs.illuminant_id.clone(),
        cct: obs.white.cct,
        xy: obs.white.xy.map(|c| c.to_array()),
        off_locus: obs.white.xy.map(|c| cct_lookup(c).off_locus),
        angular_mean: patch_errors.iter().sum::<f64>() / CHART_PATCHES as f64,
        delta_e,
        patch_errors,
    })
}

/// Evaluates `prov` on every chart. Charts are processed in illuminant-id
/// order; a chart that fails is listed in `failed` and left out of the
/// summaries.
pub fn evaluate(test: &[ChartObservation], prov: &CstProvider) -> Result<EvalReport> {
    evaluate_with_white(test, prov, D50_WHITE)
}

/// [`evaluate`] with ΔE2000 computed under the given Lab reference white.
pub fn evaluate_with_white(test: &[ChartObservation], prov: &CstProvider, white: XyzTriple) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Config("evaluation needs a non-empty test set".into()));
    }
    let mut order: Vec<&ChartObservation> = test.iter().collect();
    order.sort_by(|a, b| a.illuminant_id.cmp(&b.illuminant_id));
    let outcomes: Vec<_> = order.par_iter().map(|o| evaluate_one(o, prov, white)).collect();
    let mut illuminants = Vec::new();
    let mut failed = Vec::new();
    for (o, r) in order.iter().zip(outcomes) {
        match r {
            Ok(r) => illuminants.push(r),
            Err(e) => failed.push(FailedIlluminant {
                illuminant_id: o.illuminant_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    if illuminants.is_empty() {
        return Err(Error::Provider(format!(
            "every illuminant failed; first: {}",
            failed[0].reason
        )));
    }
    let (w, h) = DEFAULT_RESOLUTION;
    let query_macs = prov.query_macs();
    EvalReport::new(
        prov.name(),
        prov.size_bytes(),
        query_macs,
        DEFAULT_RESOLUTION,
        (query_macs + w * h * 9) as f64 / 1e6,
        illuminants,
        failed,
    )
}

impl EvalReport {
    pub fn new(
        provider: String,
        size_bytes: usize,
        query_macs: usize,
        resolution: (usize, usize),
        image_mmacs: f64,
        illuminants: Vec<IlluminantResult>,
        failed: Vec<FailedIlluminant>,
    ) -> Result<Self> {
        let ang: Vec<f64> = illuminants.iter().map(|r| r.angular_mean).collect();
        let de: Vec<f64> = illuminants.iter().map(|r| r.delta_e).collect();
        Ok(Self {
            provider,
            size_bytes,
            query_macs,
            resolution,
            image_mmacs,
            angular: Summary::of(&ang)?,
            delta_e: Summary::of(&de)?,
            illuminants,
            failed,
        })
    }

    /// The same report restricted to the illuminants accepted by `keep`.
    pub fn subset(&self, keep: impl Fn(&IlluminantResult) -> bool) -> Result<Self> {
        Self::new(
            self.provider.clone(),
            self.size_bytes,
            self.query_macs,
            self.resolution,
            self.image_mmacs,
            self.illuminants.iter().filter(|r| keep(r)).cloned().collect(),
            self.failed.clone(),
        )
    }

    pub fn ids(&self) -> Vec<&str> {
        self.illuminants
            .iter()
            .map(|r| r.illuminant_id.as_str())
            .chain(self.failed.iter().map(|f| f.illuminant_id.as_str()))
            .collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        crate::dataset::write_json(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        crate::dataset::read_json(path)
    }

    /// One row per illuminant: id, cct, x, y, off_locus, angular_mean, delta_e.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let res = (|| -> csv::Result<()> {
            w.write_record(["id", "cct", "x", "y", "off_locus", "angular_mean", "delta_e"])?;
            for r in &self.illuminants {
                w.write_record([
                    r.illuminant_id.clone(),
                    opt(r.cct),
                    opt(r.xy.map(|p| p[0])),
                    opt(r.xy.map(|p| p[1])),
                    r.off_locus.map(|b| b.to_string()).unwrap_or_default(),
                    r.angular_mean.to_string(),
                    r.delta_e.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(|e| Error::format(path, e))
    }

    /// Per-patch angular errors, one row per illuminant.
    pub fn write_patch_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
        let res = (|| -> csv::Result<()> {
            let mut header = vec!["id".to_string()];
            header.extend((0..CHART_PATCHES).map(|i| format!("patch_{i:02}")));
            w.write_record(&header)?;
            for r in &self.illuminants {
                let mut row = vec![r.illuminant_id.clone()];
                row.extend(r.patch_errors.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(|e| Error::format(path, e))
    }

    /// Writes `report.json`, `report.csv` and `patches.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.save_json(&dir.join("report.json"))?;
        self.write_csv(&dir.join("report.csv"))?;
        self.write_patch_csv(&dir.join("patches.csv"))
    }
}
