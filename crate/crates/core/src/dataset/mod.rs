//! Spectra, raw images, patch extraction and the synthetic LED lightbox.

mod image;
mod spectrum;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use image::{
    clip_filter, extract_patches, read_tensor, sidecar_path, synthesize_capture, write_tensor, Capture, ChartLayout,
    Levels, RawImage,
};
pub use spectrum::{planck_spd, render_patch, render_xyz, NamedSpectra, SpectralBundle, Spectrum};
pub use synth::{
    build_observation, chart_gt_xyz, dirichlet_weights, illuminant_id, perturb_white, perturb_white_with,
    sample_dirichlet_illuminants, select, split_dataset, synthesize_dataset, white_angle, Discard, LedBank,
    SampledIlluminant, SplitSpec, SynthConfig, SyntheticCamera, SyntheticDataset, ANCHOR_CCTS, LED_COUNT,
};

use crate::cct::{white_raw_to_xy, CalibratedCstSet};
use crate::color::{ChartObservation, Chromaticity2D, RawTriple, WhitePoint, XyzTriple, CHART_PATCHES};
use crate::error::{Error, Result};

/// On-disk form of one chart observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRecord {
    pub illuminant_id: String,
    /// Raw white point `[r/g, b/g]`.
    pub white: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xy: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cct: Option<f64>,
    pub patches_raw: Vec<[f64; 3]>,
    pub gt_xyz: Vec<[f64; 3]>,
}

impl From<&ChartObservation> for ChartRecord {
    fn from(c: &ChartObservation) -> Self {
        Self {
            illuminant_id: c.illuminant_id.clone(),
            white: c.white.raw.to_array(),
            xy: c.white.xy.map(|p| p.to_array()),
            cct: c.white.cct,
            patches_raw: c.patches_raw.iter().map(|p| p.to_array()).collect(),
            gt_xyz: c.gt_xyz.iter().map(|p| p.to_array()).collect(),
        }
    }
}

fn twenty_four<T: Copy + Default>(
    v: &[[f64; 3]],
    f: impl Fn([f64; 3]) -> Result<T>,
    what: &str,
) -> Result<[T; CHART_PATCHES]> {
    if v.len() != CHART_PATCHES {
        return Err(Error::Config(format!(
            "{what} has {} entries, expected {CHART_PATCHES}",
            v.len()
        )));
    }
    let mut out = [T::default(); CHART_PATCHES];
    for (o, p) in out.iter_mut().zip(v) {
        *o = f(*p)?;
    }
    Ok(out)
}

impl TryFrom<ChartRecord> for ChartObservation {
    type Error = Error;

    fn try_from(r: ChartRecord) -> Result<Self> {
        let patches_raw = twenty_four(&r.patches_raw, |p| RawTriple::checked(p[0], p[1], p[2]), "patches_raw")?;
        let gt_xyz = twenty_four(
            &r.gt_xyz,
            |p| {
                if p.iter().all(|v| v.is_finite()) {
                    Ok(XyzTriple::from(p))
                } else {
                    Err(Error::DegenerateColor("non-finite gt_xyz".into()))
                }
            },
            "gt_xyz",
        )?;
        let mut white = WhitePoint::from_raw(r.white[0], r.white[1])?;
        if let (Some(xy), Some(cct)) = (r.xy, r.cct) {
            white = white.with_derived(Chromaticity2D::xy(xy[0], xy[1])?, cct)?;
        }
        Ok(ChartObservation {
            illuminant_id: r.illuminant_id,
            patches_raw,
            white,
            gt_xyz,
        })
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Writes a JSON array of chart records.
pub fn save_charts(path: &Path, charts: &[ChartObservation]) -> Result<()> {
    let recs: Vec<ChartRecord> = charts.iter().map(ChartRecord::from).collect();
    write_json(path, &recs)
}

/// Reads a JSON array of chart records. Charts stored without xy/CCT get
/// them from `calibration` when one is given.
pub fn load_charts(path: &Path, calibration: Option<&CalibratedCstSet>) -> Result<Vec<ChartObservation>> {
    let recs: Vec<ChartRecord> = read_json(path)?;
    recs.into_iter()
        .map(|r| {
            let id = r.illuminant_id.clone();
            let mut c = ChartObservation::try_from(r).map_err(|e| Error::format(path, e.for_illuminant(&id)))?;
            if let (None, Some(set)) = (c.white.xy, calibration) {
                c.white = white_raw_to_xy(&c.white, set).map_err(|e| e.for_illuminant(&id))?;
            }
            Ok(c)
        })
        .collect()
}

impl SplitSpec {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: Self = read_json(path)?;
        s.validate().map_err(|e| Error::format(path, e))?;
        Ok(s)
    }
}

impl CalibratedCstSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// File names inside a dataset directory written by [`SyntheticDataset::save`].
pub mod files {
    pub const CHARTS: &str = "charts.json";
    pub const SPLIT: &str = "split.json";
    pub const DISCARDED: &str = "discarded.json";
    pub const DISCARDED_CHARTS: &str = "discarded_charts.json";
    pub const ILLUMINANTS: &str = "illuminants.json";
    pub const SPDS: &str = "illuminant_spds.json";
    pub const CALIBRATION_TWO: &str = "calibration_two.json";
    pub const CALIBRATION_THREE: &str = "calibration_three.json";
    pub const ANCHOR_CHARTS: &str = "anchor_charts.json";
    pub const LED_IMAGES: &str = "led_images";
}

impl SyntheticDataset {
    /// Writes charts, split, illuminant weights and SPDs, calibration sets
    /// and the single-LED chart images into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join(files::LED_IMAGES)).map_err(|e| Error::io(dir, e))?;
        save_charts(&dir.join(files::CHARTS), &self.charts)?;
        self.split.save(&dir.join(files::SPLIT))?;
        let reasons: Vec<DiscardRecord> = self
            .discarded
            .iter()
            .map(|d| DiscardRecord {
                illuminant_id: d.illuminant_id.clone(),
                reason: d.reason.clone(),
            })
            .collect();
        write_json(&dir.join(files::DISCARDED), &reasons)?;
        let dropped: Vec<ChartObservation> = self.discarded.iter().filter_map(|d| d.chart.clone()).collect();
        save_charts(&dir.join(files::DISCARDED_CHARTS), &dropped)?;
        write_json(&dir.join(files::ILLUMINANTS), &self.illuminants)?;
        let spds = self
            .illuminants
            .iter()
            .map(|i| Ok((i.id.clone(), self.bank.mix(&i.weights)?)))
            .collect::<Result<Vec<_>>>()?;
        SpectralBundle::from_spectra(spds)?.save(&dir.join(files::SPDS))?;
        self.calibration_two.save(&dir.join(files::CALIBRATION_TWO))?;
        self.calibration_three.save(&dir.join(files::CALIBRATION_THREE))?;
        save_charts(&dir.join(files::ANCHOR_CHARTS), &self.anchor_charts)?;
        for (name, img) in self.bank.names.iter().zip(&self.led_images) {
            img.save(&dir.join(files::LED_IMAGES).join(format!("{name}.tensor")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardRecord {
    pub illuminant_id: String,
    pub reason: String,
}

/// The parts of a dataset directory needed by training and evaluation.
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub charts: Vec<ChartObservation>,
    pub split: SplitSpec,
    pub calibration_two: CalibratedCstSet,
    pub calibration_three: CalibratedCstSet,
}

impl DatasetFiles {
    pub fn load(dir: &Path) -> Result<Self> {
        let calibration_three = CalibratedCstSet::load(&dir.join(files::CALIBRATION_THREE))?;
        Ok(Self {
            charts: load_charts(&dir.join(files::CHARTS), Some(&calibration_three))?,
            split: SplitSpec::load(&dir.join(files::SPLIT))?,
            calibration_two: CalibratedCstSet::load(&dir.join(files::CALIBRATION_TWO))?,
            calibration_three,
        })
    }

    pub fn train(&self) -> Vec<ChartObservation> {
        select(&self.charts, &self.split.train)
    }

    pub fn val(&self) -> Vec<ChartObservation> {
        select(&self.charts, &self.split.val)
    }

    pub fn test(&self) -> Vec<ChartObservation> {
        select(&self.charts, &self.split.test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::WHITE_PATCH_INDEX;

    #[test]
    fn chart_record_round_trip() {
        let mut p = [RawTriple::new(0.2, 0.3, 0.4); CHART_PATCHES];
        p[WHITE_PATCH_INDEX] = RawTriple::new(0.5, 0.6, 0.3);
        let obs = build_observation("x", p, WHITE_PATCH_INDEX, chart_gt_xyz()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        save_charts(&path, std::slice::from_ref(&obs)).unwrap();
        assert_eq!(load_charts(&path, None).unwrap(), vec![obs]);
    }

    #[test]
    fn malformed_chart_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"[{"illuminant_id":"a","white":[1,1],"patches_raw":[[1,1,1]],"gt_xyz":[]}]"#,
        )
        .unwrap();
        assert!(matches!(load_charts(&path, None), Err(Error::Format { .. })));
    }
}
