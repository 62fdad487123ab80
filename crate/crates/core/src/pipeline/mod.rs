//! Applying CST providers to charts and images, LUT export and evaluation.

mod eval;
mod lut;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eval::{
    evaluate, evaluate_with_white, percentile, EvalReport, FailedIlluminant, IlluminantResult, Summary,
    DEFAULT_RESOLUTION,
};
pub use lut::{default_bounds, lut_export, lut_export_with_bounds, lut_query, Lut, LUT_MARGIN};

use crate::cct::{estimate_white_xy, interpolate_cst, CalibratedCstSet};
use crate::color::{
    apply_cst, white_balance, ChartObservation, Cst, FeatureHead, RawTriple, WhitePoint, XyzTriple, CHART_PATCHES,
};
use crate::dataset::RawImage;
use crate::error::{Error, Result};
use crate::fitting::{oracle_fit_detailed, NnIndex};
use crate::mlp::MlpModel;

/// Source of the CST for a given white point.
#[derive(Debug, Clone)]
pub enum CstProvider {
    Fixed(Cst),
    /// CCT-interpolated calibration CSTs. The CCT comes from running the
    /// iterative white-point estimate with this provider's own set.
    Interpolated(CalibratedCstSet),
    Nearest(NnIndex),
    Mlp(Box<MlpModel>),
    Lut(Box<Lut>),
    /// The per-chart optimum. Needs the chart itself, so it only serves
    /// [`correct_chart`] and [`evaluate`].
    Oracle(FeatureHead),
}

impl CstProvider {
    pub fn name(&self) -> String {
        match self {
            CstProvider::Fixed(_) => "fixed".into(),
            CstProvider::Interpolated(s) => match s.anchors().len() {
                2 => "cst2".into(),
                _ => "cst3".into(),
            },
            CstProvider::Nearest(i) => format!("nn-{}", i.encoding.kind.name()),
            CstProvider::Mlp(m) => format!("mlp-{}", m.encoding.kind.name()),
            CstProvider::Lut(l) => format!("lut{}-{}", l.grid_n(), l.encoding().kind.name()),
            CstProvider::Oracle(h) => match h {
                FeatureHead::Linear => "oracle".into(),
                h => format!("oracle-{:?}{}", h.kind(), h.size()).to_lowercase(),
            },
        }
    }

    /// The CST for white point `w`.
    pub fn cst(&self, w: &WhitePoint) -> Result<Cst> {
        match self {
            CstProvider::Fixed(t) => Ok(t.clone()),
            CstProvider::Interpolated(set) => {
                let est = estimate_white_xy(w.raw_vector(), set)?;
                Ok(interpolate_cst(est.cct.kelvin, set))
            }
            CstProvider::Nearest(idx) => idx.query(w).cloned(),
            CstProvider::Mlp(m) => m.predict_cst(w),
            CstProvider::Lut(l) => l.query(w),
            CstProvider::Oracle(_) => Err(Error::Provider(
                "the oracle needs a chart and cannot serve a bare white point".into(),
            )),
        }
    }

    /// The CST used for `obs`; the oracle fits the chart itself.
    pub fn cst_for_chart(&self, obs: &ChartObservation) -> Result<Cst> {
        match self {
            CstProvider::Oracle(head) => Ok(oracle_fit_detailed(obs, *head)?.cst),
            p => p.cst(&obs.white),
        }
    }

    /// Stored parameters as 32-bit floats.
    pub fn size_bytes(&self) -> usize {
        match self {
            CstProvider::Fixed(t) => t.entries().len() * 4,
            CstProvider::Interpolated(s) => s.anchors().len() * 9 * 4,
            CstProvider::Nearest(i) => i.len() * (9 + i.encoding.dim()) * 4,
            CstProvider::Mlp(m) => m.param_count() * 4,
            CstProvider::Lut(l) => l.size_bytes(),
            CstProvider::Oracle(_) => 0,
        }
    }

    /// Multiply-accumulates spent producing one CST. The iterative
    /// interpolation counts one 9-entry blend and one 3×3 product per
    /// iteration, bounded by the iteration cap.
    pub fn query_macs(&self) -> usize {
        match self {
            CstProvider::Fixed(_) | CstProvider::Oracle(_) => 0,
            CstProvider::Interpolated(_) => crate::cct::MAX_ITERATIONS * 18,
            CstProvider::Nearest(i) => i.len() * i.encoding.dim(),
            CstProvider::Mlp(m) => m.macs(),
            CstProvider::Lut(_) => 4 * 9,
        }
    }
}

/// White-balances every patch and maps it to XYZ with the provider's CST.
pub fn correct_chart(obs: &ChartObservation, prov: &CstProvider) -> Result<[XyzTriple; CHART_PATCHES]> {
    let t = prov
        .cst_for_chart(obs)
        .map_err(|e| e.for_illuminant(&obs.illuminant_id))?;
    apply_to_chart(obs, &t).map_err(|e| e.for_illuminant(&obs.illuminant_id))
}

pub(crate) fn apply_to_chart(obs: &ChartObservation, t: &Cst) -> Result<[XyzTriple; CHART_PATCHES]> {
    let wb = obs.white_balanced()?;
    Ok(wb.map(|p| apply_cst(p, t)))
}

/// Three-plane XYZ image, pixels in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct XyzImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl XyzImage {
    pub fn pixel(&self, x: usize, y: usize) -> XyzTriple {
        let i = 3 * (y * self.width + x);
        XyzTriple::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }
}

fn above_black(img: &RawImage, k: usize) -> RawTriple {
    let b = img.black_level;
    RawTriple::new(img.data[3 * k] - b, img.data[3 * k + 1] - b, img.data[3 * k + 2] - b)
}

/// Black-subtracts, white-balances and maps every pixel with one CST.
pub fn correct_image_single(img: &RawImage, w: &WhitePoint, prov: &CstProvider) -> Result<XyzImage> {
    let t = prov.cst(w)?;
    white_balance(RawTriple::new(1.0, 1.0, 1.0), w)?;
    let mut data = vec![0.0; img.data.len()];
    let row = 3 * img.width;
    data.par_chunks_mut(row.max(1)).enumerate().for_each(|(y, out)| {
        for x in 0..img.width {
            let p = above_black(img, y * img.width + x);
            let q = apply_cst(white_balance(p, w).expect("white checked above"), &t);
            out[3 * x..3 * x + 3].copy_from_slice(&q.to_array());
        }
    });
    Ok(XyzImage {
        width: img.width,
        height: img.height,
        data,
    })
}

/// Illuminants of a mixed scene with their per-pixel contribution maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendStack {
    pub illuminants: Vec<WhitePoint>,
    /// One row-major weight map per illuminant.
    pub maps: Vec<Vec<f64>>,
}

impl BlendStack {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let n = width * height;
        if self.illuminants.is_empty() || self.maps.len() != self.illuminants.len() {
            return Err(Error::Blending(format!(
                "{} illuminants but {} maps",
                self.illuminants.len(),
                self.maps.len()
            )));
        }
        if let Some(m) = self.maps.iter().find(|m| m.len() != n) {
            return Err(Error::Blending(format!(
                "map has {} weights, image has {n} pixels",
                m.len()
            )));
        }
        for k in 0..n {
            let mut sum = 0.0;
            for m in &self.maps {
                if !(m[k] >= 0.0 && m[k].is_finite()) {
                    return Err(Error::Blending(format!("weight {} at pixel {k} is invalid", m[k])));
                }
                sum += m[k];
            }
            if (sum - 1.0).abs() > 1e-4 {
                return Err(Error::Blending(format!("weights at pixel {k} sum to {sum}")));
            }
        }
        Ok(())
    }
}

/// Mixed-illuminant correction: each pixel is white-balanced with its own
/// white from `illum_map`, every illuminant's CST is applied globally and
/// the results are blended by the stack's maps.
pub fn correct_image_multi(
    img: &RawImage,
    stack: &BlendStack,
    illum_map: &[WhitePoint],
    prov: &CstProvider,
) -> Result<XyzImage> {
    stack.validate(img.width, img.height)?;
    if illum_map.len() != img.width * img.height {
        return Err(Error::Blending(format!(
            "illuminant map has {} entries, image has {} pixels",
            illum_map.len(),
            img.width * img.height
        )));
    }
    let csts = stack
        .illuminants
        .iter()
        .map(|w| prov.cst(w))
        .collect::<Result<Vec<_>>>()?;
    let wb = (0..illum_map.len())
        .into_par_iter()
        .map(|k| white_balance(above_black(img, k), &illum_map[k]))
        .collect::<Result<Vec<_>>>()?;
    let mut data = vec![0.0; img.data.len()];
    data.par_chunks_mut(3).enumerate().for_each(|(k, out)| {
        let mut acc = [0.0; 3];
        for (t, m) in csts.iter().zip(&stack.maps) {
            let b = m[k];
            if b == 0.0 {
                continue;
            }
            let q = apply_cst(wb[k], t).to_array();
            for c in 0..3 {
                acc[c] += b * q[c];
            }
        }
        out.copy_from_slice(&acc);
    });
    Ok(XyzImage {
        width: img.width,
        height: img.height,
        data,
    })
}
