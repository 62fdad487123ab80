use crate::color::{angular_error, apply_cst, dot, norm, ChartObservation, Cst, RawTriple, XyzTriple, CHART_PATCHES};
use crate::error::{Error, Result};

use super::{assemble_cst, InputEncoding, MlpModel, FREE_POSITIONS};

/// One training chart in the form the network consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    /// Normalized encoding of the white point.
    pub z: Vec<f64>,
    /// White-balanced patches.
    pub x: [RawTriple; CHART_PATCHES],
    pub gt: [XyzTriple; CHART_PATCHES],
}

impl TrainSample {
    pub fn from_observation(obs: &ChartObservation, enc: &InputEncoding) -> Result<Self> {
        Ok(Self {
            z: enc.encode(&obs.white)?,
            x: obs.white_balanced()?,
            gt: obs.gt_xyz,
        })
    }

    /// Mean angular error of the chart under the model's prediction.
    pub fn angular_error(&self, model: &MlpModel) -> Result<f64> {
        let t = assemble_cst(&model.forward_encoded(&self.z));
        let mut total = 0.0;
        for (x, g) in self.x.iter().zip(&self.gt) {
            total += angular_error(apply_cst(*x, &t), *g)?;
        }
        Ok(total / CHART_PATCHES as f64)
    }
}

/// Mean of `1 − cos` over corresponding patch vectors.
pub fn cosine_loss(pred: &[XyzTriple; CHART_PATCHES], gt: &[XyzTriple; CHART_PATCHES]) -> Result<f64> {
    let mut total = 0.0;
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        let (p, g) = (p.to_array(), g.to_array());
        let (np, ng) = (norm(p), norm(g));
        if !(np > 0.0 && ng > 0.0) {
            return Err(Error::DegeneratePatch { index: i });
        }
        total += 1.0 - dot(p, g) / (np * ng);
    }
    Ok(total / CHART_PATCHES as f64)
}

/// Cosine loss of `t` on one chart and its gradient with respect to the nine
/// entries of `t` (row-major).
pub fn cosine_loss_grad(
    t: &Cst,
    x: &[RawTriple; CHART_PATCHES],
    gt: &[XyzTriple; CHART_PATCHES],
) -> Result<(f64, [f64; 9])> {
    let mut loss = 0.0;
    let mut grad = [0.0; 9];
    let n = CHART_PATCHES as f64;
    for (i, (xi, gi)) in x.iter().zip(gt).enumerate() {
        let p = apply_cst(*xi, t).to_array();
        let g = gi.to_array();
        let (np, ng) = (norm(p), norm(g));
        if !(np > 0.0 && ng > 0.0) {
            return Err(Error::DegeneratePatch { index: i });
        }
        let c = dot(p, g) / (np * ng);
        loss += 1.0 - c;
        let xa = xi.to_array();
        for r in 0..3 {
            // d(1 − c)/dp = −(ĝ − c·p̂) / |p|
            let dp = -(g[r] / ng - c * p[r] / np) / np;
            for (k, xk) in xa.iter().enumerate() {
                grad[3 * r + k] += dp * xk / n;
            }
        }
    }
    Ok((loss / n, grad))
}

/// Loss and parameter gradient of one sample at encoded input `z`, with the
/// gradient accumulated into `grad` scaled by `weight`.
pub(crate) fn accumulate(
    model: &MlpModel,
    z: &[f64],
    sample: &TrainSample,
    weight: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let trace = model.forward_trace(z);
    let t = assemble_cst(&trace.out);
    let (loss, dt) = cosine_loss_grad(&t, &sample.x, &sample.gt)?;
    let d_out: [f64; 8] = std::array::from_fn(|i| weight * dt[FREE_POSITIONS[i]]);
    model.backward(&trace, &d_out, grad);
    Ok(loss)
}

/// Mean cosine loss over `samples` and its gradient with respect to
/// [`MlpModel::params`]. No input noise is applied.
pub fn loss_and_gradient(model: &MlpModel, samples: &[TrainSample]) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut grad = vec![0.0; model.param_count()];
    let w = 1.0 / samples.len() as f64;
    let mut loss = 0.0;
    for s in samples {
        loss += w * accumulate(model, &s.z, s, w, &mut grad)?;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> [XyzTriple; CHART_PATCHES] {
        std::array::from_fn(|i| XyzTriple::new(0.2 + 0.01 * i as f64, 0.3, 0.1 + 0.02 * i as f64))
    }

    #[test]
    fn loss_values() {
        let g = gt();
        assert!(cosine_loss(&g, &g).unwrap().abs() < 1e-15);
        let scaled: [XyzTriple; CHART_PATCHES] = std::array::from_fn(|i| g[i].scaled(3.7));
        assert!(cosine_loss(&scaled, &g).unwrap().abs() < 1e-12);
        let ex = [XyzTriple::new(1.0, 0.0, 0.0); CHART_PATCHES];
        let ey = [XyzTriple::new(0.0, 1.0, 0.0); CHART_PATCHES];
        assert!((cosine_loss(&ex, &ey).unwrap() - 1.0).abs() < 1e-15);
        let mut zero = g;
        zero[5] = XyzTriple::default();
        assert!(matches!(
            cosine_loss(&zero, &g),
            Err(Error::DegeneratePatch { index: 5 })
        ));
    }

    #[test]
    fn matrix_gradient_matches_differences() {
        let x: [RawTriple; CHART_PATCHES] =
            std::array::from_fn(|i| RawTriple::new(0.3 + 0.02 * i as f64, 0.5, 0.9 - 0.03 * i as f64));
        let g = gt();
        let t = Cst::linear([[0.7, 0.2, 0.1], [0.3, 0.9, 0.05], [0.02, 0.1, 0.8]]);
        let (_, grad) = cosine_loss_grad(&t, &x, &g).unwrap();
        let h = 1e-6;
        for k in 0..9 {
            let mut plus = t.entries().to_vec();
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let lp = cosine_loss_grad(&Cst::new(t.head(), plus).unwrap(), &x, &g).unwrap().0;
            let lm = cosine_loss_grad(&Cst::new(t.head(), minus).unwrap(), &x, &g).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-8, "entry {k}: {fd} vs {}", grad[k]);
        }
    }
}
