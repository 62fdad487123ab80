//! Per-chart best-fit CSTs (the oracle) and the nearest-neighbor baseline
//! built from them.

use std::cell::RefCell;
use std::path::Path;

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{dot, norm, ChartObservation, Cst, FeatureHead, HeadKind, WhitePoint, XyzTriple, CHART_PATCHES};
use crate::error::{Error, Result};
use crate::mlp::InputEncoding;

/// Iteration budget of the quasi-Newton refinement.
pub const ORACLE_MAX_ITERS: u64 = 500;
const GRAD_TOL: f64 = 1e-12;
const STATIONARY_GRAD: f64 = 1e-6;

/// Cosine loss of a 3×K matrix on expanded features, with its gradient.
fn feature_loss_grad(m: &[f64], k: usize, feats: &[Vec<f64>], gt: &[[f64; 3]]) -> (f64, Vec<f64>) {
    let n = feats.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; 3 * k];
    for (f, g) in feats.iter().zip(gt) {
        let p: [f64; 3] = std::array::from_fn(|r| m[r * k..(r + 1) * k].iter().zip(f).map(|(a, b)| a * b).sum());
        let (np, ng) = (norm(p), norm(*g));
        if !(np > 0.0) {
            // A collapsed prediction has no direction; count it as orthogonal.
            loss += 1.0;
            continue;
        }
        let c = dot(p, *g) / (np * ng);
        loss += 1.0 - c;
        for r in 0..3 {
            let dp = -(g[r] / ng - c * p[r] / np) / np;
            for (j, fj) in f.iter().enumerate() {
                grad[r * k + j] += dp * fj / n;
            }
        }
    }
    (loss / n, grad)
}

#[derive(Clone, Copy)]
struct OracleProblem<'a> {
    k: usize,
    feats: &'a [Vec<f64>],
    gt: &'a [[f64; 3]],
    /// With a fixed scale the parameter vector omits entry (1,1), the green
    /// term of the Y row, which is held at 1.
    fixed_center: bool,
    best: &'a RefCell<(f64, Vec<f64>)>,
}

impl OracleProblem<'_> {
    fn full(&self, p: &[f64]) -> Vec<f64> {
        if self.fixed_center {
            let mut m = p.to_vec();
            m.insert(self.k + 1, 1.0);
            m
        } else {
            p.to_vec()
        }
    }

    fn loss_grad(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let (loss, mut grad) = feature_loss_grad(&self.full(p), self.k, self.feats, self.gt);
        if self.fixed_center {
            grad.remove(self.k + 1);
        }
        (loss, grad)
    }

    fn eval(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let (loss, grad) = self.loss_grad(p);
        let mut best = self.best.borrow_mut();
        if loss.is_finite() && loss < best.0 {
            *best = (loss, p.to_vec());
        }
        (loss, grad)
    }
}

impl CostFunction for OracleProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p).0)
    }
}

impl Gradient for OracleProblem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(p).1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleFit {
    pub cst: Cst,
    /// Mean cosine loss of the returned matrix.
    pub loss: f64,
    /// Mean cosine loss of the least-squares starting point.
    pub lls_loss: f64,
    pub iterations: u64,
}

fn lls(feats: &[Vec<f64>], gt: &[[f64; 3]], k: usize) -> Result<Vec<f64>> {
    let f = DMatrix::from_fn(feats.len(), k, |i, j| feats[i][j]);
    let g = DMatrix::from_fn(gt.len(), 3, |i, j| gt[i][j]);
    let sol = f
        .svd(true, true)
        .solve(&g, 1e-14)
        .map_err(|_| Error::FitFailure { residual: f64::NAN })?;
    // sol is K×3; the CST is its transpose, row-major.
    let sol = &sol;
    Ok((0..3).flat_map(|r| (0..k).map(move |j| sol[(j, r)])).collect())
}

/// Best-fit CST of one chart under the mean cosine loss, refined with
/// L-BFGS from the linear-least-squares solution. Linear results are
/// center-normalized.
pub fn oracle_fit_detailed(obs: &ChartObservation, head: FeatureHead) -> Result<OracleFit> {
    let wb = obs.white_balanced()?;
    let feats: Vec<Vec<f64>> = wb.iter().map(|p| head.expand(*p)).collect();
    fit_features(&feats, &obs.gt_xyz, head)
}

pub(crate) fn fit_features(
    feats: &[Vec<f64>],
    gt_xyz: &[XyzTriple; CHART_PATCHES],
    head: FeatureHead,
) -> Result<OracleFit> {
    let k = head.size();
    let gt: Vec<[f64; 3]> = gt_xyz.iter().map(|g| g.to_array()).collect();
    if let Some(i) = gt.iter().position(|g| !(norm(*g) > 0.0)) {
        return Err(Error::DegeneratePatch { index: i });
    }
    // Unit-norm feature columns keep the quasi-Newton problem well
    // conditioned for the polynomial heads; the scaling is undone at the end.
    let col_scale: Vec<f64> = (0..k)
        .map(|j| {
            let n = feats.iter().map(|f| f[j] * f[j]).sum::<f64>().sqrt();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let scaled: Vec<Vec<f64>> = feats
        .iter()
        .map(|f| f.iter().zip(&col_scale).map(|(v, s)| v / s).collect())
        .collect();
    let feats = &scaled[..];
    let center = k + 1;
    let mut start = lls(feats, &gt, k)?;
    // The objective ignores overall scale, so pinning the center entry
    // removes a flat direction without restricting the fit.
    let fixed_center = start[center] > 0.0;
    if fixed_center {
        let c = start[center];
        start.iter_mut().for_each(|v| *v /= c);
    }
    let lls_loss = feature_loss_grad(&start, k, feats, &gt).0;
    let mut p0 = start.clone();
    if fixed_center {
        p0.remove(center);
    }
    let best = RefCell::new((lls_loss, p0.clone()));
    let problem = OracleProblem {
        k,
        feats,
        gt: &gt,
        fixed_center,
        best: &best,
    };

    let mut iterations = 0;
    let mut stalled = false;
    if lls_loss > 1e-15 {
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), p0.len())
            .with_tolerance_grad(GRAD_TOL)
            .expect("non-negative tolerance");
        let run = Executor::new(problem, solver)
            .configure(|s| s.param(p0).max_iters(ORACLE_MAX_ITERS))
            .run();
        match run {
            Ok(res) => {
                let state = res.state();
                iterations = state.get_iter();
                stalled = matches!(
                    state.get_termination_status(),
                    TerminationStatus::Terminated(TerminationReason::MaxItersReached)
                );
            }
            // Line-search breakdown near a flat optimum.
            Err(_) => stalled = true,
        }
    }
    let (loss, best) = best.borrow().clone();
    let (loss, best) = if iterations > 0 || stalled {
        newton_polish(&problem, loss, best)
    } else {
        (loss, best)
    };
    if stalled && norm_vec(&problem.loss_grad(&best).1) > STATIONARY_GRAD {
        return Err(Error::FitFailure { residual: loss });
    }
    if !loss.is_finite() {
        return Err(Error::FitFailure { residual: loss });
    }
    let mut m = if fixed_center {
        let mut m = best;
        m.insert(center, 1.0);
        m
    } else {
        best
    };
    for (i, v) in m.iter_mut().enumerate() {
        *v /= col_scale[i % k];
    }
    if m[center] > 0.0 {
        let c = m[center];
        m.iter_mut().for_each(|v| *v /= c);
        m[center] = 1.0;
    }
    Ok(OracleFit {
        cst: Cst::new(head, m)?,
        loss,
        lls_loss,
        iterations,
    })
}

/// Damped Newton steps on the gradient with a central-difference Hessian.
/// Near the optimum the loss is flat to rounding, so steps are accepted on
/// gradient norm rather than on loss.
fn newton_polish(problem: &OracleProblem, loss: f64, p: Vec<f64>) -> (f64, Vec<f64>) {
    const STEPS: usize = 8;
    const DAMPING: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];
    const H: f64 = 1e-6;
    let n = p.len();
    let (mut loss, mut p) = (loss, p);
    let mut g = problem.loss_grad(&p).1;
    for _ in 0..STEPS {
        let gn = norm_vec(&g);
        if gn == 0.0 {
            break;
        }
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut q = p.clone();
            q[j] = p[j] + H;
            let up = problem.loss_grad(&q).1;
            q[j] = p[j] - H;
            let down = problem.loss_grad(&q).1;
            for i in 0..n {
                hess[(i, j)] = (up[i] - down[i]) / (2.0 * H);
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let rhs = nalgebra::DVector::from_vec(g.iter().map(|v| -v).collect());
        let accepted = DAMPING.iter().find_map(|&mu| {
            let damped = &hess + DMatrix::<f64>::identity(n, n) * (mu * scale);
            let step = damped.lu().solve(&rhs)?;
            let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (ql, qg) = problem.loss_grad(&q);
            (ql.is_finite() && norm_vec(&qg) < gn && ql <= loss + 1e-10 * loss.abs().max(1e-12)).then_some((ql, q, qg))
        });
        let Some(next) = accepted else { break };
        (loss, p, g) = next;
    }
    (loss, p)
}

fn norm_vec(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn oracle_fit(obs: &ChartObservation, kind: HeadKind, size: usize) -> Result<Cst> {
    Ok(oracle_fit_detailed(obs, FeatureHead::new(kind, size)?)?.cst)
}

/// Nearest-neighbor lookup from encoded training white points to their
/// oracle CSTs. Distances are Euclidean in the normalized encoding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnIndex {
    pub encoding: InputEncoding,
    pub ids: Vec<String>,
    pub keys: Vec<Vec<f64>>,
    pub csts: Vec<Cst>,
}

pub fn nn_build(train: &[ChartObservation], enc: &InputEncoding) -> Result<NnIndex> {
    if train.is_empty() {
        return Err(Error::Config("nearest-neighbor index needs training data".into()));
    }
    let entries = train
        .par_iter()
        .map(|o| {
            let fit = || -> Result<_> { Ok((enc.encode(&o.white)?, oracle_fit(o, HeadKind::Linear, 3)?)) };
            fit()
                .map(|(key, cst)| (o.illuminant_id.clone(), key, cst))
                .map_err(|e| e.for_illuminant(&o.illuminant_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut idx = NnIndex {
        encoding: enc.clone(),
        ids: Vec::with_capacity(entries.len()),
        keys: Vec::with_capacity(entries.len()),
        csts: Vec::with_capacity(entries.len()),
    };
    for (id, key, cst) in entries {
        idx.ids.push(id);
        idx.keys.push(key);
        idx.csts.push(cst);
    }
    Ok(idx)
}

impl NnIndex {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Index of the nearest key; the lowest index wins ties.
    pub fn nearest(&self, z: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, k) in self.keys.iter().enumerate() {
            let d: f64 = k.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn query(&self, w: &WhitePoint) -> Result<&Cst> {
        let z = self.encoding.encode(w)?;
        Ok(&self.csts[self.nearest(&z)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.keys.is_empty() || self.keys.len() != self.csts.len() || self.ids.len() != self.keys.len() {
            return Err(Error::Config(
                "index keys, ids and CSTs must be non-empty and parallel".into(),
            ));
        }
        let d = self.encoding.dim();
        if self
            .keys
            .iter()
            .any(|k| k.len() != d || k.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Config(format!("index keys must be finite {d}-vectors")));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("index serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let idx: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        idx.validate().map_err(|e| Error::format(path, e))?;
        Ok(idx)
    }
}

pub fn nn_query(idx: &NnIndex, w: &WhitePoint) -> Result<Cst> {
    idx.query(w).cloned()
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::color::{angular_error, apply_cst, RawTriple};
    use crate::mlp::EncodingKind;
    use crate::rng::{stream, Stream};

    fn observation(seed: u64, m: &Cst, noise: f64) -> ChartObservation {
        let mut rng = stream(seed, Stream::TestFixtures);
        let patches_raw: [RawTriple; CHART_PATCHES] = std::array::from_fn(|_| {
            RawTriple::new(
                rng.random_range(0.05..1.0),
                rng.random_range(0.05..1.0),
                rng.random_range(0.05..1.0),
            )
        });
        let white = WhitePoint::from_raw(1.0, 1.0).unwrap();
        let gt = std::array::from_fn(|i| {
            let p = apply_cst(patches_raw[i], m);
            XyzTriple::new(
                p.x * (1.0 + noise * rng.random_range(-1.0..1.0)),
                p.y * (1.0 + noise * rng.random_range(-1.0..1.0)),
                p.z * (1.0 + noise * rng.random_range(-1.0..1.0)),
            )
        });
        ChartObservation {
            illuminant_id: format!("obs{seed}"),
            patches_raw,
            white,
            gt_xyz: gt,
        }
    }

    fn m() -> Cst {
        Cst::linear([[0.6, 0.3, 0.1], [0.25, 0.8, -0.05], [0.02, 0.1, 0.9]])
    }

    #[test]
    fn realizable_fit_is_exact() {
        let obs = observation(1, &m(), 0.0);
        let fit = oracle_fit(&obs, HeadKind::Linear, 3).unwrap();
        assert!(fit.max_abs_diff(&m().center_normalized().unwrap()) < 1e-9);
        for (p, g) in obs.patches_raw.iter().zip(&obs.gt_xyz) {
            assert!(angular_error(apply_cst(*p, &fit), *g).unwrap() < 1e-6);
        }
    }

    #[test]
    fn refinement_never_worsens_least_squares() {
        for seed in 0..5 {
            let obs = observation(seed, &m(), 0.1);
            let fit = oracle_fit_detailed(&obs, FeatureHead::Linear).unwrap();
            assert!(fit.loss <= fit.lls_loss, "{fit:?}");
            assert_eq!(fit.cst.get(1, 1), 1.0);
        }
    }

    #[test]
    fn expanded_heads_fit() {
        let obs = observation(3, &m(), 0.05);
        let lin = oracle_fit_detailed(&obs, FeatureHead::Linear).unwrap();
        for head in [
            FeatureHead::Poly9,
            FeatureHead::Poly19,
            FeatureHead::RootPoly6,
            FeatureHead::RootPoly13,
        ] {
            let fit = oracle_fit_detailed(&obs, head).unwrap();
            assert!(fit.loss <= fit.lls_loss);
            assert!(fit.loss <= lin.loss + 1e-9, "{head:?}");
        }
    }

    #[test]
    fn gt_scale_invariance() {
        let obs = observation(4, &m(), 0.1);
        let mut scaled = obs.clone();
        scaled.gt_xyz.iter_mut().for_each(|g| *g = g.scaled(7.5));
        let a = oracle_fit_detailed(&obs, FeatureHead::Linear).unwrap();
        let b = oracle_fit_detailed(&scaled, FeatureHead::Linear).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-9);
        assert!(a.cst.max_abs_diff(&b.cst) < 1e-5);
    }

    fn index(keys: &[[f64; 2]]) -> NnIndex {
        NnIndex {
            encoding: InputEncoding::identity(EncodingKind::Raw2D),
            ids: (0..keys.len()).map(|i| i.to_string()).collect(),
            keys: keys.iter().map(|k| k.to_vec()).collect(),
            csts: (0..keys.len())
                .map(|i| Cst::identity().center_normalized().unwrap().blend_scalar(i))
                .collect(),
        }
    }

    trait Tag {
        fn blend_scalar(self, i: usize) -> Cst;
    }

    impl Tag for Cst {
        fn blend_scalar(self, i: usize) -> Cst {
            let mut m = self.entries().to_vec();
            m[0] = i as f64 + 1.0;
            Cst::new(self.head(), m).unwrap()
        }
    }

    #[test]
    fn nearest_neighbor_rules() {
        let idx = index(&[[0.0, 0.0], [5.0, 5.0], [3.0, 3.0], [2.0, 0.0]]);
        assert_eq!(idx.nearest(&[5.0, 5.0]), 1);
        // Equidistant from keys 0 and 3.
        assert_eq!(idx.nearest(&[1.0, 0.0]), 0);
        let w = WhitePoint::from_raw(3.1, 2.9).unwrap();
        assert_eq!(nn_query(&idx, &w).unwrap(), idx.csts[2]);
    }

    #[test]
    fn build_index() {
        let train: Vec<_> = (0..3).map(|s| observation(s, &m(), 0.02)).collect();
        let enc = InputEncoding::identity(EncodingKind::Raw2D);
        let idx = nn_build(&train, &enc).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.keys[1], enc.encode(&train[1].white).unwrap());
        let single = nn_build(&train[..1], &enc).unwrap();
        let w = WhitePoint::from_raw(0.3, 2.0).unwrap();
        assert_eq!(nn_query(&single, &w).unwrap(), single.csts[0]);
        let back: NnIndex = serde_json::from_str(&serde_json::to_string(&idx).unwrap()).unwrap();
        assert_eq!(back, idx);
    }
}
