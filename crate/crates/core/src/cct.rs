//! Correlated color temperature and the classical CCT-interpolated CST.
//!
//! CCT is read from xy with Robertson's isotemperature-line method in CIE
//! 1960 uv. Interpolation between calibrated CSTs is linear in mired, and the
//! raw white point is mapped to xy with the fixed-point iteration used by DNG
//! readers (the CST depends on the CCT, which depends on the CST).

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::color::{apply_cst, Chromaticity2D, Cst, FeatureHead, RawTriple, WhitePoint};
use crate::error::{Error, Result};

pub const MIN_CCT: f64 = 1500.0;
pub const MAX_CCT: f64 = 25000.0;

/// uv distance from the locus beyond which CCT is reported as unreliable.
pub const OFF_LOCUS_DISTANCE: f64 = 0.05;

const START_XY: (f64, f64) = (0.34, 0.35);
pub const MAX_ITERATIONS: usize = 30;
const TOLERANCE: f64 = 1e-7;
const THREE_POINT_SPLIT: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "[f64; 4]")]
pub struct IsothermRow {
    pub mired: f64,
    pub u: f64,
    pub v: f64,
    pub slope: f64,
}

impl From<[f64; 4]> for IsothermRow {
    fn from([mired, u, v, slope]: [f64; 4]) -> Self {
        Self { mired, u, v, slope }
    }
}

impl IsothermRow {
    /// Unit normal of the isotherm, oriented toward lower temperature. The
    /// slope passes through vertical near 600 mired, so the sign of the raw
    /// `(-t, 1)` normal has to be corrected for positive slopes.
    fn normal(&self) -> (f64, f64) {
        let n = (1.0 + self.slope * self.slope).sqrt();
        let s = if self.slope > 0.0 { -1.0 } else { 1.0 };
        (s * -self.slope / n, s / n)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct PlanckianTable {
    rows: Vec<IsothermRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CctEstimate {
    /// Temperature in kelvin, clamped to `[MIN_CCT, MAX_CCT]`.
    pub kelvin: f64,
    /// Distance in uv from the interpolated locus point.
    pub distance: f64,
    /// Set when the distance exceeds [`OFF_LOCUS_DISTANCE`] or the point lies
    /// outside the table's temperature range.
    pub off_locus: bool,
}

impl PlanckianTable {
    /// The shipped Robertson table (mired 0–675).
    pub fn robertson() -> &'static PlanckianTable {
        static TABLE: OnceLock<PlanckianTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            serde_json::from_str(include_str!("../assets/robertson_isotherms.json"))
                .expect("embedded isotherm table is valid")
        })
    }

    pub fn rows(&self) -> &[IsothermRow] {
        &self.rows
    }

    pub fn lookup_uv(&self, u: f64, v: f64) -> CctEstimate {
        let dist = |row: &IsothermRow| {
            let (nu, nv) = row.normal();
            nu * (u - row.u) + nv * (v - row.v)
        };
        let mut prev: Option<(usize, f64)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let d = dist(row);
            if let Some((j, dm)) = prev {
                if (d < 0.0 && dm >= 0.0) || (d >= 0.0 && dm < 0.0) {
                    let lo = &self.rows[j];
                    let p = dm / (dm - d);
                    let mired = lo.mired + p * (row.mired - lo.mired);
                    let lu = lo.u + p * (row.u - lo.u);
                    let lv = lo.v + p * (row.v - lo.v);
                    let distance = (u - lu).hypot(v - lv);
                    return CctEstimate {
                        kelvin: mired_to_kelvin(mired),
                        distance,
                        off_locus: distance > OFF_LOCUS_DISTANCE,
                    };
                }
            }
            prev = Some((i, d));
        }
        // No isotherm crossing: the point is beyond one end of the table.
        let first = &self.rows[0];
        let last = self.rows.last().expect("table is non-empty");
        let end = if dist(first) < 0.0 { first } else { last };
        CctEstimate {
            kelvin: mired_to_kelvin(end.mired),
            distance: (u - end.u).hypot(v - end.v),
            off_locus: true,
        }
    }
}

fn mired_to_kelvin(mired: f64) -> f64 {
    if mired <= 0.0 {
        MAX_CCT
    } else {
        (1e6 / mired).clamp(MIN_CCT, MAX_CCT)
    }
}

/// CIE 1931 xy to CIE 1960 uv.
pub fn xy_to_uv(x: f64, y: f64) -> (f64, f64) {
    let d = -2.0 * x + 12.0 * y + 3.0;
    (4.0 * x / d, 6.0 * y / d)
}

/// CCT of an xy chromaticity by Robertson's method. Never fails; points far
/// from the locus get a clamped value and the `off_locus` flag.
pub fn cct_lookup(c: Chromaticity2D) -> CctEstimate {
    cct_from_xy(c.a, c.b)
}

pub(crate) fn cct_from_xy(x: f64, y: f64) -> CctEstimate {
    let (u, v) = xy_to_uv(x, y);
    PlanckianTable::robertson().lookup_uv(u, v)
}

/// McCamy's cubic approximation. Only meant as a cross-check near the locus.
pub fn mccamy_cct(c: Chromaticity2D) -> f64 {
    let n = (c.a - 0.3320) / (0.1858 - c.b);
    449.0 * n.powi(3) + 3525.0 * n.powi(2) + 6823.3 * n + 5520.33
}

/// Interpolation weight of the `lo` anchor, linear in reciprocal temperature
/// and clamped to `[0, 1]`.
pub fn mired_weight(cct: f64, lo: f64, hi: f64) -> f64 {
    ((1.0 / cct - 1.0 / hi) / (1.0 / lo - 1.0 / hi)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterpMode {
    #[serde(rename = "two")]
    TwoPoint,
    #[serde(rename = "three")]
    ThreePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CstAnchor {
    pub cct: f64,
    pub cst: Cst,
}

/// Factory-calibrated CSTs at fixed anchor temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CstSetRecord", into = "CstSetRecord")]
pub struct CalibratedCstSet {
    mode: InterpMode,
    anchors: Vec<CstAnchor>,
}

#[derive(Serialize, Deserialize)]
struct CstSetRecord {
    mode: InterpMode,
    anchors: Vec<AnchorRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnchorRecord {
    cct: f64,
    m: MatrixRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRecord {
    Rows([[f64; 3]; 3]),
    Flat([f64; 9]),
    WrappedFlat([[f64; 9]; 1]),
}

impl TryFrom<CstSetRecord> for CalibratedCstSet {
    type Error = Error;

    fn try_from(rec: CstSetRecord) -> Result<Self> {
        let anchors = rec
            .anchors
            .into_iter()
            .map(|a| {
                let m = match a.m {
                    MatrixRecord::Rows(r) => r.concat(),
                    MatrixRecord::Flat(f) | MatrixRecord::WrappedFlat([f]) => f.to_vec(),
                };
                Ok(CstAnchor {
                    cct: a.cct,
                    cst: Cst::new(FeatureHead::Linear, m)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CalibratedCstSet::new(rec.mode, anchors)
    }
}

impl From<CalibratedCstSet> for CstSetRecord {
    fn from(set: CalibratedCstSet) -> Self {
        CstSetRecord {
            mode: set.mode,
            anchors: set
                .anchors
                .into_iter()
                .map(|a| AnchorRecord {
                    cct: a.cct,
                    m: MatrixRecord::Rows(a.cst.as_linear().expect("anchors are linear")),
                })
                .collect(),
        }
    }
}

impl CalibratedCstSet {
    pub fn new(mode: InterpMode, anchors: Vec<CstAnchor>) -> Result<Self> {
        let expected: &[f64] = match mode {
            InterpMode::TwoPoint => &[2500.0, 6500.0],
            InterpMode::ThreePoint => &[2500.0, 5000.0, 6500.0],
        };
        let ccts: Vec<f64> = anchors.iter().map(|a| a.cct).collect();
        if ccts != expected {
            return Err(Error::Config(format!(
                "{mode:?} interpolation needs anchors at {expected:?} K, got {ccts:?}"
            )));
        }
        if anchors.iter().any(|a| a.cst.head() != FeatureHead::Linear) {
            return Err(Error::Config("calibrated CSTs must be linear 3x3".into()));
        }
        Ok(Self { mode, anchors })
    }

    pub fn two_point(t2500: Cst, t6500: Cst) -> Result<Self> {
        Self::new(
            InterpMode::TwoPoint,
            vec![
                CstAnchor {
                    cct: 2500.0,
                    cst: t2500,
                },
                CstAnchor {
                    cct: 6500.0,
                    cst: t6500,
                },
            ],
        )
    }

    pub fn three_point(t2500: Cst, t5000: Cst, t6500: Cst) -> Result<Self> {
        Self::new(
            InterpMode::ThreePoint,
            vec![
                CstAnchor {
                    cct: 2500.0,
                    cst: t2500,
                },
                CstAnchor {
                    cct: 5000.0,
                    cst: t5000,
                },
                CstAnchor {
                    cct: 6500.0,
                    cst: t6500,
                },
            ],
        )
    }

    pub fn mode(&self) -> InterpMode {
        self.mode
    }

    pub fn anchors(&self) -> &[CstAnchor] {
        &self.anchors
    }
}

/// The CST for a temperature: a mired-linear blend of the bracketing anchors.
pub fn interpolate_cst(cct: f64, set: &CalibratedCstSet) -> Cst {
    let a = &set.anchors;
    let (lo, hi) = match set.mode {
        InterpMode::TwoPoint => (&a[0], &a[1]),
        InterpMode::ThreePoint if cct < THREE_POINT_SPLIT => (&a[0], &a[1]),
        InterpMode::ThreePoint => (&a[1], &a[2]),
    };
    let g = mired_weight(cct, lo.cct, hi.cct);
    Cst::blend(&lo.cst, &hi.cst, g).expect("anchors share the linear head")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteEstimate {
    pub xy: Chromaticity2D,
    pub cct: CctEstimate,
    pub iterations: usize,
    pub converged: bool,
    /// L1 change of the last step.
    pub residual: f64,
}

/// Estimates the xy chromaticity (and CCT) of a raw neutral by iterating
/// CCT → interpolated CST → XYZ → xy until the xy update falls below 1e-7.
/// After 30 iterations without convergence the last two iterates are
/// averaged.
pub fn estimate_white_xy(n_raw: RawTriple, set: &CalibratedCstSet) -> Result<WhiteEstimate> {
    if !(n_raw.r > 0.0 && n_raw.g > 0.0 && n_raw.b > 0.0) {
        return Err(Error::InvalidWhitePoint(format!(
            "neutral response must be positive, got {n_raw:?}"
        )));
    }
    let mut last = START_XY;
    let mut before_last = START_XY;
    let mut residual = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        let cct = cct_from_xy(last.0, last.1);
        let xyz = apply_cst(n_raw, &interpolate_cst(cct.kelvin, set));
        let sum = xyz.x + xyz.y + xyz.z;
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::DegenerateMapping { sum });
        }
        let new = (xyz.x / sum, xyz.y / sum);
        residual = (new.0 - last.0).abs() + (new.1 - last.1).abs();
        if residual < TOLERANCE {
            let xy = Chromaticity2D::xy(new.0, new.1)?;
            return Ok(WhiteEstimate {
                xy,
                cct: cct_lookup(xy),
                iterations: iteration,
                converged: true,
                residual,
            });
        }
        before_last = last;
        last = new;
    }
    let xy = Chromaticity2D::xy((before_last.0 + last.0) / 2.0, (before_last.1 + last.1) / 2.0)?;
    Ok(WhiteEstimate {
        xy,
        cct: cct_lookup(xy),
        iterations: MAX_ITERATIONS,
        converged: false,
        residual,
    })
}

/// Fills in the `xy` and `cct` fields of a white point from its raw
/// chromaticity.
pub fn white_raw_to_xy(w: &WhitePoint, set: &CalibratedCstSet) -> Result<WhitePoint> {
    let est = estimate_white_xy(w.raw_vector(), set)?;
    w.with_derived(est.xy, est.cct.kelvin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{xyz_to_xy, XyzTriple};

    fn m(seed: f64) -> Cst {
        Cst::linear([[0.6 + seed, 0.3, 0.1], [0.2, 0.7 + seed, 0.1], [0.0, 0.1 - seed, 0.9]])
    }

    #[test]
    fn d65_cct() {
        let est = cct_lookup(Chromaticity2D::xy(0.3127, 0.3290).unwrap());
        assert!((est.kelvin - 6504.0).abs() < 20.0, "{est:?}");
        assert!(!est.off_locus);
    }

    #[test]
    fn table_rows_are_exact() {
        let table = PlanckianTable::robertson();
        for row in table.rows().iter().filter(|r| r.mired >= 40.0 && r.mired <= 650.0) {
            let est = table.lookup_uv(row.u, row.v);
            assert!((est.kelvin - 1e6 / row.mired).abs() < 1e-6, "{row:?} -> {est:?}");
            assert!(est.distance < 1e-12);
        }
    }

    #[test]
    fn off_locus_never_panics() {
        for (x, y) in [(0.2, 0.7), (0.7, 0.29), (0.15, 0.06), (0.33, 0.2), (0.3, 0.6)] {
            let est = cct_lookup(Chromaticity2D::xy(x, y).unwrap());
            assert!(est.kelvin >= MIN_CCT && est.kelvin <= MAX_CCT);
            assert!(est.off_locus, "({x}, {y}) -> {est:?}");
        }
    }

    #[test]
    fn mccamy_agrees_near_d65() {
        let c = Chromaticity2D::xy(0.3127, 0.3290).unwrap();
        assert!((mccamy_cct(c) - cct_lookup(c).kelvin).abs() < 30.0);
    }

    #[test]
    fn mired_weights() {
        assert_eq!(mired_weight(2500.0, 2500.0, 6500.0), 1.0);
        assert_eq!(mired_weight(6500.0, 2500.0, 6500.0), 0.0);
        let mid = 2.0 * 2500.0 * 6500.0 / (2500.0 + 6500.0);
        assert!((mired_weight(mid, 2500.0, 6500.0) - 0.5).abs() < 1e-12);
        assert_eq!(mired_weight(1000.0, 2500.0, 6500.0), 1.0);
        assert_eq!(mired_weight(20000.0, 2500.0, 6500.0), 0.0);
    }

    #[test]
    fn interpolation_anchors() {
        let two = CalibratedCstSet::two_point(m(0.0), m(0.2)).unwrap();
        assert_eq!(interpolate_cst(2500.0, &two), m(0.0));
        assert_eq!(interpolate_cst(6500.0, &two), m(0.2));
        let mid = 2.0 * 2500.0 * 6500.0 / 9000.0;
        let mean = Cst::blend(&m(0.0), &m(0.2), 0.5).unwrap();
        assert!(interpolate_cst(mid, &two).max_abs_diff(&mean) < 1e-12);

        let three = CalibratedCstSet::three_point(m(0.0), m(0.1), m(0.2)).unwrap();
        assert_eq!(interpolate_cst(5000.0, &three), m(0.1));
        let below = interpolate_cst(5000.0 * (1.0 - 1e-15), &three);
        assert!(below.max_abs_diff(&m(0.1)) < 1e-12);
    }

    #[test]
    fn set_validation() {
        let bad = CalibratedCstSet::new(
            InterpMode::TwoPoint,
            vec![
                CstAnchor {
                    cct: 2850.0,
                    cst: m(0.0),
                },
                CstAnchor {
                    cct: 6500.0,
                    cst: m(0.0),
                },
            ],
        );
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn set_json_round_trip() {
        let set = CalibratedCstSet::three_point(m(0.0), m(0.1), m(0.2)).unwrap();
        let text = serde_json::to_string(&set).unwrap();
        assert!(text.contains(r#""mode":"three""#));
        let back: CalibratedCstSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, set);
        let flat =
            r#"{"mode":"two","anchors":[{"cct":2500,"m":[[1,0,0,0,1,0,0,0,1]]},{"cct":6500,"m":[1,0,0,0,1,0,0,0,1]}]}"#;
        let parsed: CalibratedCstSet = serde_json::from_str(flat).unwrap();
        assert_eq!(parsed.anchors()[0].cst, Cst::identity());
    }

    #[test]
    fn identity_anchors_fixed_point() {
        let set = CalibratedCstSet::two_point(Cst::identity(), Cst::identity()).unwrap();
        let est = estimate_white_xy(RawTriple::new(1.0, 1.0, 1.0), &set).unwrap();
        assert!(est.converged);
        assert!((est.xy.a - 1.0 / 3.0).abs() < 1e-15 && (est.xy.b - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(est.iterations, 2);
    }

    #[test]
    fn constant_interpolation_is_direct_mapping() {
        let set = CalibratedCstSet::three_point(m(0.05), m(0.05), m(0.05)).unwrap();
        let n = RawTriple::new(0.8, 1.0, 1.3);
        let est = estimate_white_xy(n, &set).unwrap();
        let direct = xyz_to_xy(apply_cst(n, &m(0.05))).unwrap();
        assert!((est.xy.a - direct.a).abs() < 1e-12 && (est.xy.b - direct.b).abs() < 1e-12);

        let w = WhitePoint::from_raw(0.8, 1.3).unwrap();
        let derived = white_raw_to_xy(&w, &set).unwrap();
        assert_eq!(derived.xy, Some(est.xy));
        assert_eq!(derived.cct, Some(est.cct.kelvin));
    }

    #[test]
    fn degenerate_mapping_is_reported() {
        let neg = Cst::linear([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
        let set = CalibratedCstSet::two_point(neg.clone(), neg).unwrap();
        assert!(matches!(
            estimate_white_xy(RawTriple::new(1.0, 1.0, 1.0), &set),
            Err(Error::DegenerateMapping { .. })
        ));
    }

    #[test]
    fn oscillation_takes_fallback() {
        // The warm anchor sends the neutral far to the blue, the cool anchor
        // far to the red, so the iteration never settles.
        let warm = Cst::linear([[0.1, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 1.0]]);
        let cool = Cst::linear([[1.0, 0.0, 0.0], [0.0, 0.6, 0.0], [0.0, 0.0, 0.05]]);
        let set = CalibratedCstSet::two_point(warm, cool).unwrap();
        let est = estimate_white_xy(RawTriple::new(1.0, 1.0, 1.0), &set).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 30);
        let xyz_w = apply_cst(RawTriple::new(1.0, 1.0, 1.0), &set.anchors()[0].cst);
        let xyz_c = apply_cst(RawTriple::new(1.0, 1.0, 1.0), &set.anchors()[1].cst);
        let (pw, pc) = (xyz_to_xy(xyz_w).unwrap(), xyz_to_xy(xyz_c).unwrap());
        // The fallback is the midpoint of the two alternating iterates.
        assert!((est.xy.a - (pw.a + pc.a) / 2.0).abs() < 1e-12, "{est:?}");
        assert!((est.xy.b - (pw.b + pc.b) / 2.0).abs() < 1e-12);
        let _ = XyzTriple::default();
    }
}
