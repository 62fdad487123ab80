//! Color values, white balance, CST application and the two evaluation
//! metrics (angular error and CIEDE2000).
//!
//! All arithmetic is `f64`. Patch sets are fixed 24-element arrays in chart
//! reading order (top-left to bottom-right), with the neutral row last.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of patches on the calibration chart.
pub const CHART_PATCHES: usize = 24;

/// 0-based index of the white patch (first patch of the neutral row).
pub const WHITE_PATCH_INDEX: usize = 18;

/// 0-based index of the third gray patch, used to anchor exposure before ΔE.
pub const GRAY_ANCHOR_INDEX: usize = 20;

/// CIE D50 reference white, Y normalized to 1.
pub const D50_WHITE: XyzTriple = XyzTriple {
    x: 0.9642,
    y: 1.0,
    z: 0.8251,
};

/// Linear sensor response.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct RawTriple {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl RawTriple {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    /// Builds a triple, rejecting negative or non-finite components.
    pub fn checked(r: f64, g: f64, b: f64) -> Result<Self> {
        let p = Self { r, g, b };
        if p.to_array().iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(p)
        } else {
            Err(Error::DegenerateColor(format!(
                "raw values must be finite and non-negative, got {p:?}"
            )))
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::new(self.r * k, self.g * k, self.b * k)
    }
}

impl From<[f64; 3]> for RawTriple {
    fn from([r, g, b]: [f64; 3]) -> Self {
        Self { r, g, b }
    }
}

impl From<RawTriple> for [f64; 3] {
    fn from(p: RawTriple) -> Self {
        p.to_array()
    }
}

/// CIE XYZ tristimulus value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct XyzTriple {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl XyzTriple {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl From<[f64; 3]> for XyzTriple {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<XyzTriple> for [f64; 3] {
    fn from(p: XyzTriple) -> Self {
        p.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabTriple {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabTriple {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChromaSpace {
    /// Sensor chromaticity `[r/g, b/g]`.
    Raw,
    /// CIE 1931 `xy`.
    Xy,
}

/// A 2D chromaticity tagged with the space it lives in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chromaticity2D {
    pub a: f64,
    pub b: f64,
    pub space: ChromaSpace,
}

impl Chromaticity2D {
    pub fn raw(r_over_g: f64, b_over_g: f64) -> Result<Self> {
        if !(r_over_g.is_finite() && b_over_g.is_finite() && r_over_g > 0.0 && b_over_g > 0.0) {
            return Err(Error::InvalidWhitePoint(format!(
                "raw chromaticity must be positive, got ({r_over_g}, {b_over_g})"
            )));
        }
        Ok(Self {
            a: r_over_g,
            b: b_over_g,
            space: ChromaSpace::Raw,
        })
    }

    pub fn xy(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && x >= 0.0 && y > 0.0 && x + y <= 1.0 + 1e-12) {
            return Err(Error::DegenerateColor(format!(
                "xy chromaticity out of gamut: ({x}, {y})"
            )));
        }
        Ok(Self {
            a: x,
            b: y,
            space: ChromaSpace::Xy,
        })
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.a, self.b]
    }
}

/// Scene illuminant descriptor. `raw` is always known; `xy` and `cct` are
/// filled in by the white-point conversion in [`crate::cct`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitePoint {
    pub raw: Chromaticity2D,
    pub xy: Option<Chromaticity2D>,
    pub cct: Option<f64>,
}

impl WhitePoint {
    pub fn from_raw(r_over_g: f64, b_over_g: f64) -> Result<Self> {
        Ok(Self {
            raw: Chromaticity2D::raw(r_over_g, b_over_g)?,
            xy: None,
            cct: None,
        })
    }

    /// White point of a sensor response (`r/g`, `b/g`).
    pub fn from_response(p: RawTriple) -> Result<Self> {
        if !(p.g > 0.0) {
            return Err(Error::DegenerateWhite);
        }
        Self::from_raw(p.r / p.g, p.b / p.g)
    }

    pub fn with_derived(mut self, xy: Chromaticity2D, cct: f64) -> Result<Self> {
        if xy.space != ChromaSpace::Xy {
            return Err(Error::InvalidWhitePoint("derived chromaticity must be xy".into()));
        }
        if !(1500.0..=25000.0).contains(&cct) {
            return Err(Error::InvalidWhitePoint(format!("CCT {cct} K outside [1500, 25000]")));
        }
        self.xy = Some(xy);
        self.cct = Some(cct);
        Ok(self)
    }

    /// The sensor-space vector `(r/g, 1, b/g)`.
    pub fn raw_vector(&self) -> RawTriple {
        RawTriple::new(self.raw.a, 1.0, self.raw.b)
    }
}

/// Diagonal white balance `diag(g/r, 1, g/b)`.
pub fn white_balance(p: RawTriple, w: &WhitePoint) -> Result<RawTriple> {
    let (wr, wb) = (w.raw.a, w.raw.b);
    if !(wr > 0.0 && wb > 0.0 && wr.is_finite() && wb.is_finite()) {
        return Err(Error::InvalidWhitePoint(format!(
            "white point components must be positive, got ({wr}, {wb})"
        )));
    }
    Ok(RawTriple::new(p.r / wr, p.g, p.b / wb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Linear,
    Poly,
    Rootpoly,
}

/// Feature expansion used by a CST: the linear 3×3 case or one of the
/// polynomial / root-polynomial bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "HeadSpec", into = "HeadSpec")]
pub enum FeatureHead {
    Linear,
    Poly9,
    Poly19,
    RootPoly6,
    RootPoly13,
}

#[derive(Serialize, Deserialize)]
struct HeadSpec {
    kind: HeadKind,
    size: usize,
}

impl TryFrom<HeadSpec> for FeatureHead {
    type Error = Error;

    fn try_from(spec: HeadSpec) -> Result<Self> {
        FeatureHead::new(spec.kind, spec.size)
    }
}

impl From<FeatureHead> for HeadSpec {
    fn from(h: FeatureHead) -> Self {
        HeadSpec {
            kind: h.kind(),
            size: h.size(),
        }
    }
}

impl FeatureHead {
    pub fn new(kind: HeadKind, size: usize) -> Result<Self> {
        match (kind, size) {
            (HeadKind::Linear, 3) => Ok(Self::Linear),
            (HeadKind::Poly, 9) => Ok(Self::Poly9),
            (HeadKind::Poly, 19) => Ok(Self::Poly19),
            (HeadKind::Rootpoly, 6) => Ok(Self::RootPoly6),
            (HeadKind::Rootpoly, 13) => Ok(Self::RootPoly13),
            _ => Err(Error::Config(format!(
                "unsupported feature head {kind:?} with {size} terms"
            ))),
        }
    }

    pub fn kind(self) -> HeadKind {
        match self {
            Self::Linear => HeadKind::Linear,
            Self::Poly9 | Self::Poly19 => HeadKind::Poly,
            Self::RootPoly6 | Self::RootPoly13 => HeadKind::Rootpoly,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Linear => 3,
            Self::RootPoly6 => 6,
            Self::Poly9 => 9,
            Self::RootPoly13 => 13,
            Self::Poly19 => 19,
        }
    }

    pub fn expand(self, p: RawTriple) -> Vec<f64> {
        let RawTriple { r, g, b } = p;
        let mut f = vec![r, g, b];
        match self {
            Self::Linear => {}
            Self::Poly9 | Self::Poly19 => {
                f.extend([r * r, g * g, b * b, r * g, g * b, r * b]);
                if self == Self::Poly19 {
                    f.extend([
                        r * r * r,
                        g * g * g,
                        b * b * b,
                        r * r * g,
                        r * r * b,
                        g * g * r,
                        g * g * b,
                        b * b * r,
                        b * b * g,
                        r * g * b,
                    ]);
                }
            }
            Self::RootPoly6 | Self::RootPoly13 => {
                f.extend([(r * g).sqrt(), (g * b).sqrt(), (r * b).sqrt()]);
                if self == Self::RootPoly13 {
                    f.extend([
                        (r * r * g).cbrt(),
                        (r * r * b).cbrt(),
                        (g * g * r).cbrt(),
                        (g * g * b).cbrt(),
                        (b * b * r).cbrt(),
                        (b * b * g).cbrt(),
                        (r * g * b).cbrt(),
                    ]);
                }
            }
        }
        f
    }
}

/// Feature vector of `p` for a head given by kind and term count.
pub fn expand_features(p: RawTriple, kind: HeadKind, size: usize) -> Result<Vec<f64>> {
    Ok(FeatureHead::new(kind, size)?.expand(p))
}

/// A color space transform: a 3×K matrix applied to expanded features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CstRecord", into = "CstRecord")]
pub struct Cst {
    head: FeatureHead,
    /// Row-major 3×K.
    m: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CstRecord {
    #[serde(default = "linear_head")]
    head: FeatureHead,
    m: Vec<Vec<f64>>,
}

fn linear_head() -> FeatureHead {
    FeatureHead::Linear
}

impl TryFrom<CstRecord> for Cst {
    type Error = Error;

    fn try_from(rec: CstRecord) -> Result<Self> {
        let k = rec.head.size();
        let flat: Vec<f64> = if rec.m.len() == 1 && rec.m[0].len() == 3 * k {
            rec.m[0].clone()
        } else if rec.m.len() == 3 && rec.m.iter().all(|row| row.len() == k) {
            rec.m.concat()
        } else {
            return Err(Error::Config(format!(
                "CST matrix must be 3x{k} (nested rows or one flat row-major list)"
            )));
        };
        Cst::new(rec.head, flat)
    }
}

impl From<Cst> for CstRecord {
    fn from(c: Cst) -> Self {
        CstRecord {
            head: c.head,
            m: c.m.chunks(c.head.size()).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl Cst {
    pub fn new(head: FeatureHead, m: Vec<f64>) -> Result<Self> {
        if m.len() != 3 * head.size() {
            return Err(Error::Config(format!(
                "CST for a {}-term head needs {} entries, got {}",
                head.size(),
                3 * head.size(),
                m.len()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateColor("CST has non-finite entries".into()));
        }
        Ok(Self { head, m })
    }

    pub fn linear(rows: [[f64; 3]; 3]) -> Self {
        Self {
            head: FeatureHead::Linear,
            m: rows.concat(),
        }
    }

    pub fn identity() -> Self {
        Self::linear([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn head(&self) -> FeatureHead {
        self.head
    }

    pub fn entries(&self) -> &[f64] {
        &self.m
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[row * self.head.size() + col]
    }

    /// The 3×3 rows of a linear CST.
    pub fn as_linear(&self) -> Option<[[f64; 3]; 3]> {
        (self.head == FeatureHead::Linear).then(|| {
            let m = &self.m;
            [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]]
        })
    }

    pub fn determinant(&self) -> Option<f64> {
        self.as_linear().map(|m| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        })
    }

    /// Divides by the (1,1) entry so the center element is exactly 1.
    pub fn center_normalized(&self) -> Result<Self> {
        let c = self.get(1, 1);
        if !(c.abs() > 1e-300) {
            return Err(Error::DegenerateColor("CST center entry is zero".into()));
        }
        let mut m: Vec<f64> = self.m.iter().map(|v| v / c).collect();
        if self.head == FeatureHead::Linear {
            m[4] = 1.0;
        }
        Ok(Self { head: self.head, m })
    }

    /// `g·a + (1−g)·b`, elementwise.
    pub fn blend(a: &Cst, b: &Cst, g: f64) -> Result<Cst> {
        if a.head != b.head {
            return Err(Error::Config("cannot blend CSTs with different heads".into()));
        }
        let m = a.m.iter().zip(&b.m).map(|(x, y)| g * x + (1.0 - g) * y).collect();
        Ok(Cst { head: a.head, m })
    }

    pub fn apply_features(&self, f: &[f64]) -> XyzTriple {
        let k = self.head.size();
        let row = |i: usize| -> f64 { self.m[i * k..(i + 1) * k].iter().zip(f).map(|(a, b)| a * b).sum() };
        XyzTriple::new(row(0), row(1), row(2))
    }

    pub fn max_abs_diff(&self, other: &Cst) -> f64 {
        self.m
            .iter()
            .zip(&other.m)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Maps a (white-balanced) raw value to XYZ.
pub fn apply_cst(p: RawTriple, t: &Cst) -> XyzTriple {
    match t.as_linear() {
        Some(m) => XyzTriple::new(
            m[0][0] * p.r + m[0][1] * p.g + m[0][2] * p.b,
            m[1][0] * p.r + m[1][1] * p.g + m[1][2] * p.b,
            m[2][0] * p.r + m[2][1] * p.g + m[2][2] * p.b,
        ),
        None => t.apply_features(&t.head.expand(p)),
    }
}

pub fn xyz_to_xy(p: XyzTriple) -> Result<Chromaticity2D> {
    let sum = p.x + p.y + p.z;
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::DegenerateColor(format!("XYZ sum is {sum}")));
    }
    Chromaticity2D::xy(p.x / sum, p.y / sum)
}

/// Angle between two color vectors, in degrees.
pub fn angle_deg(a: [f64; 3], b: [f64; 3]) -> Result<f64> {
    let na = norm(a);
    let nb = norm(b);
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::DegenerateColor("angular error of a zero vector".into()));
    }
    // atan2 of |a×b| and a·b stays accurate for nearly parallel vectors.
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    Ok(norm(cross).atan2(dot(a, b)).to_degrees())
}

pub fn angular_error(a: XyzTriple, b: XyzTriple) -> Result<f64> {
    angle_deg(a.to_array(), b.to_array())
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

const LAB_EPS: f64 = 216.0 / 24389.0; // (6/29)^3

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPS {
        t.cbrt()
    } else {
        t * (841.0 / 108.0) + 4.0 / 29.0
    }
}

pub fn xyz_to_lab(p: XyzTriple, white: XyzTriple) -> Result<LabTriple> {
    if !(white.x > 0.0 && white.y > 0.0 && white.z > 0.0) {
        return Err(Error::InvalidReferenceWhite(format!("{white:?}")));
    }
    let fx = lab_f(p.x / white.x);
    let fy = lab_f(p.y / white.y);
    let fz = lab_f(p.z / white.z);
    Ok(LabTriple::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)))
}

/// CIEDE2000 color difference with kL = kC = kH = 1.
pub fn delta_e_2000(lab1: LabTriple, lab2: LabTriple) -> f64 {
    const POW25_7: f64 = 6_103_515_625.0;

    let c1 = lab1.a.hypot(lab1.b);
    let c2 = lab2.a.hypot(lab2.b);
    let c_bar7 = ((c1 + c2) / 2.0).powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + POW25_7)).sqrt());

    let a1p = (1.0 + g) * lab1.a;
    let a2p = (1.0 + g) * lab2.a;
    let c1p = a1p.hypot(lab1.b);
    let c2p = a2p.hypot(lab2.b);
    let hue = |b: f64, ap: f64| -> f64 {
        if b == 0.0 && ap == 0.0 {
            0.0
        } else {
            let h = b.atan2(ap).to_degrees();
            if h < 0.0 {
                h + 360.0
            } else {
                h
            }
        }
    };
    let h1p = hue(lab1.b, a1p);
    let h2p = hue(lab2.b, a2p);

    let dl = lab2.l - lab1.l;
    let dc = c2p - c1p;
    let chroma_product = c1p * c2p;
    let dh_deg = if chroma_product == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let dh = 2.0 * chroma_product.sqrt() * (dh_deg.to_radians() / 2.0).sin();

    let l_bar = (lab1.l + lab2.l) / 2.0;
    let c_bar_p = (c1p + c2p) / 2.0;
    let h_bar_p = if chroma_product == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        (h1p + h2p) / 2.0
    } else if h1p + h2p < 360.0 {
        (h1p + h2p + 360.0) / 2.0
    } else {
        (h1p + h2p - 360.0) / 2.0
    };

    let t = 1.0 - 0.17 * (h_bar_p - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_bar_p).to_radians().cos()
        + 0.32 * (3.0 * h_bar_p + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_bar_p - 63.0).to_radians().cos();
    let d_theta = 30.0 * (-((h_bar_p - 275.0) / 25.0).powi(2)).exp();
    let c_bar_p7 = c_bar_p.powi(7);
    let r_c = 2.0 * (c_bar_p7 / (c_bar_p7 + POW25_7)).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * c_bar_p;
    let s_h = 1.0 + 0.015 * c_bar_p * t;
    let r_t = -(2.0 * d_theta).to_radians().sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = dh / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th).sqrt()
}

/// Mean CIEDE2000 over the chart after matching exposure on the gray anchor
/// patch, with a D50 reference white.
pub fn chart_delta_e(pred: &[XyzTriple; CHART_PATCHES], gt: &[XyzTriple; CHART_PATCHES]) -> Result<f64> {
    chart_delta_e_with_white(pred, gt, D50_WHITE)
}

pub fn chart_delta_e_with_white(
    pred: &[XyzTriple; CHART_PATCHES],
    gt: &[XyzTriple; CHART_PATCHES],
    white: XyzTriple,
) -> Result<f64> {
    let pred_y = pred[GRAY_ANCHOR_INDEX].y;
    let gt_y = gt[GRAY_ANCHOR_INDEX].y;
    if !(pred_y > 0.0 && gt_y > 0.0) {
        return Err(Error::DegenerateAnchor(format!(
            "predicted Y = {pred_y}, reference Y = {gt_y}"
        )));
    }
    let s = gt_y / pred_y;
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let lp = xyz_to_lab(p.scaled(s), white)?;
        let lg = xyz_to_lab(*g, white)?;
        total += delta_e_2000(lp, lg);
    }
    Ok(total / CHART_PATCHES as f64)
}

/// One chart capture: raw patch means, the illuminant's white point and the
/// reference XYZ of every patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartObservation {
    pub illuminant_id: String,
    pub patches_raw: [RawTriple; CHART_PATCHES],
    pub white: WhitePoint,
    pub gt_xyz: [XyzTriple; CHART_PATCHES],
}

impl ChartObservation {
    pub fn white_balanced(&self) -> Result<[RawTriple; CHART_PATCHES]> {
        let mut out = [RawTriple::default(); CHART_PATCHES];
        for (o, p) in out.iter_mut().zip(&self.patches_raw) {
            *o = white_balance(*p, &self.white)?;
        }
        Ok(out)
    }
}
