//! The CST-MLP: a small network mapping an encoded white point to the eight
//! free entries of a 3×3 CST whose center element is fixed to 1.

mod loss;
mod train;

use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::color::{Cst, WhitePoint};
use crate::error::{Error, Result};

pub use loss::{cosine_loss, cosine_loss_grad, loss_and_gradient, TrainSample};
pub use train::{dataset_fingerprint, train, TrainConfig, TrainMeta, TrainOutcome};

/// Positions of the eight free entries in the row-major 3×3 matrix.
pub const FREE_POSITIONS: [usize; 8] = [0, 1, 2, 3, 5, 6, 7, 8];

const IDENTITY_OUT: [f64; 8] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncodingKind {
    #[serde(rename = "cct1d")]
    Cct1D,
    #[serde(rename = "raw2d")]
    Raw2D,
    #[serde(rename = "xy2d")]
    Xy2D,
}

impl EncodingKind {
    pub fn dim(self) -> usize {
        match self {
            Self::Cct1D => 1,
            Self::Raw2D | Self::Xy2D => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cct1D => "cct1d",
            Self::Raw2D => "raw2d",
            Self::Xy2D => "xy2d",
        }
    }

    /// Un-normalized coordinates of a white point: reciprocal CCT, `(r/g, b/g)`
    /// or `(x, y)`.
    pub fn coordinates(self, w: &WhitePoint) -> Result<Vec<f64>> {
        match self {
            Self::Cct1D => match w.cct {
                Some(k) if k > 0.0 => Ok(vec![1.0 / k]),
                _ => Err(Error::Encoding("white point has no CCT".into())),
            },
            Self::Raw2D => Ok(vec![w.raw.a, w.raw.b]),
            Self::Xy2D => {
                w.xy.map(|c| vec![c.a, c.b])
                    .ok_or_else(|| Error::Encoding("white point has no xy".into()))
            }
        }
    }
}

impl FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cct1d" => Ok(Self::Cct1D),
            "raw2d" => Ok(Self::Raw2D),
            "xy2d" => Ok(Self::Xy2D),
            other => Err(Error::UnsupportedEncoding(other.to_string())),
        }
    }
}

/// An encoding kind plus the per-dimension affine map fitted on training
/// data, `(v - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEncoding {
    pub kind: EncodingKind,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputEncoding {
    /// Fits min/max normalization over `whites`. A dimension with no spread
    /// gets scale 1.
    pub fn fit<'a>(kind: EncodingKind, whites: impl IntoIterator<Item = &'a WhitePoint>) -> Result<Self> {
        let d = kind.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut count = 0;
        for w in whites {
            for (i, v) in kind.coordinates(w)?.into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Encoding("cannot fit normalization on no data".into()));
        }
        let scale = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h - l > 1e-12 { h - l } else { 1.0 })
            .collect();
        Ok(Self {
            kind,
            offset: lo,
            scale,
        })
    }

    pub fn identity(kind: EncodingKind) -> Self {
        Self {
            kind,
            offset: vec![0.0; kind.dim()],
            scale: vec![1.0; kind.dim()],
        }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn encode(&self, w: &WhitePoint) -> Result<Vec<f64>> {
        let mut v = self.kind.coordinates(w)?;
        for ((x, o), s) in v.iter_mut().zip(&self.offset).zip(&self.scale) {
            *x = (*x - o) / s;
        }
        Ok(v)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.offset.len() != d || self.scale.len() != d {
            return Err(Error::Config(format!(
                "{} encoding needs {d} normalization terms",
                self.kind.name()
            )));
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.offset.iter().any(|o| !o.is_finite()) {
            return Err(Error::Config("normalization scale must be positive and finite".into()));
        }
        Ok(())
    }
}

pub fn encode_input(w: &WhitePoint, enc: &InputEncoding) -> Result<Vec<f64>> {
    enc.encode(w)
}

/// `[[o0,o1,o2],[o3,1,o4],[o5,o6,o7]]`.
pub fn assemble_cst(out: &[f64; 8]) -> Cst {
    let mut m = [0.0; 9];
    m[4] = 1.0;
    for (&pos, &v) in FREE_POSITIONS.iter().zip(out) {
        m[pos] = v;
    }
    Cst::linear([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]])
}

/// Inverse of [`assemble_cst`] after dividing by the center element.
pub fn extract_free(t: &Cst) -> Result<[f64; 8]> {
    if t.as_linear().is_none() {
        return Err(Error::Config("only linear CSTs have eight free entries".into()));
    }
    let n = t.center_normalized()?;
    Ok(std::array::from_fn(|i| n.entries()[FREE_POSITIONS[i]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Self::Relu => a.max(0.0),
            Self::Tanh => a.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative(self, a: f64, h: f64) -> f64 {
        match self {
            Self::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - h * h,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            other => Err(Error::Config(format!("unknown activation {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: usize,
    pub layers: usize,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: 32,
            layers: 1,
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || !(1..=3).contains(&self.layers) {
            return Err(Error::Config(format!(
                "need hidden > 0 and 1..=3 hidden layers, got {} x {}",
                self.hidden, self.layers
            )));
        }
        Ok(())
    }
}

/// A dense layer with `outputs × inputs` row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn outputs(&self) -> usize {
        self.bias.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub encoding: InputEncoding,
    pub activation: Activation,
    pub hidden: usize,
    /// Hidden layers followed by the 8-unit output layer.
    pub layers: Vec<Dense>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<TrainMeta>,
}

/// Per-layer activations kept for backpropagation.
pub(crate) struct ForwardTrace {
    /// Input to each layer (the first is the encoded white point).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation values of each hidden layer.
    pub pre: Vec<Vec<f64>>,
    pub out: [f64; 8],
}

impl MlpModel {
    /// Glorot-uniform weights, zero hidden biases and an output bias equal to
    /// the identity assembly.
    pub fn init<R: Rng + ?Sized>(encoding: InputEncoding, arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        encoding.validate()?;
        let mut sizes = vec![encoding.dim()];
        sizes.extend(std::iter::repeat_n(arch.hidden, arch.layers));
        sizes.push(8);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_out)
                .map(|_| (0..fan_in).map(|_| rng.random_range(-limit..limit)).collect())
                .collect();
            layers.push(Dense {
                weights,
                bias: vec![0.0; fan_out],
            });
        }
        layers.last_mut().expect("output layer").bias = IDENTITY_OUT.to_vec();
        Ok(Self {
            encoding,
            activation: arch.activation,
            hidden: arch.hidden,
            layers,
            meta: None,
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            hidden: self.hidden,
            layers: self.layers.len() - 1,
            activation: self.activation,
        }
    }

    /// Sets every output-layer weight and bias to zero.
    pub fn zero_head(&mut self) {
        let head = self.layers.last_mut().expect("output layer");
        head.weights.iter_mut().for_each(|r| r.fill(0.0));
        head.bias.fill(0.0);
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.inputs() * l.outputs() + l.outputs()).sum()
    }

    /// Multiply-accumulate count of one forward pass.
    pub fn macs(&self) -> usize {
        self.layers.iter().map(|l| l.inputs() * l.outputs()).sum()
    }

    /// All parameters, layer by layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.weights.iter().for_each(|r| p.extend_from_slice(r));
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for r in &mut l.weights {
                r.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
            }
            l.bias.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub(crate) fn forward_trace(&self, z: &[f64]) -> ForwardTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = z.to_vec();
        let (head, hidden) = self.layers.split_last().expect("output layer");
        for l in hidden {
            let a = l.forward(&h);
            inputs.push(h);
            h = a.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(a);
        }
        let o = head.forward(&h);
        inputs.push(h);
        ForwardTrace {
            inputs,
            pre,
            out: std::array::from_fn(|i| o[i]),
        }
    }

    /// Adds `dL/dout` backpropagated through the network into `grad`, laid out
    /// like [`MlpModel::params`].
    pub(crate) fn backward(&self, trace: &ForwardTrace, d_out: &[f64; 8], grad: &mut [f64]) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.inputs() * l.outputs() + l.outputs();
        }
        let mut delta: Vec<f64> = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let x = &trace.inputs[li];
            let (nin, nout) = (l.inputs(), l.outputs());
            let base = offsets[li];
            for o in 0..nout {
                let row = &mut grad[base + o * nin..base + (o + 1) * nin];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += delta[o] * xi;
                }
                grad[base + nin * nout + o] += delta[o];
            }
            if li == 0 {
                break;
            }
            let pre = &trace.pre[li - 1];
            delta = (0..nin)
                .map(|i| {
                    let back: f64 = (0..nout).map(|o| l.weights[o][i] * delta[o]).sum();
                    back * self.activation.derivative(pre[i], x[i])
                })
                .collect();
        }
    }

    pub fn forward_encoded(&self, z: &[f64]) -> [f64; 8] {
        self.forward_trace(z).out
    }

    pub fn predict_cst(&self, w: &WhitePoint) -> Result<Cst> {
        let z = self.encoding.encode(w)?;
        Ok(assemble_cst(&self.forward_encoded(&z)))
    }

    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        self.architecture().validate()?;
        let mut width = self.encoding.dim();
        for (i, l) in self.layers.iter().enumerate() {
            let expect_out = if i + 1 == self.layers.len() { 8 } else { self.hidden };
            if l.outputs() != expect_out || l.weights.len() != expect_out || l.weights.iter().any(|r| r.len() != width)
            {
                return Err(Error::Config(format!("layer {i} has inconsistent shape")));
            }
            width = expect_out;
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("model has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        model.validate().map_err(|e| Error::format(path, e))?;
        Ok(model)
    }
}

pub fn predict_cst(model: &MlpModel, w: &WhitePoint) -> Result<Cst> {
    model.predict_cst(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Chromaticity2D;
    use crate::rng::{stream, Stream};

    fn white(x: f64, y: f64, cct: f64) -> WhitePoint {
        WhitePoint::from_raw(0.5, 0.7)
            .unwrap()
            .with_derived(Chromaticity2D::xy(x, y).unwrap(), cct)
            .unwrap()
    }

    #[test]
    fn assembly() {
        assert_eq!(
            assemble_cst(&[0.0; 8]).as_linear().unwrap(),
            [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]
        );
        assert_eq!(assemble_cst(&IDENTITY_OUT), Cst::identity());
        let t = Cst::linear([[0.5, 0.2, 0.1], [0.3, 2.0, -0.4], [0.0, 0.1, 0.7]]);
        let n = t.center_normalized().unwrap();
        assert_eq!(assemble_cst(&extract_free(&t).unwrap()), n);
    }

    #[test]
    fn normalization_endpoints() {
        let ws = [white(0.30, 0.31, 6500.0), white(0.45, 0.41, 2500.0)];
        let enc = InputEncoding::fit(EncodingKind::Xy2D, &ws).unwrap();
        assert_eq!(enc.encode(&ws[0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(enc.encode(&ws[1]).unwrap(), vec![1.0, 1.0]);
        let cct = InputEncoding::fit(EncodingKind::Cct1D, &ws).unwrap();
        let mid = 2.0 / (1.0 / 2500.0 + 1.0 / 6500.0);
        let z = cct.encode(&white(0.35, 0.35, mid)).unwrap()[0];
        assert!((z - 0.5).abs() < 1e-12);
        let flat = InputEncoding::fit(EncodingKind::Raw2D, &ws).unwrap();
        assert_eq!(flat.scale, vec![1.0, 1.0]);
    }

    #[test]
    fn missing_fields_fail_to_encode() {
        let w = WhitePoint::from_raw(0.5, 0.7).unwrap();
        assert!(matches!(EncodingKind::Xy2D.coordinates(&w), Err(Error::Encoding(_))));
        assert!(matches!(EncodingKind::Cct1D.coordinates(&w), Err(Error::Encoding(_))));
        assert!(matches!(
            "rgb3d".parse::<EncodingKind>(),
            Err(Error::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn init_and_zero_head() {
        let mut rng = stream(7, Stream::WeightInit);
        let enc = InputEncoding::identity(EncodingKind::Xy2D);
        let mut model = MlpModel::init(enc, Architecture::default(), &mut rng).unwrap();
        assert_eq!(model.param_count(), 2 * 32 + 32 + 32 * 8 + 8);
        let limit = (6.0f64 / 34.0).sqrt();
        assert!(model.layers[0].weights.iter().flatten().all(|w| w.abs() <= limit));
        let w = white(0.33, 0.34, 5500.0);
        let a = model.predict_cst(&w).unwrap();
        let b = model.predict_cst(&w).unwrap();
        assert_eq!(a.entries(), b.entries());
        model.zero_head();
        assert_eq!(model.predict_cst(&w).unwrap(), assemble_cst(&[0.0; 8]));
    }

    #[test]
    fn params_round_trip_and_json() {
        let mut rng = stream(3, Stream::WeightInit);
        let arch = Architecture {
            hidden: 5,
            layers: 2,
            activation: Activation::Tanh,
        };
        let mut model = MlpModel::init(InputEncoding::identity(EncodingKind::Cct1D), arch, &mut rng).unwrap();
        let p: Vec<f64> = (0..model.param_count()).map(|i| i as f64 * 0.01).collect();
        model.set_params(&p).unwrap();
        assert_eq!(model.params(), p);
        let back: MlpModel = serde_json::from_str(&model.to_json()).unwrap();
        assert_eq!(back, model);
        back.validate().unwrap();
    }
}
