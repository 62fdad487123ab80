use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::SynthConfig;
use crate::error::{Error, Result};
use crate::mlp::{Activation, EncodingKind};

/// Name of the resolved configuration written into every output directory.
pub const RESOLVED_CONFIG: &str = "config.resolved.json";

/// Overlays `over` onto `base`. Keys must already exist in `base`; objects
/// merge recursively, anything else is replaced.
fn merge(base: &mut Value, over: Value, at: &str) -> Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                let slot = b
                    .get_mut(&k)
                    .ok_or_else(|| Error::Config(format!("unknown configuration key `{path}`")))?;
                if slot.is_object() && v.is_object() {
                    merge(slot, v, &path)?;
                } else {
                    *slot = v;
                }
            }
            Ok(())
        }
        (b, o) => {
            *b = o;
            Ok(())
        }
    }
}

fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str::<Value>(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str::<Value>(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|reason| Error::Config(format!("{}: {reason}", path.display())))
}

/// Defaults, then the config file, then flag overrides.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(file: Option<&Path>, flags: Map<String, Value>) -> Result<T> {
    let mut v = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(path) = file {
        merge(&mut v, read_config_file(path)?, "")?;
    }
    merge(&mut v, Value::Object(flags), "")?;
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}

/// Creates `dir` and writes the resolved configuration into it.
pub fn echo_config<T: Serialize>(dir: &Path, cfg: &T) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::dataset::write_json(&dir.join(RESOLVED_CONFIG), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthJob {
    pub out: PathBuf,
    pub synth: SynthConfig,
}

impl Default for SynthJob {
    fn default() -> Self {
        Self {
            out: PathBuf::from("data"),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub data: PathBuf,
    pub out: PathBuf,
    pub encoding: EncodingKind,
    pub noise_sigma: f64,
    pub hidden: usize,
    pub layers: usize,
    pub activation: Activation,
    pub lr: f64,
    pub iterations: usize,
    pub batch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainJob {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            out: PathBuf::from("model"),
            encoding: EncodingKind::Xy2D,
            noise_sigma: 0.05,
            hidden: 32,
            layers: 1,
            activation: Activation::Relu,
            lr: 1e-3,
            iterations: 100_000,
            batch: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Cst2,
    Cst3,
    Nn,
    Mlp,
    Lut,
    Oracle,
}

impl ProviderKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cst2 => "cst2",
            Self::Cst3 => "cst3",
            Self::Nn => "nn",
            Self::Mlp => "mlp",
            Self::Lut => "lut",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalJob {
    pub data: PathBuf,
    pub out: PathBuf,
    pub provider: ProviderKind,
    /// Model file for `mlp`, LUT file for `lut`.
    pub artifact: Option<PathBuf>,
    /// Key space of the nearest-neighbor index.
    pub encoding: EncodingKind,
    pub split: SplitPart,
    pub wp_offset_deg: f64,
    pub seed: u64,
    /// Lab reference white (XYZ) for ΔE2000.
    pub delta_e_white: [f64; 3],
}

impl Default for EvalJob {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            out: PathBuf::from("eval"),
            provider: ProviderKind::Cst2,
            artifact: None,
            encoding: EncodingKind::Xy2D,
            split: SplitPart::Test,
            wp_offset_deg: 0.0,
            seed: 0,
            delta_e_white: crate::color::D50_WHITE.to_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutJob {
    pub model: PathBuf,
    pub out: PathBuf,
    pub grid_n: usize,
    pub margin: f64,
}

impl Default for LutJob {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model/model.json"),
            out: PathBuf::from("lut"),
            grid_n: 20,
            margin: crate::pipeline::LUT_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportJob {
    /// Report JSON files, or directories holding a `report.json`.
    pub reports: Vec<PathBuf>,
    pub out: PathBuf,
}
