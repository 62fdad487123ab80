use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::color::{RawTriple, CHART_PATCHES};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"CHRTNSR\0";
pub const TENSOR_VERSION: u32 = 1;

/// Writes a little-endian f32 tensor: magic, version, rank, u64 dims, data.
pub fn write_tensor(path: &Path, dims: &[usize], data: &[f64]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(Error::format(path, format!("{} values for dims {dims:?}", data.len())));
    }
    let mut buf = Vec::with_capacity(16 + 8 * dims.len() + 4 * data.len());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::format(path, why);
    if bytes.len() < 16 || &bytes[..8] != TENSOR_MAGIC {
        return Err(bad("not a tensor file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(8) != TENSOR_VERSION {
        return Err(bad("unsupported tensor version"));
    }
    let rank = u32_at(12) as usize;
    let header = 16 + 8 * rank;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u64::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().expect("8 bytes")) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() != header + 4 * n {
        return Err(bad("payload size does not match dims"));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((dims, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub black_level: f64,
    pub white_level: f64,
}

/// Path of the JSON sidecar holding an image's black and white levels.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// A linear 3-channel image, row-major and channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub black_level: f64,
    pub white_level: f64,
}

impl RawImage {
    pub fn filled(width: usize, height: usize, value: f64, black_level: f64, white_level: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height * 3],
            black_level,
            white_level,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> RawTriple {
        let i = 3 * (y * self.width + x);
        RawTriple::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, p: RawTriple) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&p.to_array());
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.width * self.height * 3 {
            return Err(Error::Synthesis(format!(
                "{}x{} image holds {} values",
                self.width,
                self.height,
                self.data.len()
            )));
        }
        if !(self.black_level >= 0.0 && self.black_level < self.white_level) {
            return Err(Error::Synthesis(format!(
                "levels must satisfy 0 <= black < white, got {} / {}",
                self.black_level, self.white_level
            )));
        }
        if self
            .data
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0 && *v <= self.white_level))
        {
            return Err(Error::Synthesis("pixel values must lie in [0, white_level]".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_tensor(path, &[self.height, self.width, 3], &self.data)?;
        let levels = Levels {
            black_level: self.black_level,
            white_level: self.white_level,
        };
        let side = sidecar_path(path);
        std::fs::write(&side, serde_json::to_string_pretty(&levels).expect("levels serialize"))
            .map_err(|e| Error::io(side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (dims, data) = read_tensor(path)?;
        if dims.len() != 3 || dims[2] != 3 {
            return Err(Error::format(path, format!("expected [h, w, 3] tensor, got {dims:?}")));
        }
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let levels: Levels = serde_json::from_str(&text).map_err(|e| Error::format(&side, e))?;
        let img = Self {
            width: dims[1],
            height: dims[0],
            data,
            black_level: levels.black_level,
            white_level: levels.white_level,
        };
        img.validate().map_err(|e| Error::format(path, e))?;
        Ok(img)
    }
}

/// Channelwise mean over a `window × window` square around each center.
pub fn extract_patches(
    img: &RawImage,
    centers: &[(usize, usize); CHART_PATCHES],
    window: usize,
) -> Result<[RawTriple; CHART_PATCHES]> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Extraction {
            patch: 0,
            reason: format!("window must be odd and positive, got {window}"),
        });
    }
    let half = window / 2;
    let mut out = [RawTriple::default(); CHART_PATCHES];
    for (i, &(cx, cy)) in centers.iter().enumerate() {
        if cx < half || cy < half || cx + half >= img.width || cy + half >= img.height {
            return Err(Error::Extraction {
                patch: i,
                reason: format!(
                    "{window}x{window} window at ({cx}, {cy}) leaves the {}x{} image",
                    img.width, img.height
                ),
            });
        }
        let mut acc = [0.0; 3];
        for y in cy - half..=cy + half {
            for x in cx - half..=cx + half {
                let p = img.pixel(x, y).to_array();
                acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
            }
        }
        let n = (window * window) as f64;
        out[i] = RawTriple::new(acc[0] / n, acc[1] / n, acc[2] / n);
    }
    Ok(out)
}

/// True when every channel of every patch lies in the closed interval
/// `[black + margin·range, white − margin·range]`.
pub fn clip_filter(patches: &[RawTriple; CHART_PATCHES], black: f64, white: f64, margin: f64) -> bool {
    let range = white - black;
    let lo = black + margin * range;
    let hi = white - margin * range;
    patches.iter().flat_map(|p| p.to_array()).all(|v| v >= lo && v <= hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub image: RawImage,
    /// Number of values clamped to `[0, white_level]`.
    pub clipped: usize,
}

/// `black + Σ αᵢ·(Iᵢ − black)`, clamped to `[0, white_level]`.
pub fn synthesize_capture(bank: &[RawImage], alpha: &[f64]) -> Result<Capture> {
    let first = bank.first().ok_or_else(|| Error::Synthesis("no LED images".into()))?;
    if bank.len() != alpha.len() {
        return Err(Error::Synthesis(format!(
            "{} images for {} weights",
            bank.len(),
            alpha.len()
        )));
    }
    if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Synthesis(format!("weights must lie in [0, 1], got {alpha:?}")));
    }
    for img in bank {
        if (img.width, img.height) != (first.width, first.height)
            || img.black_level != first.black_level
            || img.white_level != first.white_level
            || img.data.len() != first.data.len()
        {
            return Err(Error::Synthesis("LED images differ in size or levels".into()));
        }
    }
    let black = first.black_level;
    let white = first.white_level;
    // Σ αᵢ·Iᵢ + (1 − Σ αᵢ)·black is the same sum, and reproduces a one-hot
    // input bit for bit.
    let black_weight = 1.0 - alpha.iter().sum::<f64>();
    let mut clipped = 0;
    let data = (0..first.data.len())
        .map(|i| {
            let mut v = black_weight * black;
            for (img, a) in bank.iter().zip(alpha) {
                if *a != 0.0 {
                    v += a * img.data[i];
                }
            }
            if v < 0.0 || v > white {
                clipped += 1;
            }
            v.clamp(0.0, white)
        })
        .collect();
    Ok(Capture {
        image: RawImage {
            width: first.width,
            height: first.height,
            data,
            black_level: black,
            white_level: white,
        },
        clipped,
    })
}

/// Geometry of the synthetic chart image: a grid of square patches separated
/// by background gaps, patches numbered in reading order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartLayout {
    pub cols: usize,
    pub rows: usize,
    pub patch: usize,
    pub gap: usize,
}

impl Default for ChartLayout {
    fn default() -> Self {
        Self {
            cols: 6,
            rows: 4,
            patch: 16,
            gap: 4,
        }
    }
}

impl ChartLayout {
    pub fn width(&self) -> usize {
        self.cols * self.patch + (self.cols + 1) * self.gap
    }

    pub fn height(&self) -> usize {
        self.rows * self.patch + (self.rows + 1) * self.gap
    }

    fn origin(&self, i: usize) -> (usize, usize) {
        let (c, r) = (i % self.cols, i / self.cols);
        (
            self.gap + c * (self.patch + self.gap),
            self.gap + r * (self.patch + self.gap),
        )
    }

    pub fn centers(&self) -> [(usize, usize); CHART_PATCHES] {
        std::array::from_fn(|i| {
            let (x, y) = self.origin(i);
            (x + self.patch / 2, y + self.patch / 2)
        })
    }

    /// Renders patch signals (above black) onto a black background.
    pub fn render(&self, signal: &[RawTriple; CHART_PATCHES], black: f64, white: f64) -> RawImage {
        let mut img = RawImage::filled(self.width(), self.height(), black, black, white);
        for (i, s) in signal.iter().enumerate() {
            let (x0, y0) = self.origin(i);
            let v = RawTriple::new(
                (black + s.r).clamp(0.0, white),
                (black + s.g).clamp(0.0, white),
                (black + s.b).clamp(0.0, white),
            );
            for y in y0..y0 + self.patch {
                for x in x0..x0 + self.patch {
                    img.set_pixel(x, y, v);
                }
            }
        }
        img
    }
}
