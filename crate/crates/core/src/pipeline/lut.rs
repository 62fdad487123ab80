use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::color::{Cst, WhitePoint};
use crate::error::{Error, Result};
use crate::mlp::{assemble_cst, InputEncoding, MlpModel};

/// Fraction of the training range added on each side of the LUT bounds.
pub const LUT_MARGIN: f64 = 0.05;

const SNAP: f64 = 1e-9;

/// A uniform 2D grid of linear CSTs over the normalized input space, queried
/// by bilinear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LutRecord", into = "LutRecord")]
pub struct Lut {
    grid_n: usize,
    bounds: [[f64; 2]; 2],
    encoding: InputEncoding,
    /// Row-major: `cells[i * grid_n + j]` sits at node `(i, j)`.
    cells: Vec<Cst>,
}

#[derive(Serialize, Deserialize)]
struct LutRecord {
    grid_n: usize,
    bounds: [[f64; 2]; 2],
    encoding: InputEncoding,
    cells: Vec<[f64; 9]>,
}

impl TryFrom<LutRecord> for Lut {
    type Error = Error;

    fn try_from(r: LutRecord) -> Result<Self> {
        let cells = r
            .cells
            .iter()
            .map(|m| Cst::linear([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]]))
            .collect();
        Lut::new(r.grid_n, r.bounds, r.encoding, cells)
    }
}

impl From<Lut> for LutRecord {
    fn from(l: Lut) -> Self {
        Self {
            grid_n: l.grid_n,
            bounds: l.bounds,
            encoding: l.encoding,
            cells: l
                .cells
                .iter()
                .map(|c| c.entries().try_into().expect("LUT cells are linear"))
                .collect(),
        }
    }
}

impl Lut {
    pub fn new(grid_n: usize, bounds: [[f64; 2]; 2], encoding: InputEncoding, cells: Vec<Cst>) -> Result<Self> {
        if grid_n < 2 {
            return Err(Error::Config(format!(
                "LUT grid needs at least 2 nodes per side, got {grid_n}"
            )));
        }
        if encoding.dim() != 2 {
            return Err(Error::UnsupportedEncoding(format!(
                "LUT needs a 2D encoding, got {}",
                encoding.kind.name()
            )));
        }
        if bounds
            .iter()
            .any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::Config(format!("invalid LUT bounds {bounds:?}")));
        }
        if cells.len() != grid_n * grid_n {
            return Err(Error::Config(format!(
                "LUT needs {} cells, got {}",
                grid_n * grid_n,
                cells.len()
            )));
        }
        if cells
            .iter()
            .any(|c| c.as_linear().is_none() || c.entries().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Config("LUT cells must be finite linear CSTs".into()));
        }
        Ok(Self {
            grid_n,
            bounds,
            encoding,
            cells,
        })
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn bounds(&self) -> [[f64; 2]; 2] {
        self.bounds
    }

    pub fn encoding(&self) -> &InputEncoding {
        &self.encoding
    }

    pub fn cells(&self) -> &[Cst] {
        &self.cells
    }

    /// Normalized coordinate of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let step = |d: usize, k: usize| {
            let [lo, hi] = self.bounds[d];
            if k + 1 == self.grid_n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (self.grid_n - 1) as f64
            }
        };
        [step(0, i), step(1, j)]
    }

    pub fn cell(&self, i: usize, j: usize) -> &Cst {
        &self.cells[i * self.grid_n + j]
    }

    /// Storage of the matrices as 32-bit floats.
    pub fn size_bytes(&self) -> usize {
        self.cells.len() * 9 * 4
    }

    /// Lower node index and fractional offset along dimension `d`, clamped
    /// to the bounds and snapped onto nodes closer than 1e-9 cells.
    fn locate(&self, d: usize, z: f64) -> (usize, f64) {
        let [lo, hi] = self.bounds[d];
        let n = self.grid_n - 1;
        let t = (z.clamp(lo, hi) - lo) / (hi - lo) * n as f64;
        let mut i = (t.floor() as usize).min(n - 1);
        let mut f = t - i as f64;
        if f < SNAP {
            f = 0.0;
        } else if 1.0 - f < SNAP {
            if i + 1 < n {
                i += 1;
                f = 0.0;
            } else {
                f = 1.0;
            }
        }
        (i, f)
    }

    /// Bilinear interpolation at a normalized input.
    pub fn query_encoded(&self, z: &[f64]) -> Cst {
        let (i, fx) = self.locate(0, z[0]);
        let (j, fy) = self.locate(1, z[1]);
        let corners = [
            ((i, j), (1.0 - fx) * (1.0 - fy)),
            ((i + 1, j), fx * (1.0 - fy)),
            ((i, j + 1), (1.0 - fx) * fy),
            ((i + 1, j + 1), fx * fy),
        ];
        let mut m = [0.0; 9];
        for ((ci, cj), wt) in corners {
            if wt == 0.0 {
                continue;
            }
            for (o, v) in m.iter_mut().zip(self.cell(ci, cj).entries()) {
                *o += wt * v;
            }
        }
        Cst::linear([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]])
    }

    pub fn query(&self, w: &WhitePoint) -> Result<Cst> {
        Ok(self.query_encoded(&self.encoding.encode(w)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::dataset::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::dataset::read_json(path)
    }
}

/// Default bounds: the training normalization range `[0, 1]` widened by
/// [`LUT_MARGIN`] per side.
pub fn default_bounds() -> [[f64; 2]; 2] {
    [[-LUT_MARGIN, 1.0 + LUT_MARGIN]; 2]
}

/// Samples a 2D model on a uniform grid.
pub fn lut_export(model: &MlpModel, grid_n: usize) -> Result<Lut> {
    lut_export_with_bounds(model, grid_n, default_bounds())
}

pub fn lut_export_with_bounds(model: &MlpModel, grid_n: usize, bounds: [[f64; 2]; 2]) -> Result<Lut> {
    if model.encoding.dim() != 2 {
        return Err(Error::UnsupportedEncoding(format!(
            "LUT export needs a 2D model, got {}",
            model.encoding.kind.name()
        )));
    }
    let mut lut = Lut::new(
        grid_n,
        bounds,
        model.encoding.clone(),
        vec![Cst::identity(); grid_n * grid_n],
    )?;
    lut.cells = (0..grid_n * grid_n)
        .map(|k| assemble_cst(&model.forward_encoded(&lut.node(k / grid_n, k % grid_n))))
        .collect();
    Ok(lut)
}

pub fn lut_query(lut: &Lut, w: &WhitePoint) -> Result<Cst> {
    lut.query(w)
}
