use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::color::{RawTriple, XyzTriple};
use crate::error::{Error, Result};

/// A sampled spectral function (SPD, reflectance or sensitivity).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub wavelengths: Vec<f64>,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(wavelengths: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != values.len() || wavelengths.len() < 2 {
            return Err(Error::SpectralGrid(format!(
                "{} wavelengths for {} values",
                wavelengths.len(),
                values.len()
            )));
        }
        if wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::SpectralGrid("wavelengths must increase".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::SpectralGrid("spectrum has non-finite values".into()));
        }
        Ok(Self { wavelengths, values })
    }

    pub fn constant(wavelengths: &[f64], v: f64) -> Self {
        Self {
            wavelengths: wavelengths.to_vec(),
            values: vec![v; wavelengths.len()],
        }
    }

    pub fn from_fn(wavelengths: &[f64], f: impl Fn(f64) -> f64) -> Self {
        Self {
            wavelengths: wavelengths.to_vec(),
            values: wavelengths.iter().map(|&l| f(l)).collect(),
        }
    }

    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.wavelengths == other.wavelengths
    }

    fn check_grid(&self, other: &Spectrum) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::SpectralGrid(format!(
                "grids differ ({} samples from {} nm vs {} samples from {} nm)",
                self.wavelengths.len(),
                self.wavelengths[0],
                other.wavelengths.len(),
                other.wavelengths[0]
            )))
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            wavelengths: self.wavelengths.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    /// `Σ wᵢ·sᵢ` over spectra on a common grid.
    pub fn weighted_sum(parts: &[Spectrum], weights: &[f64]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::SpectralGrid("weighted sum of no spectra".into()))?;
        if parts.len() != weights.len() {
            return Err(Error::SpectralGrid(format!(
                "{} spectra for {} weights",
                parts.len(),
                weights.len()
            )));
        }
        let mut values = vec![0.0; first.values.len()];
        for (s, w) in parts.iter().zip(weights) {
            first.check_grid(s)?;
            values.iter_mut().zip(&s.values).for_each(|(acc, v)| *acc += w * v);
        }
        Ok(Self {
            wavelengths: first.wavelengths.clone(),
            values,
        })
    }

    /// Trapezoidal integral of the product of `self` and `others`.
    pub fn integrate_product(&self, others: &[&Spectrum]) -> Result<f64> {
        for o in others {
            self.check_grid(o)?;
        }
        let f = |i: usize| others.iter().fold(self.values[i], |acc, s| acc * s.values[i]);
        Ok(self
            .wavelengths
            .windows(2)
            .enumerate()
            .map(|(i, w)| 0.5 * (w[1] - w[0]) * (f(i) + f(i + 1)))
            .sum())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
        let headers = rdr.headers().map_err(|e| Error::format(path, e))?.clone();
        if headers.len() != 2 || &headers[0] != "wavelength_nm" || &headers[1] != "value" {
            return Err(Error::format(path, "expected header wavelength_nm,value"));
        }
        let mut wl = Vec::new();
        let mut vals = Vec::new();
        for rec in rdr.deserialize::<(f64, f64)>() {
            let (l, v) = rec.map_err(|e| Error::format(path, e))?;
            wl.push(l);
            vals.push(v);
        }
        Self::new(wl, vals).map_err(|e| Error::format(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
        w.write_record(["wavelength_nm", "value"])
            .map_err(|e| Error::format(path, e))?;
        for (l, v) in self.wavelengths.iter().zip(&self.values) {
            w.serialize((l, v)).map_err(|e| Error::format(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Per-channel trapezoidal integral of `spd · refl · sensᵢ`.
pub fn render_patch(spd: &Spectrum, refl: &Spectrum, sens: &[Spectrum; 3]) -> Result<RawTriple> {
    let c = |s: &Spectrum| spd.integrate_product(&[refl, s]);
    Ok(RawTriple::new(c(&sens[0])?, c(&sens[1])?, c(&sens[2])?))
}

/// Tristimulus value of a reflectance under `spd`, normalized so the
/// illuminant itself has Y = 1.
pub fn render_xyz(spd: &Spectrum, refl: &Spectrum, cmf: &[Spectrum; 3]) -> Result<XyzTriple> {
    let y_white = spd.integrate_product(&[&cmf[1]])?;
    if !(y_white > 0.0) {
        return Err(Error::SpectralGrid("illuminant has zero luminance".into()));
    }
    let c = |s: &Spectrum| Ok::<_, Error>(spd.integrate_product(&[refl, s])? / y_white);
    Ok(XyzTriple::new(c(&cmf[0])?, c(&cmf[1])?, c(&cmf[2])?))
}

/// Blackbody spectral radiance at `kelvin` on the given grid (nm), scaled
/// to 1 at 560 nm.
pub fn planck_spd(kelvin: f64, wavelengths: &[f64]) -> Spectrum {
    const C2: f64 = 1.4388e-2;
    let radiance = |nm: f64| {
        let l = nm * 1e-9;
        1.0 / (l.powi(5) * ((C2 / (l * kelvin)).exp() - 1.0))
    };
    let norm = radiance(560.0);
    Spectrum::from_fn(wavelengths, |nm| radiance(nm) / norm)
}

/// Several named spectra on one grid, in file order. JSON form:
/// `{"grid": [...], "spectra": {name: [...]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBundle {
    pub grid: Vec<f64>,
    pub spectra: NamedSpectra,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedSpectra(pub Vec<(String, Vec<f64>)>);

impl Serialize for NamedSpectra {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for NamedSpectra {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = NamedSpectra;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of spectrum names to value arrays")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> std::result::Result<NamedSpectra, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = m.next_entry::<String, Vec<f64>>()? {
                    out.push((k, v));
                }
                Ok(NamedSpectra(out))
            }
        }
        d.deserialize_map(V)
    }
}

impl SpectralBundle {
    pub fn from_json(text: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(text).map_err(|e| Error::SpectralGrid(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("bundle serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in &self.spectra.0 {
            Spectrum::new(self.grid.clone(), v.clone()).map_err(|e| Error::SpectralGrid(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn from_spectra(named: Vec<(String, Spectrum)>) -> Result<Self> {
        let grid = named
            .first()
            .map(|(_, s)| s.wavelengths.clone())
            .ok_or_else(|| Error::SpectralGrid("empty bundle".into()))?;
        let mut spectra = Vec::with_capacity(named.len());
        for (name, s) in named {
            if s.wavelengths != grid {
                return Err(Error::SpectralGrid(format!("{name} is on a different grid")));
            }
            spectra.push((name, s.values));
        }
        Ok(Self {
            grid,
            spectra: NamedSpectra(spectra),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.spectra.0.iter().map(|(k, _)| k.as_str())
    }

    pub fn get(&self, name: &str) -> Result<Spectrum> {
        self.spectra
            .0
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| Spectrum {
                wavelengths: self.grid.clone(),
                values: v.clone(),
            })
            .ok_or_else(|| Error::SpectralGrid(format!("no spectrum named {name}")))
    }

    pub fn all(&self) -> Vec<(String, Spectrum)> {
        self.spectra
            .0
            .iter()
            .map(|(k, v)| {
                (
                    k.clone(),
                    Spectrum {
                        wavelengths: self.grid.clone(),
                        values: v.clone(),
                    },
                )
            })
            .collect()
    }
}
