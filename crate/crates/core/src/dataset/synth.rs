use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cct::{white_raw_to_xy, CalibratedCstSet};
use crate::color::{
    angular_error, norm, ChartObservation, HeadKind, RawTriple, WhitePoint, XyzTriple, CHART_PATCHES, WHITE_PATCH_INDEX,
};
use crate::error::{Error, Result};
use crate::fitting::oracle_fit;
use crate::rng::{stream, Stream, StreamRng};

use super::image::{clip_filter, extract_patches, synthesize_capture, ChartLayout, RawImage};
use super::spectrum::{planck_spd, render_patch, render_xyz, SpectralBundle, Spectrum};

pub const LED_COUNT: usize = 7;

const CMF_JSON: &str = include_str!("../../assets/cie1931_2deg.json");
const D50_JSON: &str = include_str!("../../assets/d50.json");
const SENS_JSON: &str = include_str!("../../assets/camera_sensitivities.json");
const REFL_JSON: &str = include_str!("../../assets/chart_reflectances.json");
const LED_JSON: &str = include_str!("../../assets/led_bank.json");
const CHART_XYZ_JSON: &str = include_str!("../../assets/chart_xyz_d50.json");

fn three(bundle: &SpectralBundle, names: [&str; 3]) -> Result<[Spectrum; 3]> {
    Ok([bundle.get(names[0])?, bundle.get(names[1])?, bundle.get(names[2])?])
}

#[derive(Deserialize)]
struct ChartXyzFile {
    patches: Vec<ChartXyzEntry>,
}

#[derive(Deserialize)]
struct ChartXyzEntry {
    xyz: [f64; 3],
}

/// Reference XYZ of the 24 chart patches under D50 (illuminant Y = 1).
pub fn chart_gt_xyz() -> [XyzTriple; CHART_PATCHES] {
    let file: ChartXyzFile = serde_json::from_str(CHART_XYZ_JSON).expect("embedded chart table is valid");
    assert_eq!(file.patches.len(), CHART_PATCHES);
    std::array::from_fn(|i| XyzTriple::from(file.patches[i].xyz))
}

/// The synthetic camera and chart used for tests and generated datasets:
/// Gaussian-band sensitivities, 24 smooth reflectances, CIE 1931 observer
/// and D50.
#[derive(Debug, Clone)]
pub struct SyntheticCamera {
    pub sensitivities: [Spectrum; 3],
    pub cmf: [Spectrum; 3],
    pub d50: Spectrum,
    pub reflectances: Vec<(String, Spectrum)>,
    pub gt_xyz: [XyzTriple; CHART_PATCHES],
}

impl SyntheticCamera {
    pub fn shipped() -> Self {
        let parse = |t: &str| SpectralBundle::from_json(t).expect("embedded spectra are valid");
        let cmf = parse(CMF_JSON);
        let refl = parse(REFL_JSON);
        let cam = Self {
            sensitivities: three(&parse(SENS_JSON), ["r", "g", "b"]).expect("r, g, b present"),
            cmf: three(&cmf, ["x_bar", "y_bar", "z_bar"]).expect("CMFs present"),
            d50: parse(D50_JSON).get("D50").expect("D50 present"),
            reflectances: refl.all(),
            gt_xyz: chart_gt_xyz(),
        };
        assert_eq!(cam.reflectances.len(), CHART_PATCHES);
        cam
    }

    pub fn grid(&self) -> &[f64] {
        &self.d50.wavelengths
    }

    /// Raw response of every patch under `spd`.
    pub fn render_chart(&self, spd: &Spectrum) -> Result<[RawTriple; CHART_PATCHES]> {
        let mut out = [RawTriple::default(); CHART_PATCHES];
        for (o, (_, r)) in out.iter_mut().zip(&self.reflectances) {
            *o = render_patch(spd, r, &self.sensitivities)?;
        }
        Ok(out)
    }

    /// Patch XYZ under `spd`, illuminant normalized to Y = 1.
    pub fn chart_xyz(&self, spd: &Spectrum) -> Result<[XyzTriple; CHART_PATCHES]> {
        let mut out = [XyzTriple::default(); CHART_PATCHES];
        for (o, (_, r)) in out.iter_mut().zip(&self.reflectances) {
            *o = render_xyz(spd, r, &self.cmf)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedBank {
    pub names: Vec<String>,
    pub leds: Vec<Spectrum>,
}

impl LedBank {
    pub fn shipped() -> Self {
        Self::from_bundle(&SpectralBundle::from_json(LED_JSON).expect("embedded LED bank is valid"))
            .expect("embedded bank has 7 LEDs")
    }

    pub fn from_bundle(b: &SpectralBundle) -> Result<Self> {
        let (names, leds): (Vec<_>, Vec<_>) = b.all().into_iter().unzip();
        if leds.len() != LED_COUNT {
            return Err(Error::SpectralGrid(format!(
                "LED bank needs {LED_COUNT} spectra, got {}",
                leds.len()
            )));
        }
        if leds.iter().any(|s| s.values.iter().any(|v| *v < 0.0)) {
            return Err(Error::SpectralGrid("LED spectra must be non-negative".into()));
        }
        Ok(Self { names, leds })
    }

    pub fn mix(&self, weights: &[f64; LED_COUNT]) -> Result<Spectrum> {
        Spectrum::weighted_sum(&self.leds, weights)
    }
}

/// Dirichlet draws by normalizing independent Gamma variates. A draw whose
/// variates all underflow to zero is redrawn.
pub fn dirichlet_weights(
    n: usize,
    concentration: &[f64; LED_COUNT],
    rng: &mut StreamRng,
) -> Result<Vec<[f64; LED_COUNT]>> {
    let gammas = concentration
        .iter()
        .map(|&c| Gamma::new(c, 1.0).map_err(|e| Error::Config(format!("concentration {c}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g: [f64; LED_COUNT] = std::array::from_fn(|i| gammas[i].sample(rng));
        let sum: f64 = g.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            out.push(g.map(|v| v / sum));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledIlluminant {
    pub id: String,
    pub weights: [f64; LED_COUNT],
}

pub fn illuminant_id(i: usize) -> String {
    format!("led_{i:04}")
}

/// `n` LED mixtures with Dirichlet weights, returned with their SPDs.
pub fn sample_dirichlet_illuminants(
    bank: &LedBank,
    n: usize,
    concentration: &[f64; LED_COUNT],
    seed: u64,
) -> Result<Vec<(SampledIlluminant, Spectrum)>> {
    if n == 0 {
        return Err(Error::Config("need at least one illuminant".into()));
    }
    if concentration.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::Config("Dirichlet concentrations must be positive".into()));
    }
    let mut rng = stream(seed, Stream::Dirichlet);
    dirichlet_weights(n, concentration, &mut rng)?
        .into_iter()
        .enumerate()
        .map(|(i, weights)| {
            let spd = bank.mix(&weights)?;
            Ok((
                SampledIlluminant {
                    id: illuminant_id(i),
                    weights,
                },
                spd,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let mut all: Vec<&String> = self.train.iter().chain(&self.val).chain(&self.test).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        if all.len() != n {
            return Err(Error::Split("train/val/test overlap".into()));
        }
        Ok(())
    }
}

/// Seeded shuffle followed by a contiguous partition. Train and validation
/// sizes are rounded; the test set takes the remainder.
pub fn split_dataset(ids: &[String], fractions: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    if ids.is_empty() {
        return Err(Error::Split("no ids to split".into()));
    }
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(*f >= 0.0 && f.is_finite())) || ((a + b + c) - 1.0).abs() > 1e-6 {
        return Err(Error::Split(format!(
            "fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut stream(seed, Stream::Split));
    let n = ids.len();
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(SplitSpec {
        train: order,
        val,
        test,
    })
}

/// An observation whose white point is the raw color of the white patch.
pub fn build_observation(
    id: &str,
    patches_raw: [RawTriple; CHART_PATCHES],
    white_patch_index: usize,
    gt_xyz: [XyzTriple; CHART_PATCHES],
) -> Result<ChartObservation> {
    let w = patches_raw
        .get(white_patch_index)
        .ok_or_else(|| Error::Config(format!("white patch index {white_patch_index} out of range")))?;
    if !(w.r > 0.0 && w.b > 0.0) {
        return Err(Error::DegenerateWhite);
    }
    Ok(ChartObservation {
        illuminant_id: id.to_string(),
        patches_raw,
        white: WhitePoint::from_response(*w)?,
        gt_xyz,
    })
}

/// Rotates `(w_r, 1, w_b)` by `offset_deg` about a random axis orthogonal to
/// it. `xy` and `cct` are cleared since they no longer match.
pub fn perturb_white_with<R: Rng + ?Sized>(w: &WhitePoint, offset_deg: f64, rng: &mut R) -> Result<WhitePoint> {
    if !(offset_deg >= 0.0 && offset_deg.is_finite()) {
        return Err(Error::Config(format!("offset must be >= 0, got {offset_deg}")));
    }
    if offset_deg == 0.0 {
        return Ok(*w);
    }
    let v = w.raw_vector().to_array();
    let nv = norm(v);
    let vh = v.map(|x| x / nv);
    let axis = loop {
        let u: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let d = u[0] * vh[0] + u[1] * vh[1] + u[2] * vh[2];
        let a = [u[0] - d * vh[0], u[1] - d * vh[1], u[2] - d * vh[2]];
        let na = norm(a);
        if na > 1e-6 {
            break a.map(|x| x / na);
        }
    };
    // With the axis orthogonal to v, Rodrigues reduces to v cosθ + (k × v) sinθ.
    let (s, c) = offset_deg.to_radians().sin_cos();
    let kxv = [
        axis[1] * v[2] - axis[2] * v[1],
        axis[2] * v[0] - axis[0] * v[2],
        axis[0] * v[1] - axis[1] * v[0],
    ];
    let r: [f64; 3] = std::array::from_fn(|i| v[i] * c + kxv[i] * s);
    if !(r[1] > 0.0) {
        return Err(Error::InvalidWhitePoint("perturbed white has no green response".into()));
    }
    WhitePoint::from_raw(r[0] / r[1], r[2] / r[1])
}

pub fn perturb_white(w: &WhitePoint, offset_deg: f64, seed: u64) -> Result<WhitePoint> {
    perturb_white_with(w, offset_deg, &mut stream(seed, Stream::WhitePerturbation))
}

/// Angle between two white points' raw vectors, in degrees.
pub fn white_angle(a: &WhitePoint, b: &WhitePoint) -> Result<f64> {
    let (va, vb) = (a.raw_vector(), b.raw_vector());
    angular_error(XyzTriple::new(va.r, va.g, va.b), XyzTriple::new(vb.r, vb.g, vb.b))
}

/// Settings of the synthetic lightbox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub illuminants: usize,
    pub seed: u64,
    pub concentration: [f64; LED_COUNT],
    pub fractions: (f64, f64, f64),
    pub clip_margin: f64,
    /// Fraction of the dynamic range reached by the brightest single-LED
    /// white-patch channel.
    pub exposure: f64,
    pub black_level: f64,
    pub white_level: f64,
    pub window: usize,
    pub layout: ChartLayout,
    /// Explicit weight vectors used instead of Dirichlet draws when present.
    pub weights: Option<Vec<[f64; LED_COUNT]>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            illuminants: 400,
            seed: 0,
            concentration: [1.0 / LED_COUNT as f64; LED_COUNT],
            fractions: (0.5, 0.2, 0.3),
            clip_margin: 0.001,
            exposure: 0.85,
            black_level: 0.0625,
            white_level: 1.0,
            window: 11,
            layout: ChartLayout::default(),
            weights: None,
        }
    }
}

/// A sampled illuminant left out of the dataset, with the chart as
/// extracted when extraction got that far.
#[derive(Debug, Clone, PartialEq)]
pub struct Discard {
    pub illuminant_id: String,
    pub reason: String,
    pub chart: Option<ChartObservation>,
}

/// Calibration anchor temperatures.
pub const ANCHOR_CCTS: [f64; 3] = [2500.0, 5000.0, 6500.0];

/// A generated lightbox dataset.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SynthConfig,
    pub camera: SyntheticCamera,
    pub bank: LedBank,
    /// Gain from rendered radiance to raw units.
    pub gain: f64,
    pub led_images: Vec<RawImage>,
    pub illuminants: Vec<SampledIlluminant>,
    /// Charts that passed the clip filter and whose white point has a valid
    /// xy estimate, ordered by id.
    pub charts: Vec<ChartObservation>,
    pub discarded: Vec<Discard>,
    /// Split over every sampled id, discarded ones included.
    pub split: SplitSpec,
    pub calibration_two: CalibratedCstSet,
    pub calibration_three: CalibratedCstSet,
    /// Anchor charts rendered under blackbodies at [`ANCHOR_CCTS`].
    pub anchor_charts: Vec<ChartObservation>,
}

impl SyntheticDataset {
    pub fn subset(&self, ids: &[String]) -> Vec<ChartObservation> {
        select(&self.charts, ids)
    }

    pub fn train(&self) -> Vec<ChartObservation> {
        self.subset(&self.split.train)
    }

    pub fn val(&self) -> Vec<ChartObservation> {
        self.subset(&self.split.val)
    }

    pub fn test(&self) -> Vec<ChartObservation> {
        self.subset(&self.split.test)
    }

    pub fn chart(&self, id: &str) -> Option<&ChartObservation> {
        self.charts.iter().find(|c| c.illuminant_id == id)
    }

    /// Patch signals of an SPD rendered directly, in raw units above black.
    pub fn direct_render(&self, spd: &Spectrum) -> Result<[RawTriple; CHART_PATCHES]> {
        Ok(self.camera.render_chart(spd)?.map(|p| p.scaled(self.gain)))
    }
}

/// Charts whose id is in `ids`, in the order of `charts`.
pub fn select(charts: &[ChartObservation], ids: &[String]) -> Vec<ChartObservation> {
    let wanted: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    charts
        .iter()
        .filter(|c| wanted.contains(c.illuminant_id.as_str()))
        .cloned()
        .collect()
}

fn subtract_black(p: &[RawTriple; CHART_PATCHES], black: f64) -> [RawTriple; CHART_PATCHES] {
    p.map(|t| RawTriple::new(t.r - black, t.g - black, t.b - black))
}

/// Renders the LED bank, calibrates anchor CSTs from blackbody charts,
/// samples illuminants, synthesizes their captures and filters clipped
/// charts. Every chart's white point gets xy and CCT from the three-point
/// calibration.
pub fn synthesize_dataset(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    if cfg.window == 0 || cfg.window.is_multiple_of(2) || cfg.window > cfg.layout.patch {
        return Err(Error::Config(format!(
            "window {} must be odd and fit in a patch",
            cfg.window
        )));
    }
    if !(cfg.exposure > 0.0 && cfg.exposure <= 1.0) || !(0.0..0.5).contains(&cfg.clip_margin) {
        return Err(Error::Config(
            "exposure must be in (0, 1] and clip margin in [0, 0.5)".into(),
        ));
    }
    let camera = SyntheticCamera::shipped();
    let bank = LedBank::shipped();
    let range = cfg.white_level - cfg.black_level;

    let led_signals = bank
        .leds
        .iter()
        .map(|spd| camera.render_chart(spd))
        .collect::<Result<Vec<_>>>()?;
    let peak = led_signals
        .iter()
        .flat_map(|s| s[WHITE_PATCH_INDEX].to_array())
        .fold(0.0, f64::max);
    let gain = cfg.exposure * range / peak;
    let led_images: Vec<RawImage> = led_signals
        .iter()
        .map(|s| {
            cfg.layout
                .render(&s.map(|p| p.scaled(gain)), cfg.black_level, cfg.white_level)
        })
        .collect();

    // Anchor CSTs from blackbody charts, each exposed like the LED bank.
    let anchor_charts = ANCHOR_CCTS
        .iter()
        .map(|&k| {
            let signal = camera.render_chart(&planck_spd(k, camera.grid()))?;
            let peak = signal[WHITE_PATCH_INDEX].to_array().into_iter().fold(0.0, f64::max);
            let signal = signal.map(|p| p.scaled(cfg.exposure * range / peak));
            build_observation(&format!("planck_{k:.0}"), signal, WHITE_PATCH_INDEX, camera.gt_xyz)
        })
        .collect::<Result<Vec<_>>>()?;
    let anchors = anchor_charts
        .iter()
        .map(|c| oracle_fit(c, HeadKind::Linear, 3))
        .collect::<Result<Vec<_>>>()?;
    let calibration_two = CalibratedCstSet::two_point(anchors[0].clone(), anchors[2].clone())?;
    let calibration_three = CalibratedCstSet::three_point(anchors[0].clone(), anchors[1].clone(), anchors[2].clone())?;

    let illuminants: Vec<SampledIlluminant> = match &cfg.weights {
        Some(ws) => {
            if ws.is_empty() {
                return Err(Error::Config("explicit weight list is empty".into()));
            }
            ws.iter()
                .enumerate()
                .map(|(i, w)| {
                    if w.iter().any(|a| !(0.0..=1.0).contains(a)) {
                        return Err(Error::Config(format!("weights {i} outside [0, 1]")));
                    }
                    Ok(SampledIlluminant {
                        id: illuminant_id(i),
                        weights: *w,
                    })
                })
                .collect::<Result<_>>()?
        }
        None => sample_dirichlet_illuminants(&bank, cfg.illuminants, &cfg.concentration, cfg.seed)?
            .into_iter()
            .map(|(s, _)| s)
            .collect(),
    };

    let centers = cfg.layout.centers();
    let results = illuminants
        .par_iter()
        .map(|ill| -> Result<std::result::Result<ChartObservation, Discard>> {
            let capture = synthesize_capture(&led_images, &ill.weights)?;
            let patches = extract_patches(&capture.image, &centers, cfg.window)?;
            let discard = |reason: String, chart: Option<ChartObservation>| {
                Ok(Err(Discard {
                    illuminant_id: ill.id.clone(),
                    reason,
                    chart,
                }))
            };
            let obs = match build_observation(
                &ill.id,
                subtract_black(&patches, cfg.black_level),
                WHITE_PATCH_INDEX,
                camera.gt_xyz,
            ) {
                Ok(o) => o,
                Err(e) => return discard(e.to_string(), None),
            };
            if capture.clipped > 0 || !clip_filter(&patches, cfg.black_level, cfg.white_level, cfg.clip_margin) {
                return discard(format!("clipped ({} clamped pixel values)", capture.clipped), Some(obs));
            }
            // A white the calibration maps outside the xy gamut cannot be encoded.
            match white_raw_to_xy(&obs.white, &calibration_three) {
                Ok(white) => Ok(Ok(ChartObservation { white, ..obs })),
                Err(e) => discard(format!("white point: {e}"), Some(obs)),
            }
        })
        .zip(illuminants.par_iter())
        .map(|(r, ill)| r.map_err(|e| e.for_illuminant(&ill.id)))
        .collect::<Result<Vec<_>>>()?;

    let mut charts = Vec::new();
    let mut discarded = Vec::new();
    for r in results {
        match r {
            Ok(c) => charts.push(c),
            Err(d) => discarded.push(d),
        }
    }
    let ids: Vec<String> = illuminants.iter().map(|i| i.id.clone()).collect();
    let split = split_dataset(&ids, cfg.fractions, cfg.seed)?;

    Ok(SyntheticDataset {
        config: cfg.clone(),
        camera,
        bank,
        gain,
        led_images,
        illuminants,
        charts,
        discarded,
        split,
        calibration_two,
        calibration_three,
        anchor_charts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_simplex_and_limit() {
        let mut rng = stream(5, Stream::Dirichlet);
        let ws = dirichlet_weights(200, &[1.0 / 7.0; 7], &mut rng).unwrap();
        assert!(ws.iter().all(|w| (w.iter().sum::<f64>() - 1.0).abs() < 1e-12));
        let big = dirichlet_weights(20, &[1e6; 7], &mut rng).unwrap();
        assert!(big.iter().flatten().all(|a| (a - 1.0 / 7.0).abs() < 1e-2));
        let bank = LedBank::shipped();
        let a = sample_dirichlet_illuminants(&bank, 5, &[1.0 / 7.0; 7], 9).unwrap();
        let b = sample_dirichlet_illuminants(&bank, 5, &[1.0 / 7.0; 7], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_sizes() {
        let ids: Vec<String> = (0..400).map(illuminant_id).collect();
        let s = split_dataset(&ids, (0.5, 0.2, 0.3), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (200, 80, 120));
        s.validate().unwrap();
        assert_eq!(s, split_dataset(&ids, (0.5, 0.2, 0.3), 1).unwrap());
        let all = split_dataset(&ids, (1.0, 0.0, 0.0), 1).unwrap();
        assert_eq!(all.train.len(), 400);
        assert!(matches!(split_dataset(&[], (1.0, 0.0, 0.0), 1), Err(Error::Split(_))));
    }

    #[test]
    fn observation_white() {
        let mut p = [RawTriple::new(0.3, 0.3, 0.3); CHART_PATCHES];
        p[WHITE_PATCH_INDEX] = RawTriple::new(2.0, 1.0, 0.5);
        let obs = build_observation("a", p, WHITE_PATCH_INDEX, chart_gt_xyz()).unwrap();
        assert_eq!((obs.white.raw.a, obs.white.raw.b), (2.0, 0.5));
        p[WHITE_PATCH_INDEX] = RawTriple::new(1.0, 0.0, 1.0);
        assert!(matches!(
            build_observation("a", p, WHITE_PATCH_INDEX, chart_gt_xyz()),
            Err(Error::DegenerateWhite)
        ));
    }

    #[test]
    fn perturbation_angle() {
        let w = WhitePoint::from_raw(0.6, 0.8).unwrap();
        assert_eq!(perturb_white(&w, 0.0, 3).unwrap(), w);
        for seed in 0..20 {
            let p = perturb_white(&w, 3.0, seed).unwrap();
            assert!((white_angle(&w, &p).unwrap() - 3.0).abs() < 1e-6);
            assert_eq!(p, perturb_white(&w, 3.0, seed).unwrap());
        }
    }

    #[test]
    fn shipped_chart_table_matches_render() {
        let cam = SyntheticCamera::shipped();
        let xyz = cam.chart_xyz(&cam.d50).unwrap();
        for (a, b) in xyz.iter().zip(&cam.gt_xyz) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                assert!((x - y).abs() < 1e-6, "{a:?} vs {b:?}");
            }
        }
    }
}
