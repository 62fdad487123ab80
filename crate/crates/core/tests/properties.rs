use proptest::prelude::*;

use chromacal::cct::{cct_lookup, interpolate_cst, mired_weight, CalibratedCstSet, OFF_LOCUS_DISTANCE};
use chromacal::color::{
    angular_error, chart_delta_e, expand_features, white_balance, Chromaticity2D, Cst, HeadKind, RawTriple, WhitePoint,
    XyzTriple, CHART_PATCHES,
};
use chromacal::dataset::{
    build_observation, extract_patches, perturb_white, planck_spd, render_patch, render_xyz, split_dataset,
    white_angle, RawImage, Spectrum, SyntheticCamera,
};
use chromacal::fitting::oracle_fit;
use chromacal::mlp::{assemble_cst, cosine_loss, extract_free};
use chromacal::pipeline::{evaluate, percentile, CstProvider};

fn positive() -> impl Strategy<Value = f64> {
    0.01f64..10.0
}

fn triple() -> impl Strategy<Value = [f64; 3]> {
    [positive(), positive(), positive()]
}

fn xyz(v: [f64; 3]) -> XyzTriple {
    XyzTriple::new(v[0], v[1], v[2])
}

fn matrix() -> impl Strategy<Value = Cst> {
    prop::array::uniform9(-0.3f64..0.3).prop_map(|e| {
        Cst::linear([
            [1.0 + e[0], e[1], e[2]],
            [e[3], 1.0 + e[4], e[5]],
            [e[6], e[7], 1.0 + e[8]],
        ])
    })
}

fn chart_of(m: &Cst, white: (f64, f64), seed: u64) -> chromacal::color::ChartObservation {
    let mut rng = chromacal::rng::stream(seed, chromacal::rng::Stream::TestFixtures);
    use rand::Rng;
    let mut patches = [RawTriple::new(0.0, 0.0, 0.0); CHART_PATCHES];
    for p in patches.iter_mut() {
        *p = RawTriple::new(
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
        );
    }
    patches[18] = RawTriple::new(white.0 * 0.8, 0.8, white.1 * 0.8);
    let w = WhitePoint::from_raw(white.0, white.1).unwrap();
    let gt = patches.map(|p| chromacal::color::apply_cst(white_balance(p, &w).unwrap(), m));
    build_observation(&format!("c{seed}"), patches, 18, gt).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn angular_error_is_scale_invariant(a in triple(), b in triple(), k in positive(), m in positive()) {
        let base = angular_error(xyz(a), xyz(b)).unwrap();
        let scaled = angular_error(xyz(a).scaled(k), xyz(b).scaled(m)).unwrap();
        prop_assert!((base - scaled).abs() < 1e-9);
    }

    #[test]
    fn angular_error_is_symmetric(a in triple(), b in triple(), k in positive()) {
        let ab = angular_error(xyz(a), xyz(b)).unwrap();
        let ba = angular_error(xyz(b), xyz(a)).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(angular_error(xyz(a), xyz(a).scaled(k)).unwrap() < 1e-9);
    }

    #[test]
    fn white_balance_neutralizes_multiples(r in 0.2f64..5.0, b in 0.2f64..5.0, k in positive()) {
        let w = WhitePoint::from_raw(r, b).unwrap();
        let out = white_balance(RawTriple::new(k * r, k, k * b), &w).unwrap().to_array();
        let max = out.iter().cloned().fold(0.0, f64::max);
        for c in out {
            prop_assert!((c - k).abs() / max < 1e-12);
        }
    }

    #[test]
    fn delta_e_ignores_prediction_scale(seed in 0u64..1000, k in 0.1f64..10.0) {
        let m = Cst::linear([[0.6, 0.3, 0.1], [0.25, 0.7, 0.05], [0.02, 0.1, 0.9]]);
        let obs = chart_of(&m, (0.6, 0.5), seed);
        let wb = obs.white_balanced().unwrap();
        let pred = wb.map(|p| chromacal::color::apply_cst(p, &Cst::identity()));
        let a = chart_delta_e(&pred, &obs.gt_xyz).unwrap();
        let b = chart_delta_e(&pred.map(|p| p.scaled(k)), &obs.gt_xyz).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn feature_homogeneity(p in triple(), k in 0.1f64..5.0) {
        let rp = RawTriple::new(p[0], p[1], p[2]);
        for size in [6, 13] {
            let f = expand_features(rp, HeadKind::Rootpoly, size).unwrap();
            let g = expand_features(rp.scaled(k), HeadKind::Rootpoly, size).unwrap();
            for (a, b) in f.iter().zip(&g) {
                prop_assert!((k * a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
        let f = expand_features(rp, HeadKind::Poly, 9).unwrap();
        let g = expand_features(rp.scaled(k), HeadKind::Poly, 9).unwrap();
        for i in 0..9 {
            let power = if i < 3 { k } else { k * k };
            prop_assert!((power * f[i] - g[i]).abs() <= 1e-12 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn mired_weight_decreases(a in 2500f64..6500.0, b in 2500f64..6500.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(mired_weight(lo, 2500.0, 6500.0) >= mired_weight(hi, 2500.0, 6500.0));
    }

    #[test]
    fn interpolation_is_affine_in_weight(a in matrix(), b in matrix(), cct in 2500f64..6500.0) {
        let set = CalibratedCstSet::two_point(a.clone(), b.clone()).unwrap();
        let g = mired_weight(cct, 2500.0, 6500.0);
        let got = interpolate_cst(cct, &set);
        for i in 0..9 {
            let want = g * a.entries()[i] + (1.0 - g) * b.entries()[i];
            prop_assert!((got.entries()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn three_point_is_continuous(a in matrix(), b in matrix(), c in matrix()) {
        let set = CalibratedCstSet::three_point(a, b.clone(), c).unwrap();
        let below = interpolate_cst(5000.0 - 1e-9, &set);
        prop_assert!(interpolate_cst(5000.0, &set).max_abs_diff(&b) < 1e-12);
        prop_assert!(below.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn cct_lookup_never_fails((x, y) in (0.01f64..0.8).prop_flat_map(|x| (Just(x), 0.01f64..(0.99 - x)))) {
        let c = Chromaticity2D::xy(x, y).unwrap();
        let est = cct_lookup(c);
        prop_assert!(est.kelvin.is_finite());
        prop_assert!(est.off_locus || est.distance <= OFF_LOCUS_DISTANCE);
    }

    #[test]
    fn cosine_loss_ignores_patch_scale(scales in prop::collection::vec(0.1f64..10.0, CHART_PATCHES), seed in 0u64..100) {
        let m = Cst::linear([[0.6, 0.3, 0.1], [0.25, 0.7, 0.05], [0.02, 0.1, 0.9]]);
        let obs = chart_of(&m, (0.7, 0.4), seed);
        let pred = obs.white_balanced().unwrap().map(|p| chromacal::color::apply_cst(p, &Cst::identity()));
        let mut scaled = pred;
        for (p, k) in scaled.iter_mut().zip(&scales) {
            *p = p.scaled(*k);
        }
        let a = cosine_loss(&pred, &obs.gt_xyz).unwrap();
        let b = cosine_loss(&scaled, &obs.gt_xyz).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn assembly_inverts_extraction(m in matrix()) {
        let n = m.center_normalized().unwrap();
        let back = assemble_cst(&extract_free(&n).unwrap());
        prop_assert_eq!(back, n);
    }

    #[test]
    fn oracle_ignores_gt_scale(m in matrix(), k in 0.1f64..10.0, seed in 0u64..50) {
        let mut obs = chart_of(&m, (0.55, 0.65), seed);
        for (i, g) in obs.gt_xyz.iter_mut().enumerate() {
            *g = XyzTriple::new(g.x * (1.0 + 0.03 * (i % 5) as f64), g.y, g.z * (1.0 - 0.02 * (i % 3) as f64));
        }
        let mut scaled = obs.clone();
        scaled.gt_xyz = obs.gt_xyz.map(|p| p.scaled(k));
        let a = oracle_fit(&obs, HeadKind::Linear, 3).unwrap();
        let b = oracle_fit(&scaled, HeadKind::Linear, 3).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-6);
        let err = |t: &Cst, o: &chromacal::color::ChartObservation| {
            let wb = o.white_balanced().unwrap();
            wb.iter().zip(&o.gt_xyz).map(|(p, g)| angular_error(chromacal::color::apply_cst(*p, t), *g).unwrap()).sum::<f64>()
        };
        let (ea, eb) = (err(&a, &obs), err(&b, &scaled));
        prop_assert!((ea - eb).abs() / (CHART_PATCHES as f64) < 1e-9, "mean residuals {ea} vs {eb}");
    }

    #[test]
    fn split_is_a_partition(n in 1usize..200, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i:03}")).collect();
        let s = split_dataset(&ids, (0.5, 0.2, 0.3), seed).unwrap();
        let mut all: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        all.sort();
        prop_assert_eq!(all, ids);
    }

    #[test]
    fn perturbation_hits_requested_angle(r in 0.3f64..3.0, b in 0.3f64..3.0, deg in 0.0f64..3.0, seed in any::<u64>()) {
        let w = WhitePoint::from_raw(r, b).unwrap();
        let p = perturb_white(&w, deg, seed).unwrap();
        prop_assert!((white_angle(&w, &p).unwrap() - deg).abs() < 1e-6);
        prop_assert_eq!(perturb_white(&w, 0.0, seed).unwrap(), w);
    }

    #[test]
    fn extraction_is_translation_consistent(dx in 0usize..20, dy in 0usize..20, seed in 0u64..100) {
        use rand::Rng;
        let mut rng = chromacal::rng::stream(seed, chromacal::rng::Stream::TestFixtures);
        let (w, h) = (60, 50);
        let mut img = RawImage::filled(w, h, 0.0, 0.0, 1.0);
        for v in img.data.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let mut shifted = RawImage::filled(w + dx, h + dy, 0.0, 0.0, 1.0);
        for y in 0..h {
            for x in 0..w {
                shifted.set_pixel(x + dx, y + dy, img.pixel(x, y));
            }
        }
        let centers: [(usize, usize); CHART_PATCHES] = std::array::from_fn(|i| (5 + 8 * (i % 6), 5 + 10 * (i / 6)));
        let moved = centers.map(|(x, y)| (x + dx, y + dy));
        prop_assert_eq!(extract_patches(&img, &centers, 5).unwrap(), extract_patches(&shifted, &moved, 5).unwrap());
    }

    #[test]
    fn percentiles_are_ordered(values in prop::collection::vec(0.0f64..100.0, 1..60)) {
        let qs = [0.25, 0.5, 0.75, 0.9];
        let p: Vec<f64> = qs.iter().map(|q| percentile(&values, *q)).collect();
        prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn render_is_bilinear_and_additive() {
    let cam = SyntheticCamera::shipped();
    let grid = cam.grid();
    let s1 = planck_spd(3000.0, grid);
    let s2 = planck_spd(6500.0, grid);
    let (r1, r2) = (&cam.reflectances[3].1, &cam.reflectances[11].1);
    let mix_s = Spectrum::weighted_sum(&[s1.clone(), s2.clone()], &[0.3, 1.7]).unwrap();
    let mix_r = Spectrum::weighted_sum(&[r1.clone(), r2.clone()], &[0.6, 0.4]).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    let a = render_patch(&mix_s, r1, &cam.sensitivities).unwrap().to_array();
    let b1 = render_patch(&s1, r1, &cam.sensitivities).unwrap().to_array();
    let b2 = render_patch(&s2, r1, &cam.sensitivities).unwrap().to_array();
    for c in 0..3 {
        assert!(rel(a[c], 0.3 * b1[c] + 1.7 * b2[c]) < 1e-12);
    }
    let a = render_patch(&s1, &mix_r, &cam.sensitivities).unwrap().to_array();
    let c2 = render_patch(&s1, r2, &cam.sensitivities).unwrap().to_array();
    for c in 0..3 {
        assert!(rel(a[c], 0.6 * b1[c] + 0.4 * c2[c]) < 1e-12);
    }
    let summed = Spectrum::weighted_sum(
        &[cam.sensitivities[0].clone(), cam.sensitivities[1].clone()],
        &[1.0, 1.0],
    )
    .unwrap();
    let sens = [summed, cam.sensitivities[1].clone(), cam.sensitivities[2].clone()];
    let a = render_patch(&s1, r1, &sens).unwrap().to_array();
    assert!(rel(a[0], b1[0] + b1[1]) < 1e-12);
}

#[test]
fn planckian_cct_round_trip() {
    let cam = SyntheticCamera::shipped();
    let grid = cam.grid();
    let flat = Spectrum::constant(grid, 1.0);
    let mut t = 2000.0;
    while t <= 10000.0 {
        let p = render_xyz(&planck_spd(t, grid), &flat, &cam.cmf).unwrap();
        let s = p.x + p.y + p.z;
        let est = cct_lookup(Chromaticity2D::xy(p.x / s, p.y / s).unwrap());
        assert!((est.kelvin - t).abs() / t < 0.01, "{t} K read back as {}", est.kelvin);
        assert!(!est.off_locus);
        t += 250.0;
    }
}

#[test]
fn nearest_neighbor_matches_exhaustive_scan() {
    use chromacal::fitting::nn_build;
    use chromacal::mlp::{EncodingKind, InputEncoding};
    use rand::Rng;
    let mut rng = chromacal::rng::stream(3, chromacal::rng::Stream::TestFixtures);
    let m = Cst::identity();
    let charts: Vec<_> = (0..150)
        .map(|i| chart_of(&m, (rng.random_range(0.3..2.0), rng.random_range(0.3..2.0)), i))
        .collect();
    let enc = InputEncoding::fit(EncodingKind::Raw2D, charts.iter().map(|c| &c.white)).unwrap();
    let idx = nn_build(&charts, &enc).unwrap();
    for _ in 0..10_000 {
        let z: Vec<f64> = (0..enc.dim()).map(|_| rng.random_range(-0.2..1.2)).collect();
        let d = |k: &Vec<f64>| k.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut best = 0;
        for (i, k) in idx.keys.iter().enumerate() {
            if d(k) < d(&idx.keys[best]) {
                best = i;
            }
        }
        assert_eq!(idx.nearest(&z), best);
    }
}

#[test]
fn evaluation_is_order_invariant() {
    let m = Cst::linear([[0.6, 0.3, 0.1], [0.25, 0.7, 0.05], [0.02, 0.1, 0.9]]);
    let mut charts: Vec<_> = (0..20).map(|i| chart_of(&m, (0.5 + 0.05 * i as f64, 0.8), i)).collect();
    let prov = CstProvider::Fixed(Cst::identity());
    let a = evaluate(&charts, &prov).unwrap();
    charts.reverse();
    charts.swap(3, 11);
    assert_eq!(a, evaluate(&charts, &prov).unwrap());
}
