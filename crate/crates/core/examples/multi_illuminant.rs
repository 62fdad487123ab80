//! Corrects a synthetic two-light scene: the left half of the image is lit by
//! one illuminant, the right by another, with a linear ramp in between.

use chromacal::color::{RawTriple, WhitePoint};
use chromacal::dataset::{synthesize_dataset, RawImage, SynthConfig};
use chromacal::pipeline::{correct_image_multi, correct_image_single, BlendStack, CstProvider};

fn mix(a: RawTriple, b: RawTriple, t: f64, offset: f64) -> RawTriple {
    RawTriple::new(
        t * a.r + (1.0 - t) * b.r + offset,
        t * a.g + (1.0 - t) * b.g + offset,
        t * a.b + (1.0 - t) * b.b + offset,
    )
}

fn main() -> chromacal::Result<()> {
    let ds = synthesize_dataset(&SynthConfig {
        illuminants: 40,
        ..SynthConfig::default()
    })?;
    let prov = CstProvider::Interpolated(ds.calibration_three.clone());
    let (warm, cool) = (&ds.charts[0], &ds.charts[1]);
    let (w, h) = (64, 8);

    let mut img = RawImage::filled(w, h, 0.0, ds.config.black_level, ds.config.white_level);
    let mut left = vec![0.0; w * h];
    let mut illum_map: Vec<WhitePoint> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let b = (1.0 - x as f64 / (w - 1) as f64).clamp(0.0, 1.0);
            left[y * w + x] = b;
            let patch = (x / 8 + 6 * (y / 4)) % 24;
            let p = mix(
                warm.patches_raw[patch],
                cool.patches_raw[patch],
                b,
                ds.config.black_level,
            );
            img.set_pixel(x, y, p);
            let mixed = mix(warm.white.raw_vector(), cool.white.raw_vector(), b, 0.0);
            illum_map.push(WhitePoint::from_response(mixed)?);
        }
    }
    let right = left.iter().map(|b| 1.0 - b).collect();
    let stack = BlendStack {
        illuminants: vec![warm.white, cool.white],
        maps: vec![left, right],
    };
    let blended = correct_image_multi(&img, &stack, &illum_map, &prov)?;
    let single = correct_image_single(&img, &warm.white, &prov)?;
    for x in [0, w / 2, w - 1] {
        println!(
            "x = {x:>2}: blended {:?}, warm-only {:?}",
            blended.pixel(x, 0).to_array().map(|v| (v * 1e3).round() / 1e3),
            single.pixel(x, 0).to_array().map(|v| (v * 1e3).round() / 1e3)
        );
    }
    Ok(())
}
