//! Robertson CCT of Planckian chromaticities and the iterative white-point
//! estimate on rendered camera whites. The estimate is referred to the
//! calibration anchors, so it tracks the source monotonically rather than
//! matching it.

use chromacal::cct::{cct_lookup, estimate_white_xy, mccamy_cct};
use chromacal::color::{Chromaticity2D, RawTriple, WHITE_PATCH_INDEX};
use chromacal::dataset::{planck_spd, render_xyz, synthesize_dataset, Spectrum, SynthConfig};

fn main() -> chromacal::Result<()> {
    let ds = synthesize_dataset(&SynthConfig {
        illuminants: 20,
        ..SynthConfig::default()
    })?;
    let cam = &ds.camera;
    let grid = cam.grid();
    let flat = Spectrum::constant(grid, 1.0);

    println!(
        "{:>8} {:>10} {:>10} {:>10} {:>6}",
        "source", "robertson", "mccamy", "anchor est", "iters"
    );
    for kelvin in [2500.0, 3200.0, 4000.0, 5000.0, 6500.0, 9000.0] {
        let spd = planck_spd(kelvin, grid);
        let xyz = render_xyz(&spd, &flat, &cam.cmf)?;
        let s = xyz.x + xyz.y + xyz.z;
        let xy = Chromaticity2D::xy(xyz.x / s, xyz.y / s)?;
        let white = cam.render_chart(&spd)?[WHITE_PATCH_INDEX];
        let est = estimate_white_xy(
            RawTriple::new(white.r / white.g, 1.0, white.b / white.g),
            &ds.calibration_three,
        )?;
        println!(
            "{kelvin:>8.0} {:>10.1} {:>10.1} {:>10.1} {:>6}",
            cct_lookup(xy).kelvin,
            mccamy_cct(xy),
            est.cct.kelvin,
            est.iterations
        );
    }
    Ok(())
}
