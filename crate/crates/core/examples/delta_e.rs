//! CIEDE2000 between Lab pairs, and the exposure-anchored chart ΔE.

use chromacal::color::{apply_cst, chart_delta_e, delta_e_2000, Cst, LabTriple};
use chromacal::dataset::{synthesize_dataset, SynthConfig};

fn main() -> chromacal::Result<()> {
    let pairs = [
        ((50.0, 2.6772, -79.7751), (50.0, 0.0, -82.7485)),
        ((50.0, 2.5, 0.0), (73.0, 25.0, -18.0)),
        ((60.2574, -34.0099, 36.2677), (60.4626, -34.1751, 39.4387)),
    ];
    for ((l1, a1, b1), (l2, a2, b2)) in pairs {
        let d = delta_e_2000(LabTriple::new(l1, a1, b1), LabTriple::new(l2, a2, b2));
        println!("({l1}, {a1}, {b1}) vs ({l2}, {a2}, {b2}): {d:.4}");
    }

    let ds = synthesize_dataset(&SynthConfig {
        illuminants: 20,
        ..SynthConfig::default()
    })?;
    let chart = &ds.charts[0];
    let wb = chart.white_balanced()?;
    for (name, t) in [
        ("identity", Cst::identity()),
        ("three-anchor", ds.calibration_three.anchors()[1].cst.clone()),
    ] {
        let pred = wb.map(|p| apply_cst(p, &t));
        println!(
            "{}: chart ΔE2000 with {name} {:.3}",
            chart.illuminant_id,
            chart_delta_e(&pred, &chart.gt_xyz)?
        );
    }
    Ok(())
}
