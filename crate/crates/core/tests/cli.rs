use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use chromacal::dataset::{files, load_charts, SynthConfig, LED_COUNT};
use chromacal::jobs::{cmd_synth, SynthJob, RESOLVED_CONFIG};

fn chromacal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chromacal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = chromacal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Mean of the `angular_mean` column of a per-illuminant report CSV.
fn csv_mean(path: &Path) -> f64 {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "angular_mean").unwrap();
    let vals: Vec<f64> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn full_command_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).display().to_string();
    ok(&["synth", "--out", &p("data"), "--illuminants", "80", "--seed", "5"]);

    let cfg = tmp.path().join("train.toml");
    std::fs::write(
        &cfg,
        format!("data = {:?}\niterations = 1500\nhidden = 16\n", p("data")),
    )
    .unwrap();
    ok(&["train", "--config", cfg.to_str().unwrap(), "--out", &p("model")]);
    assert_eq!(json(&tmp.path().join("model").join(RESOLVED_CONFIG))["hidden"], 16);
    ok(&[
        "lut",
        "--model",
        &p("model/model.json"),
        "--out",
        &p("lut"),
        "--grid-n",
        "12",
    ]);

    let evals: [(&str, &[&str]); 5] = [
        ("e_cst2", &["--provider", "cst2"]),
        ("e_nn", &["--provider", "nn", "--encoding", "cct1d"]),
        ("e_mlp", &["--provider", "mlp", "--artifact", "MODEL"]),
        ("e_lut", &["--provider", "lut", "--artifact", "LUT"]),
        ("e_oracle", &["--provider", "oracle"]),
    ];
    let (model, lut, data) = (p("model/model.json"), p("lut/lut.json"), p("data"));
    for (dir, extra) in evals {
        let mut args = vec!["eval", "--data", &data];
        let out = p(dir);
        args.extend(["--out", &out]);
        for a in extra {
            args.push(match *a {
                "MODEL" => &model,
                "LUT" => &lut,
                other => other,
            });
        }
        ok(&args);
    }
    let dirs = ["e_cst2", "e_nn", "e_mlp", "e_lut", "e_oracle"].map(p);
    let mut args = vec!["report", "--out"];
    let rep = p("report");
    args.push(&rep);
    args.extend(dirs.iter().map(String::as_str));
    let text = ok(&args);
    assert!(text.contains("Angular error"));

    for d in [
        "data", "model", "lut", "e_cst2", "e_nn", "e_mlp", "e_lut", "e_oracle", "report",
    ] {
        assert!(
            tmp.path().join(d).join(RESOLVED_CONFIG).is_file(),
            "{d} lacks the resolved config"
        );
    }

    // Ranks in the merged table agree with means recomputed from the
    // per-illuminant CSVs.
    let mut rdr = csv::Reader::from_path(tmp.path().join("report/table.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let means: Vec<f64> = dirs
        .iter()
        .map(|d| csv_mean(&Path::new(d).join("report.csv")))
        .collect();
    for (row, mean) in rows.iter().zip(&means) {
        let table_mean: f64 = row[1].parse().unwrap();
        assert!((table_mean - mean).abs() < 1e-9);
        let rank: usize = row[2].parse().unwrap();
        assert_eq!(rank, 1 + means.iter().filter(|m| *m < mean).count());
    }
    assert_eq!(&rows[4][0], "oracle");
    assert_eq!(&rows[4][2], "1");
}

#[test]
fn file_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    cmd_synth(&SynthJob {
        out: data.clone(),
        synth: SynthConfig {
            illuminants: 12,
            ..SynthConfig::default()
        },
    })
    .unwrap();

    let charts = json(&data.join(files::CHARTS));
    let c = &charts.as_array().unwrap()[0];
    for key in ["illuminant_id", "white", "patches_raw", "gt_xyz"] {
        assert!(c.get(key).is_some(), "chart lacks {key}");
    }
    assert_eq!(c["white"].as_array().unwrap().len(), 2);
    assert_eq!(c["patches_raw"].as_array().unwrap().len(), 24);

    let cal = json(&data.join(files::CALIBRATION_THREE));
    assert_eq!(cal["mode"], "three");
    let anchors = cal["anchors"].as_array().unwrap();
    assert_eq!(
        anchors.iter().map(|a| a["cct"].as_f64().unwrap()).collect::<Vec<_>>(),
        [2500.0, 5000.0, 6500.0]
    );
    assert_eq!(anchors[0]["m"].as_array().unwrap().len(), 3);

    let split = json(&data.join(files::SPLIT));
    let total: usize = ["train", "val", "test"]
        .iter()
        .map(|k| split[k].as_array().unwrap().len())
        .sum();
    assert_eq!(total, 12);

    let tensor = std::fs::read_dir(data.join(files::LED_IMAGES))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "tensor"))
        .unwrap();
    let bytes = std::fs::read(&tensor).unwrap();
    let ndims = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let dims: Vec<u64> = (0..ndims)
        .map(|i| u64::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().unwrap()))
        .collect();
    let count: u64 = dims.iter().product();
    assert_eq!(bytes.len() as u64, 16 + 8 * ndims as u64 + 4 * count);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).display().to_string();
    assert_eq!(chromacal(&["train", "--bogus"]).status.code(), Some(2));

    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"iteratons": 3}"#).unwrap();
    assert_eq!(
        chromacal(&["train", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let out = chromacal(&["eval", "--data", &p("missing"), "--out", &p("e")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chromacal synth"));

    ok(&["synth", "--out", &p("data"), "--illuminants", "20"]);
    assert_eq!(
        chromacal(&["eval", "--data", &p("data"), "--provider", "mlp"])
            .status
            .code(),
        Some(2)
    );
    let out = chromacal(&[
        "train",
        "--data",
        &p("data"),
        "--out",
        &p("m"),
        "--lr",
        "1e300",
        "--iterations",
        "300",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn delta_e_white_only_moves_delta_e() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).display().to_string();
    ok(&["synth", "--out", &p("data"), "--illuminants", "30"]);
    ok(&["eval", "--data", &p("data"), "--out", &p("d50")]);
    ok(&[
        "eval",
        "--data",
        &p("data"),
        "--out",
        &p("d65"),
        "--delta-e-white",
        "0.9505,1.0,1.089",
    ]);
    let (a, b) = (
        json(&tmp.path().join("d50/report.json")),
        json(&tmp.path().join("d65/report.json")),
    );
    assert_eq!(a["angular"], b["angular"]);
    assert_ne!(a["delta_e"], b["delta_e"]);
}

#[test]
fn one_hot_synthesis_matches_single_led_render() {
    let tmp = tempfile::tempdir().unwrap();
    let weights: Vec<[f64; LED_COUNT]> = (0..LED_COUNT)
        .map(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
        .collect();
    let ds = cmd_synth(&SynthJob {
        out: tmp.path().to_path_buf(),
        synth: SynthConfig {
            weights: Some(weights.clone()),
            ..SynthConfig::default()
        },
    })
    .unwrap();
    let mut written: BTreeMap<String, chromacal::color::ChartObservation> = BTreeMap::new();
    for file in [files::CHARTS, files::DISCARDED_CHARTS] {
        for c in load_charts(&tmp.path().join(file), None).unwrap() {
            written.insert(c.illuminant_id.clone(), c);
        }
    }
    let mut compared = 0;
    for (i, w) in weights.iter().enumerate() {
        let id = chromacal::dataset::illuminant_id(i);
        let Some(chart) = written.get(&id) else {
            // Without a defined white the chart cannot be recorded.
            assert!(ds.discarded.iter().any(|d| d.illuminant_id == id && d.chart.is_none()));
            continue;
        };
        let direct = ds.direct_render(&ds.bank.mix(w).unwrap()).unwrap();
        for (a, b) in chart.patches_raw.iter().zip(&direct) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                assert!((x - y).abs() <= 1e-6 * y.abs().max(1e-3), "{id}: {x} vs {y}");
            }
        }
        compared += 1;
    }
    assert!(compared >= LED_COUNT - 1, "only {compared} single-LED charts recorded");
}
