use chromacal::dataset::{synthesize_dataset, SynthConfig};
use chromacal::mlp::{train, EncodingKind, TrainConfig};

fn small_train_set() -> Vec<chromacal::color::ChartObservation> {
    let cfg = SynthConfig {
        illuminants: 60,
        ..SynthConfig::default()
    };
    synthesize_dataset(&cfg).unwrap().train()
}

#[test]
fn training_is_bitwise_reproducible() {
    let data = small_train_set();
    let cfg = TrainConfig {
        iterations: 1500,
        seed: 42,
        ..TrainConfig::default()
    };
    for kind in [EncodingKind::Xy2D, EncodingKind::Cct1D, EncodingKind::Raw2D] {
        let a = train(&data, &cfg, kind).unwrap();
        let b = train(&data, &cfg, kind).unwrap();
        assert_eq!(a.model.to_json(), b.model.to_json());
        assert_eq!(a.loss_curve, b.loss_curve);
    }
    let other = train(&data, &TrainConfig { seed: 43, ..cfg }, EncodingKind::Xy2D).unwrap();
    let base = train(&data, &cfg, EncodingKind::Xy2D).unwrap();
    assert_ne!(other.model.params(), base.model.params());
}

#[test]
fn noiseless_loss_trends_down() {
    let data = small_train_set();
    let cfg = TrainConfig {
        iterations: 8000,
        noise_sigma: 0.0,
        ..TrainConfig::default()
    };
    let out = train(&data, &cfg, EncodingKind::Xy2D).unwrap();
    let windows: Vec<f64> = out
        .loss_curve
        .chunks(1000)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    for pair in windows.windows(2) {
        assert!(pair[1] <= 1.05 * pair[0], "window means {windows:?}");
    }
    assert!(windows.last().unwrap() < &windows[0]);
}
