use lpcad::checkpoint::{format_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint};
use lpcad::data::{synth_generate, SynthSpec};
use lpcad::detect::NoiseMode;
use lpcad::model::Variant;
use lpcad::protocol::{score_series, train_bundle};
use lpcad::train::TrainConfig;

fn setup() -> (lpcad::data::DatasetBundle, TrainConfig) {
    let spec = SynthSpec {
        train_len: 200,
        test_len: 120,
        dims: 5,
        spikes: 1,
        level_shifts: 1,
        correlation_breaks: 1,
        ..SynthSpec::default()
    };
    let config = TrainConfig {
        history_len: 6,
        future_len: 2,
        latent_dim: 3,
        mc_samples: 3,
        max_epoch: 3,
        batch_size: 32,
        learning_rate: 0.01,
        variant: Variant::Sa,
        seed: 5,
        ..TrainConfig::default()
    };
    (synth_generate(&spec).unwrap().bundle, config)
}

#[test]
fn checkpoint_reload_scores_bit_exactly() {
    let (bundle, config) = setup();
    let (ckpt, history) = train_bundle(&bundle.train, &config).unwrap();
    assert_eq!(history.len(), 3);
    let before = score_series(&ckpt, &bundle.test, NoiseMode::Deterministic).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/model.ckpt");
    save_checkpoint(&ckpt, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let after = score_series(&loaded, &bundle.test, NoiseMode::Deterministic).unwrap();
    assert_eq!(before, after);

    let resaved = dir.path().join("again.ckpt");
    save_checkpoint(&loaded, &resaved).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&resaved).unwrap());
}

#[test]
fn training_makes_progress_on_synthetic_data() {
    let (bundle, config) = setup();
    for variant in Variant::ALL {
        let config = TrainConfig {
            variant,
            ..config.clone()
        };
        let (_, history) = train_bundle(&bundle.train, &config).unwrap();
        assert!(history[0] > history[history.len() - 1], "{variant}: {history:?}");
    }
}

#[test]
fn identical_seeds_give_identical_artifacts() {
    let (bundle, config) = setup();
    let (a, ha) = train_bundle(&bundle.train, &config).unwrap();
    let (b, hb) = train_bundle(&bundle.train, &config).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(format_checkpoint(&a), format_checkpoint(&b));
    let mode = NoiseMode::Sample { seed: 1 };
    assert_eq!(
        score_series(&a, &bundle.test, mode).unwrap(),
        score_series(&b, &bundle.test, mode).unwrap()
    );
    let other = TrainConfig { seed: 6, ..config };
    let (c, _) = train_bundle(&bundle.train, &other).unwrap();
    assert_ne!(format_checkpoint(&a), format_checkpoint(&c));
}

#[test]
fn checkpoint_with_wrong_hyperparameters_is_refused() {
    let (bundle, config) = setup();
    let (ckpt, _) = train_bundle(&bundle.train, &config).unwrap();
    let text = format_checkpoint(&ckpt);
    let swapped = text.replacen("variant sa", "variant s", 1);
    assert!(parse_checkpoint(&swapped, "x").is_err());
    let resized = text.replacen("hidden_dim 3", "hidden_dim 4", 1);
    assert!(parse_checkpoint(&resized, "x").is_err());
}
