//! End-to-end evaluation: train, score, search the threshold and aggregate
//! over series and repeats.

use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::data::{load_dataset, DatasetBundle, SeriesMatrix, TRAIN_FILE};
use crate::detect::{score_windows, NoiseMode, WindowScores};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate_run, MetricBundle, RunMetrics};
use crate::train::{apply_normalizer, fit_normalizer, make_window_pairs, train, TrainConfig};

/// Normalizes the train split with its own statistics and trains on every
/// stride-1 window pair.
pub fn train_bundle(train_split: &SeriesMatrix, config: &TrainConfig) -> Result<(Checkpoint, Vec<f64>)> {
    config.validate()?;
    let stats = fit_normalizer(train_split, config.alpha)?;
    let normalized = apply_normalizer(&stats, train_split)?;
    let pairs = make_window_pairs(&normalized, config.history_len, config.future_len, 1)?;
    let trained = train(&pairs, config)?;
    Ok((
        Checkpoint {
            model: trained.model,
            normalizer: Some(stats),
        },
        trained.loss_history,
    ))
}

/// Scores a raw test split, normalizing it with the checkpoint's statistics
/// when present.
pub fn score_series(ckpt: &Checkpoint, test: &SeriesMatrix, mode: NoiseMode) -> Result<WindowScores> {
    match &ckpt.normalizer {
        Some(stats) => score_windows(&ckpt.model, &apply_normalizer(stats, test)?, mode),
        None => score_windows(&ckpt.model, test, mode),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub repeats: usize,
    pub noise: NoiseMode,
    pub adjust_auroc: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            repeats: 1,
            noise: NoiseMode::Deterministic,
            adjust_auroc: true,
        }
    }
}

/// Seed used by repeat `j`.
pub fn repeat_seed(base: u64, repeat: usize) -> u64 {
    base.wrapping_add(repeat as u64)
}

/// One train/score/evaluate cycle on one series.
pub fn run_once(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    repeat: usize,
    options: &RunOptions,
) -> Result<RunMetrics> {
    let seed = repeat_seed(config.seed, repeat);
    let config = TrainConfig { seed, ..config.clone() };
    let (ckpt, _) = train_bundle(&bundle.train, &config)?;
    let scored = score_series(&ckpt, &bundle.test, options.noise.with_seed(seed))?;
    let labels = &bundle.test_labels()[scored.prefix..];
    evaluate_run(&bundle.name, repeat, &scored.scores, labels, options.adjust_auroc)
}

pub fn run(bundles: &[DatasetBundle], config: &TrainConfig, options: &RunOptions) -> Result<MetricBundle> {
    if bundles.is_empty() || options.repeats == 0 {
        return Err(Error::Config("run needs at least one series and one repeat".into()));
    }
    let mut runs = Vec::with_capacity(bundles.len() * options.repeats);
    for b in bundles {
        for j in 0..options.repeats {
            runs.push(run_once(b, config, j, options)?);
        }
    }
    aggregate(&runs, bundles.len(), options.repeats)
}

/// A directory holding `train.csv` is one series; otherwise every
/// subdirectory that holds one is loaded, in name order.
pub fn load_collection(dir: &Path) -> Result<Vec<DatasetBundle>> {
    if dir.join(TRAIN_FILE).is_file() {
        return Ok(vec![load_dataset(dir)?]);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subdirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.join(TRAIN_FILE).is_file() {
            subdirs.push(path);
        }
    }
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::Data(format!("{}: no {TRAIN_FILE} found", dir.display())));
    }
    subdirs.iter().map(|p| load_dataset(p)).collect()
}
