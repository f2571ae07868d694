//! Normalization, window pairing, the Monte-Carlo loss and the training loop.

mod config;
mod loss;
mod normalize;
mod windows;

pub use config::TrainConfig;
pub use loss::{draw_noise, loss_t, pair_loss, window_error};
pub use normalize::{apply_normalizer, fit_normalizer, NormalizationStats, DEFAULT_ALPHA};
pub(crate) use windows::window_at;
pub use windows::{make_window_pairs, pair_count, WindowPair};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{read_file, write_file, Error, Result};
use crate::model::ModelParams;
use crate::seed;
use crate::tensor::{Adam, AdamConfig, Tape, TensorError};

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelParams,
    /// Mean per-pair loss of each epoch, measured while training it.
    pub loss_history: Vec<f64>,
}

/// Loss and parameter gradients for one pair.
fn pair_step(
    model: &ModelParams,
    pair: &WindowPair<'_>,
    config: &TrainConfig,
    epoch: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(&[config.seed, epoch as u64, pair.anchor as u64]));
    let noise = draw_noise(model, config.mc_samples, &mut rng);
    let mut tape = Tape::new();
    let bound = tape.bind(&model.set);
    let loss = pair_loss(model, &mut tape, &bound, pair, &noise)?;
    let grads = tape.backward(loss)?;
    let per_param = model
        .set
        .ids()
        .map(|id| {
            grads
                .get(bound[id])
                .map_or_else(|| vec![0.0; model.set.get(id).len()], <[f64]>::to_vec)
        })
        .collect();
    Ok((tape.value(loss)[0], per_param))
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Tensor(TensorError::NonFinite(what)) => Error::Divergence {
            epoch,
            msg: format!("non-finite value in {what}"),
        },
        other => other,
    }
}

/// Trains a fresh model for `max_epoch` epochs.
///
/// Pairs are shuffled every epoch; each batch's per-pair gradients are
/// computed in parallel, summed in batch order and applied as one Adam step.
/// Noise for a pair is drawn from a generator keyed on (seed, epoch, anchor),
/// so results do not depend on thread scheduling.
pub fn train(pairs: &[WindowPair<'_>], config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let first = pairs
        .first()
        .ok_or_else(|| Error::Data("no window pairs to train on".into()))?;
    let dims = first.history.len() / config.history_len;
    if dims == 0
        || pairs
            .iter()
            .any(|p| p.history.len() != dims * config.history_len || p.future.len() != dims * config.future_len)
    {
        return Err(Error::Data(
            "window pairs do not match the configured window lengths".into(),
        ));
    }
    let mut model = ModelParams::init(config.hyper(dims)?, config.seed)?;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        &model.set,
    );
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(&[config.seed, 0x5348_5546]));
    let mut history = Vec::with_capacity(config.max_epoch);
    let mut losses = vec![0.0; pairs.len()];
    for epoch in 0..config.max_epoch {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<(f64, Vec<Vec<f64>>)>> = batch
                .par_iter()
                .map(|&i| pair_step(&model, &pairs[i], config, epoch))
                .collect();
            let mut sum: Option<Vec<Vec<f64>>> = None;
            for (&i, r) in batch.iter().zip(results) {
                let (loss, grads) = r.map_err(|e| diverged(epoch, e))?;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        msg: format!("loss {loss} at anchor {}", pairs[i].anchor),
                    });
                }
                losses[i] = loss;
                match &mut sum {
                    None => sum = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.iter_mut().zip(g) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            if let Some(g) = sum {
                model.set.accumulate_grads(&g)?;
                adam.step(&mut model.set).map_err(|e| diverged(epoch, e.into()))?;
            }
        }
        // Summed in pair order so the value does not depend on the shuffle.
        let mean = losses.iter().sum::<f64>() / pairs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence {
                epoch,
                msg: format!("mean loss {mean}"),
            });
        }
        history.push(mean);
    }
    Ok(Trained {
        model,
        loss_history: history,
    })
}

/// One `epoch,mean_loss` line per epoch, values in shortest round-trip form.
pub fn format_loss_history(history: &[f64]) -> String {
    let mut s = String::new();
    for (e, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{e},{l}");
    }
    s
}

pub fn parse_loss_history(text: &str, file: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::parse(file, i + 1, format!("expected epoch,loss, found {line:?}"));
        let (e, l) = line.split_once(',').ok_or_else(bad)?;
        let e: usize = e.trim().parse().map_err(|_| bad())?;
        let l: f64 = l.trim().parse().map_err(|_| bad())?;
        if e != out.len() {
            return Err(Error::parse(
                file,
                i + 1,
                format!("expected epoch {}, found {e}", out.len()),
            ));
        }
        out.push(l);
    }
    Ok(out)
}

pub fn write_loss_history(history: &[f64], path: &Path) -> Result<()> {
    write_file(path, &format_loss_history(history))
}

pub fn read_loss_history(path: &Path) -> Result<Vec<f64>> {
    parse_loss_history(&read_file(path)?, &path.display().to_string())
}
