//! Window scoring, thresholding and the score dump format.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::SeriesMatrix;
use crate::error::{read_file, write_file, Error, Result};
use crate::model::{ModelParams, Noise};
use crate::seed;
use crate::tensor::Tape;
use crate::train::window_at;

/// How the perturbation noise is chosen when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// One seeded draw per window.
    Sample { seed: u64 },
    /// `ε = 0`: decode the true future latents.
    Deterministic,
    /// Average the reconstruction over `k` seeded draws.
    MonteCarlo { k: usize, seed: u64 },
}

impl NoiseMode {
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            NoiseMode::Sample { .. } => NoiseMode::Sample { seed },
            NoiseMode::MonteCarlo { k, .. } => NoiseMode::MonteCarlo { k, seed },
            NoiseMode::Deterministic => NoiseMode::Deterministic,
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseMode::Sample { .. } => f.write_str("sample"),
            NoiseMode::Deterministic => f.write_str("deterministic"),
            NoiseMode::MonteCarlo { k, .. } => write!(f, "mc:{k}"),
        }
    }
}

/// Accepts `sample`, `deterministic` and `mc:<k>`; the seed defaults to 0.
impl FromStr for NoiseMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sample" => Ok(NoiseMode::Sample { seed: 0 }),
            "deterministic" => Ok(NoiseMode::Deterministic),
            _ => {
                let k = s
                    .strip_prefix("mc:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|k| *k > 0)
                    .ok_or_else(|| format!("unknown noise mode {s:?} (sample, deterministic, mc:<k>)"))?;
                Ok(NoiseMode::MonteCarlo { k, seed: 0 })
            }
        }
    }
}

/// Scores for timestamps `prefix .. prefix + scores.len()` (0-based rows)
/// and the reconstruction each score came from.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScores {
    pub prefix: usize,
    pub dims: usize,
    pub scores: Vec<f64>,
    /// Row-major, one row of `dims` per scored timestamp.
    pub reconstruction: Vec<f64>,
}

impl WindowScores {
    pub fn reconstruction_row(&self, i: usize) -> &[f64] {
        &self.reconstruction[i * self.dims..(i + 1) * self.dims]
    }
}

/// Anchors visited when scoring a series of length `len`: stride `ℓ` from
/// `ℓ_h`, plus one final window ending at the last row when the stride does
/// not land there.
pub fn scoring_anchors(len: usize, history_len: usize, future_len: usize) -> Vec<usize> {
    if len < history_len + future_len {
        return Vec::new();
    }
    let mut anchors: Vec<usize> = (history_len..=len - future_len).step_by(future_len).collect();
    let covered = anchors.last().map_or(history_len, |a| a + future_len);
    if covered < len {
        anchors.push(len - future_len);
    }
    anchors
}

fn window_reconstruction(
    model: &ModelParams,
    history: &[f64],
    future: &[f64],
    mode: NoiseMode,
    anchor: usize,
) -> Result<Vec<f64>> {
    let h = &model.hyper;
    let run = |eps: &Noise| -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = tape.bind(&model.set);
        let rows = model.reconstruct(&mut tape, &p, history, future, eps)?;
        Ok(rows.iter().flat_map(|v| tape.value(*v).to_vec()).collect())
    };
    let draw = |seed: u64, i: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(&[seed, anchor as u64, i]));
        Noise::sample(&mut rng, h.future_len, h.latent_dim, h.sigma2)
    };
    match mode {
        NoiseMode::Deterministic => run(&Noise::zeros(h.future_len, h.latent_dim)),
        NoiseMode::Sample { seed } => run(&draw(seed, 0)),
        NoiseMode::MonteCarlo { k, seed } => {
            let mut acc = vec![0.0; future.len()];
            for i in 0..k {
                for (a, r) in acc.iter_mut().zip(run(&draw(seed, i as u64))?) {
                    *a += r;
                }
            }
            Ok(acc.into_iter().map(|a| a / k as f64).collect())
        }
    }
}

/// Scores every timestamp after the first `ℓ_h` by the Euclidean distance
/// between the observation and its reconstruction. Windows are independent
/// and evaluated in parallel.
pub fn score_windows(model: &ModelParams, test: &SeriesMatrix, mode: NoiseMode) -> Result<WindowScores> {
    let h = &model.hyper;
    let (lh, lf, m) = (h.history_len, h.future_len, h.input_dim);
    if test.dims() != m {
        return Err(Error::Data(format!(
            "model expects {m} dimensions, series has {}",
            test.dims()
        )));
    }
    if test.len() < lh + lf {
        return Err(Error::Data(format!(
            "series of length {} is shorter than one window pair ({lh} + {lf})",
            test.len()
        )));
    }
    let anchors = scoring_anchors(test.len(), lh, lf);
    let recons: Vec<Result<Vec<f64>>> = anchors
        .par_iter()
        .map(|&a| {
            let pair = window_at(test, a, lh, lf);
            window_reconstruction(model, pair.history, pair.future, mode, a)
        })
        .collect();
    let scored = test.len() - lh;
    let mut scores = vec![f64::NAN; scored];
    let mut reconstruction = vec![0.0; scored * m];
    for (&a, r) in anchors.iter().zip(recons) {
        let r = r?;
        for i in 0..lf {
            let slot = a + i - lh;
            if !scores[slot].is_nan() {
                continue;
            }
            let rec = &r[i * m..(i + 1) * m];
            scores[slot] = rec
                .iter()
                .zip(test.row(a + i))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            reconstruction[slot * m..(slot + 1) * m].copy_from_slice(rec);
        }
    }
    Ok(WindowScores {
        prefix: lh,
        dims: m,
        scores,
        reconstruction,
    })
}

/// Scores and flags of one series. `prefix` leading timestamps are unscored.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub prefix: usize,
    pub lambda: f64,
    pub scores: Vec<f64>,
    pub flags: Vec<u8>,
}

impl DetectionReport {
    /// 0-based row of the `i`-th scored timestamp.
    pub fn row(&self, i: usize) -> usize {
        self.prefix + i
    }
}

pub fn flags_at(scores: &[f64], lambda: f64) -> Vec<u8> {
    scores.iter().map(|s| u8::from(*s >= lambda)).collect()
}

pub fn detect(scores: &WindowScores, lambda: f64) -> Result<DetectionReport> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Config(format!("threshold must be non-negative, got {lambda}")));
    }
    Ok(DetectionReport {
        prefix: scores.prefix,
        lambda,
        flags: flags_at(&scores.scores, lambda),
        scores: scores.scores.clone(),
    })
}

/// `# lambda <λ>` followed by `timestamp,score,flag` lines with 1-based
/// timestamps.
pub fn format_score_dump(report: &DetectionReport) -> String {
    let mut s = String::with_capacity(report.scores.len() * 32);
    let _ = writeln!(s, "# lambda {}", report.lambda);
    for (i, (sc, f)) in report.scores.iter().zip(&report.flags).enumerate() {
        let _ = writeln!(s, "{},{},{}", report.row(i) + 1, sc, f);
    }
    s
}

/// Score dump as read back from text.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDump {
    pub lambda: Option<f64>,
    /// 1-based, strictly increasing and contiguous.
    pub timestamps: Vec<usize>,
    pub scores: Vec<f64>,
    pub flags: Vec<u8>,
}

impl ScoreDump {
    /// Labels aligned with the dumped timestamps.
    pub fn align_labels(&self, labels: &[u8]) -> Result<Vec<u8>> {
        match self.timestamps.last() {
            Some(&last) if last > labels.len() => Err(Error::Data(format!(
                "score dump reaches timestamp {last} but only {} labels were given",
                labels.len()
            ))),
            _ => Ok(self.timestamps.iter().map(|t| labels[t - 1]).collect()),
        }
    }
}

pub fn parse_score_dump(text: &str, file: &str) -> Result<ScoreDump> {
    let mut dump = ScoreDump {
        lambda: None,
        timestamps: Vec::new(),
        scores: Vec::new(),
        flags: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: String| Error::parse(file, i + 1, msg);
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("lambda") {
                let v: f64 = v.trim().parse().map_err(|_| err(format!("bad lambda {v:?}")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(err(format!("lambda must be finite and non-negative, got {v}")));
                }
                dump.lambda = Some(v);
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let [t, s, f] = cells.as_slice() else {
            return Err(err(format!("expected timestamp,score,flag, found {line:?}")));
        };
        let t: usize = t.parse().map_err(|_| err(format!("bad timestamp {t:?}")))?;
        let s: f64 = s.parse().map_err(|_| err(format!("bad score {s:?}")))?;
        let f: u8 = match *f {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("flag must be 0 or 1, found {other:?}"))),
        };
        if !(s.is_finite() && s >= 0.0) {
            return Err(err(format!("score must be finite and non-negative, got {s}")));
        }
        match dump.timestamps.last() {
            None if t == 0 => return Err(err("timestamps start at 1".into())),
            Some(&prev) if t != prev + 1 => {
                return Err(err(format!("timestamp {t} does not follow {prev}")));
            }
            _ => {}
        }
        dump.timestamps.push(t);
        dump.scores.push(s);
        dump.flags.push(f);
    }
    if dump.timestamps.is_empty() {
        return Err(Error::parse(file, 0, "no scored timestamps"));
    }
    Ok(dump)
}

pub fn write_score_dump(report: &DetectionReport, path: &Path) -> Result<()> {
    write_file(path, &format_score_dump(report))
}

pub fn read_score_dump(path: &Path) -> Result<ScoreDump> {
    parse_score_dump(&read_file(path)?, &path.display().to_string())
}
