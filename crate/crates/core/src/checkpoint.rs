//! Plain-text model checkpoints.
//!
//! ```text
//! lpcad-checkpoint 1
//! input_dim 8
//! ...
//! norm.alpha 1.0000000000000000e-4
//! norm.min <M values>
//! norm.max <M values>
//! tensor enc.lstm.input.w_x 4 8
//! <values>
//! ```
//!
//! Every float is written with 17 significant digits, which reads back to
//! the identical `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{read_file, write_file, Error, Result};
use crate::model::{ModelHyper, ModelParams, Variant};
use crate::tensor::{ParamSet, Tensor};
use crate::train::NormalizationStats;

const MAGIC: &str = "lpcad-checkpoint 1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub normalizer: Option<NormalizationStats>,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn nums(vs: &[f64]) -> String {
    vs.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
}

pub fn format_checkpoint(ckpt: &Checkpoint) -> String {
    let h = &ckpt.model.hyper;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "input_dim {}", h.input_dim);
    let _ = writeln!(s, "latent_dim {}", h.latent_dim);
    let _ = writeln!(s, "hidden_dim {}", h.hidden_dim);
    let _ = writeln!(s, "history_len {}", h.history_len);
    let _ = writeln!(s, "future_len {}", h.future_len);
    let _ = writeln!(s, "variant {}", h.variant);
    let _ = writeln!(s, "sigma2 {}", num(h.sigma2));
    match &ckpt.normalizer {
        Some(n) => {
            let _ = writeln!(s, "norm.alpha {}", num(n.alpha));
            let _ = writeln!(s, "norm.min {}", nums(&n.min));
            let _ = writeln!(s, "norm.max {}", nums(&n.max));
        }
        None => {
            let _ = writeln!(s, "norm none");
        }
    }
    for (name, t) in ckpt.model.set.iter() {
        let dims: Vec<String> = t.shape().iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "tensor {name} {}", dims.join(" "));
        let _ = writeln!(s, "{}", nums(t.data()));
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    file: &'a str,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(Error::parse(self.file, self.last + 1, "unexpected end of checkpoint")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.file, self.last, msg)
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(format!("expected {key:?}, found {line:?}"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad value {v:?} for {key}")))
    }

    fn floats(&self, text: &str) -> Result<Vec<f64>> {
        text.split_ascii_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(format!("bad number {t:?}")))
            })
            .collect()
    }
}

pub fn parse_checkpoint(text: &str, file: &str) -> Result<Checkpoint> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        file,
        last: 0,
    };
    if lines.next()? != MAGIC {
        return Err(lines.err("not a checkpoint file"));
    }
    let hyper = ModelHyper {
        input_dim: lines.parsed("input_dim")?,
        latent_dim: lines.parsed("latent_dim")?,
        hidden_dim: lines.parsed("hidden_dim")?,
        history_len: lines.parsed("history_len")?,
        future_len: lines.parsed("future_len")?,
        variant: lines.parsed::<Variant>("variant")?,
        sigma2: lines.parsed("sigma2")?,
    };
    hyper.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let normalizer = {
        let line = lines.next()?;
        if line == "norm none" {
            None
        } else {
            let alpha = match line.split_once(' ') {
                Some(("norm.alpha", v)) => v.parse().map_err(|_| lines.err(format!("bad alpha {v:?}")))?,
                _ => return Err(lines.err(format!("expected normalizer, found {line:?}"))),
            };
            let min = lines.field("norm.min")?;
            let min = lines.floats(min)?;
            let max = lines.field("norm.max")?;
            let max = lines.floats(max)?;
            let stats = NormalizationStats::new(min, max, alpha).map_err(|e| Error::Checkpoint(e.to_string()))?;
            if stats.dims() != hyper.input_dim {
                return Err(Error::Checkpoint(format!(
                    "normalizer has {} dimensions, model expects {}",
                    stats.dims(),
                    hyper.input_dim
                )));
            }
            Some(stats)
        }
    };
    let mut set = ParamSet::new();
    while let Some((i, header)) = lines.inner.next() {
        lines.last = i + 1;
        if header.is_empty() {
            continue;
        }
        let mut parts = header.split_ascii_whitespace();
        if parts.next() != Some("tensor") {
            return Err(lines.err(format!("expected tensor header, found {header:?}")));
        }
        let name = parts.next().ok_or_else(|| lines.err("tensor without a name"))?;
        let shape: Vec<usize> = parts
            .map(|d| d.parse().map_err(|_| lines.err(format!("bad dimension {d:?}"))))
            .collect::<Result<_>>()?;
        let body = lines.next()?;
        let data = lines.floats(body)?;
        let tensor = Tensor::new(shape, data).map_err(|e| lines.err(e.to_string()))?;
        set.insert(name, tensor).map_err(|e| lines.err(e.to_string()))?;
    }
    let model = ModelParams::from_set(hyper, set).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(Checkpoint { model, normalizer })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_file(path, &format_checkpoint(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&read_file(path)?, &path.display().to_string())
}
