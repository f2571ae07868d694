use std::fmt::Write as _;

use super::normalize::DEFAULT_ALPHA;
use crate::error::{Error, Result};
use crate::kv;
use crate::model::{ModelHyper, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub history_len: usize,
    pub future_len: usize,
    pub latent_dim: usize,
    /// `None` picks `ceil(M / 2)` once the input dimension is known.
    pub hidden_dim: Option<usize>,
    pub mc_samples: usize,
    pub sigma2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epoch: usize,
    pub seed: u64,
    pub variant: Variant,
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            history_len: 10,
            future_len: 2,
            latent_dim: 8,
            hidden_dim: None,
            mc_samples: 10,
            sigma2: 1.0,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epoch: 40,
            seed: 0,
            variant: Variant::Sa,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.history_len == 0 || self.future_len == 0 {
            return fail("history_len and future_len must be at least 1");
        }
        if self.mc_samples == 0 || self.batch_size == 0 {
            return fail("mc_samples and batch_size must be at least 1");
        }
        if self.latent_dim == 0 || self.hidden_dim == Some(0) {
            return fail("latent_dim and hidden_dim must be at least 1");
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return fail("sigma2 must be a finite non-negative number");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail("learning_rate must be a finite non-negative number");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return fail("alpha must be positive");
        }
        Ok(())
    }

    pub fn hyper(&self, input_dim: usize) -> Result<ModelHyper> {
        let hyper = ModelHyper {
            input_dim,
            latent_dim: self.latent_dim,
            hidden_dim: self.hidden_dim.unwrap_or_else(|| ModelHyper::default_hidden(input_dim)),
            history_len: self.history_len,
            future_len: self.future_len,
            variant: self.variant,
            sigma2: self.sigma2,
        };
        hyper.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(hyper)
    }

    /// Parses `key = value` lines. Absent keys keep their defaults; unknown
    /// keys are rejected.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        for e in kv::parse(text, file)? {
            match e.key.as_str() {
                "history_len" => c.history_len = kv::value(&e, file)?,
                "future_len" => c.future_len = kv::value(&e, file)?,
                "latent_dim" => c.latent_dim = kv::value(&e, file)?,
                "hidden_dim" => {
                    c.hidden_dim = match e.value.as_str() {
                        "auto" => None,
                        _ => Some(kv::value(&e, file)?),
                    }
                }
                "mc_samples" => c.mc_samples = kv::value(&e, file)?,
                "sigma2" => c.sigma2 = kv::value(&e, file)?,
                "learning_rate" => c.learning_rate = kv::value(&e, file)?,
                "batch_size" => c.batch_size = kv::value(&e, file)?,
                "max_epoch" => c.max_epoch = kv::value(&e, file)?,
                "seed" => c.seed = kv::value(&e, file)?,
                "variant" => c.variant = kv::value(&e, file)?,
                "alpha" => c.alpha = kv::value(&e, file)?,
                other => return Err(Error::parse(file, e.line, format!("unknown key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let hidden = self.hidden_dim.map_or_else(|| "auto".to_string(), |h| h.to_string());
        let _ = writeln!(s, "history_len = {}", self.history_len);
        let _ = writeln!(s, "future_len = {}", self.future_len);
        let _ = writeln!(s, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(s, "hidden_dim = {hidden}");
        let _ = writeln!(s, "mc_samples = {}", self.mc_samples);
        let _ = writeln!(s, "sigma2 = {}", self.sigma2);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "max_epoch = {}", self.max_epoch);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "variant = {}", self.variant);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(TrainConfig::parse("", "c").unwrap(), TrainConfig::default());
    }

    #[test]
    fn text_round_trip() {
        let c = TrainConfig {
            hidden_dim: Some(6),
            sigma2: 0.25,
            variant: Variant::L,
            seed: 99,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::parse(&c.to_text(), "c").unwrap(), c);
        let d = TrainConfig::default();
        assert_eq!(TrainConfig::parse(&d.to_text(), "c").unwrap(), d);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        let err = TrainConfig::parse("latent_dim = 4\nepochs = 3\n", "cfg.txt").unwrap_err();
        assert_eq!(err.to_string(), "cfg.txt:2: unknown key \"epochs\"");
        assert!(TrainConfig::parse("variant = q", "c").is_err());
        assert!(matches!(
            TrainConfig::parse("mc_samples = 0", "c"),
            Err(Error::Config(_))
        ));
        assert!(TrainConfig::parse("batch_size = 0", "c").is_err());
        assert!(TrainConfig::parse("history_len = 0", "c").is_err());
        assert!(TrainConfig::parse("sigma2 = -1", "c").is_err());
    }

    #[test]
    fn hyper_resolves_auto_hidden() {
        let c = TrainConfig {
            latent_dim: 4,
            ..TrainConfig::default()
        };
        assert_eq!(c.hyper(8).unwrap().hidden_dim, 4);
        assert_eq!(c.hyper(7).unwrap().hidden_dim, 4);
        assert!(TrainConfig::default().hyper(8).is_err(), "latent_dim 8 needs M > 8");
    }
}
