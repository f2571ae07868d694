use crate::data::SeriesMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 1e-4;

/// Per-dimension min/max of a training split plus the smoothing term `α`
/// that keeps constant dimensions from dividing by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub alpha: f64,
}

impl NormalizationStats {
    pub fn new(min: Vec<f64>, max: Vec<f64>, alpha: f64) -> Result<Self> {
        if min.is_empty() || min.len() != max.len() {
            return Err(Error::Data(format!(
                "normalizer has {} minima and {} maxima",
                min.len(),
                max.len()
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if min.iter().chain(&max).any(|v| !v.is_finite()) || min.iter().zip(&max).any(|(a, b)| a > b) {
            return Err(Error::Data("normalizer needs finite min <= max per dimension".into()));
        }
        Ok(Self { min, max, alpha })
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }
}

pub fn fit_normalizer(train: &SeriesMatrix, alpha: f64) -> Result<NormalizationStats> {
    if train.is_empty() {
        return Err(Error::Data("cannot fit a normalizer on an empty series".into()));
    }
    let m = train.dims();
    let mut min = vec![f64::INFINITY; m];
    let mut max = vec![f64::NEG_INFINITY; m];
    for t in 0..train.len() {
        for (d, &v) in train.row(t).iter().enumerate() {
            min[d] = min[d].min(v);
            max[d] = max[d].max(v);
        }
    }
    NormalizationStats::new(min, max, alpha)
}

/// `(x - min) / (max - min + α)` per dimension. Values outside the training
/// range are not clamped.
pub fn apply_normalizer(stats: &NormalizationStats, series: &SeriesMatrix) -> Result<SeriesMatrix> {
    if stats.dims() != series.dims() {
        return Err(Error::Data(format!(
            "normalizer fitted on {} dimensions, series has {}",
            stats.dims(),
            series.dims()
        )));
    }
    let m = series.dims();
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d = i % m;
            (v - stats.min[d]) / (stats.max[d] - stats.min[d] + stats.alpha)
        })
        .collect();
    series.map_values(values)
}
