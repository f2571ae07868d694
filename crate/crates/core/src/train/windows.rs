use crate::data::SeriesMatrix;
use crate::error::{Error, Result};

/// A history window `W^h_t` and the future window that follows it, as
/// row-major slices of the same series.
///
/// `anchor` is the 0-based index of the first future row, so the history
/// covers rows `anchor - ℓ_h .. anchor` and the future `anchor .. anchor + ℓ`.
/// Read as 1-based timestamps, the history ends at timestamp `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPair<'a> {
    pub anchor: usize,
    pub history: &'a [f64],
    pub future: &'a [f64],
}

pub fn pair_count(len: usize, history_len: usize, future_len: usize, stride: usize) -> usize {
    if stride == 0 || len < history_len + future_len {
        0
    } else {
        (len - future_len - history_len) / stride + 1
    }
}

/// Every pair with anchor `ℓ_h, ℓ_h + stride, …` up to `T - ℓ`.
pub fn make_window_pairs(
    series: &SeriesMatrix,
    history_len: usize,
    future_len: usize,
    stride: usize,
) -> Result<Vec<WindowPair<'_>>> {
    if history_len == 0 || future_len == 0 || stride == 0 {
        return Err(Error::Config("window lengths and stride must be at least 1".into()));
    }
    let t = series.len();
    if t < history_len + future_len {
        return Err(Error::Data(format!(
            "series of length {t} is shorter than one window pair ({history_len} + {future_len})"
        )));
    }
    Ok((history_len..=t - future_len)
        .step_by(stride)
        .map(|a| window_at(series, a, history_len, future_len))
        .collect())
}

pub(crate) fn window_at(series: &SeriesMatrix, anchor: usize, history_len: usize, future_len: usize) -> WindowPair<'_> {
    WindowPair {
        anchor,
        history: series.rows(anchor - history_len, anchor),
        future: series.rows(anchor, anchor + future_len),
    }
}
