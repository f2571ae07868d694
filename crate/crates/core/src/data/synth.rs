//! Synthetic multivariate series with labeled anomaly segments.
//!
//! The clean signal is a mixture of a few latent sinusoids observed through
//! `M` channels, so channels are redundant the way real monitoring metrics
//! are. Anomalies are injected into the test split only.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DatasetBundle, SeriesMatrix};
use crate::error::{Error, Result};
use crate::kv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    /// Additive bump on half of the channels.
    Spike,
    /// Constant offset on half of the channels.
    LevelShift,
    /// Half of the channels are mirrored around their mean, breaking the
    /// cross-channel mixing while staying within range.
    CorrelationBreak,
    /// Every channel replays the clean signal from `magnitude` steps later,
    /// so each point is plausible but the continuation is not.
    TimeShift,
}

impl AnomalyKind {
    const ALL: [AnomalyKind; 4] = [
        AnomalyKind::Spike,
        AnomalyKind::LevelShift,
        AnomalyKind::CorrelationBreak,
        AnomalyKind::TimeShift,
    ];

    fn tag(self) -> &'static str {
        match self {
            AnomalyKind::Spike => "spike",
            AnomalyKind::LevelShift => "level_shift",
            AnomalyKind::CorrelationBreak => "correlation_break",
            AnomalyKind::TimeShift => "time_shift",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AnomalyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| format!("unknown anomaly kind {s:?}"))
    }
}

/// One labeled segment, positioned by 0-based test-split row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalySegment {
    pub kind: AnomalyKind,
    pub start: usize,
    pub len: usize,
    pub magnitude: f64,
}

impl AnomalySegment {
    fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub train_len: usize,
    pub test_len: usize,
    pub dims: usize,
    pub seed: u64,
    pub noise_std: f64,
    /// Number of latent sinusoids; defaults to `ceil(dims / 2)`.
    pub sources: Option<usize>,
    /// Cycles per step, one per source. Drawn from the seed when absent.
    pub frequencies: Option<Vec<f64>>,
    pub phases: Option<Vec<f64>>,
    /// `dims × sources`, row-major.
    pub mixing: Option<Vec<f64>>,
    /// Coupled phase oscillators observed through `tanh` instead of a plain
    /// linear mixture; the next window then depends nonlinearly on the last.
    pub nonlinear: bool,
    pub spikes: usize,
    pub level_shifts: usize,
    pub correlation_breaks: usize,
    pub time_shifts: usize,
    pub spike_magnitude: f64,
    pub shift_magnitude: f64,
    pub time_shift_steps: usize,
    pub segment_min: usize,
    pub segment_max: usize,
    /// No segment starts before this test row (keeps the unscored prefix clean).
    pub warmup: usize,
    /// Fixed segments, placed before the randomly positioned ones.
    pub segments: Vec<AnomalySegment>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            train_len: 2000,
            test_len: 1000,
            dims: 8,
            seed: 0,
            noise_std: 0.05,
            sources: None,
            frequencies: None,
            phases: None,
            mixing: None,
            nonlinear: false,
            spikes: 2,
            level_shifts: 2,
            correlation_breaks: 2,
            time_shifts: 0,
            spike_magnitude: 1.0,
            shift_magnitude: 0.8,
            time_shift_steps: 37,
            segment_min: 5,
            segment_max: 20,
            warmup: 10,
            segments: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn source_count(&self) -> usize {
        self.sources.unwrap_or(self.dims.div_ceil(2)).max(1)
    }

    /// Total labeled timestamps the generator will produce.
    pub fn anomalous_timestamps(&self) -> Option<usize> {
        if self.spikes + self.level_shifts + self.correlation_breaks + self.time_shifts > 0 {
            None
        } else {
            Some(self.segments.iter().map(|s| s.len).sum())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.dims == 0 || self.train_len == 0 || self.test_len == 0 {
            return bad("lengths and dimension count must be positive".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        if self.segment_min == 0 || self.segment_min > self.segment_max {
            return bad(format!(
                "segment length range {}..={} is empty",
                self.segment_min, self.segment_max
            ));
        }
        let s = self.source_count();
        let check_len = |name: &str, v: &Option<Vec<f64>>, n: usize| match v {
            Some(v) if v.len() != n => Err(Error::Spec(format!("{name} needs {n} entries, got {}", v.len()))),
            Some(v) if v.iter().any(|x| !x.is_finite()) => Err(Error::Spec(format!("{name} must be finite"))),
            _ => Ok(()),
        };
        check_len("frequencies", &self.frequencies, s)?;
        check_len("phases", &self.phases, s)?;
        check_len("mixing", &self.mixing, self.dims * s)?;
        let total = self.train_len + self.test_len;
        let shift_ok = |s: f64| (1.0..=total as f64).contains(&s.round());
        if self.time_shift_steps == 0 || !shift_ok(self.time_shift_steps as f64) {
            return bad(format!("time_shift_steps must be in 1..={total}"));
        }
        if self
            .segments
            .iter()
            .any(|s| s.kind == AnomalyKind::TimeShift && !shift_ok(s.magnitude))
        {
            return bad(format!("time shift magnitudes must round into 1..={total}"));
        }
        let mut sorted = self.segments.clone();
        sorted.sort_by_key(|a| a.start);
        for seg in &sorted {
            if seg.len == 0 || seg.start < self.warmup || seg.end() > self.test_len {
                return bad(format!(
                    "segment at {} of length {} is outside [{}, {})",
                    seg.start, seg.len, self.warmup, self.test_len
                ));
            }
            if !seg.magnitude.is_finite() {
                return bad("segment magnitude must be finite".into());
            }
        }
        for w in sorted.windows(2) {
            if w[1].start < w[0].end() {
                return bad(format!("segments at {} and {} overlap", w[0].start, w[1].start));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        for e in kv::parse(text, file)? {
            match e.key.as_str() {
                "train_len" => spec.train_len = kv::value(&e, file)?,
                "test_len" => spec.test_len = kv::value(&e, file)?,
                "dims" => spec.dims = kv::value(&e, file)?,
                "seed" => spec.seed = kv::value(&e, file)?,
                "noise_std" => spec.noise_std = kv::value(&e, file)?,
                "sources" => spec.sources = Some(kv::value(&e, file)?),
                "frequencies" => spec.frequencies = Some(kv::list(&e, file)?),
                "phases" => spec.phases = Some(kv::list(&e, file)?),
                "mixing" => spec.mixing = Some(kv::list(&e, file)?),
                "nonlinear" => spec.nonlinear = kv::value(&e, file)?,
                "spikes" => spec.spikes = kv::value(&e, file)?,
                "level_shifts" => spec.level_shifts = kv::value(&e, file)?,
                "correlation_breaks" => spec.correlation_breaks = kv::value(&e, file)?,
                "time_shifts" => spec.time_shifts = kv::value(&e, file)?,
                "spike_magnitude" => spec.spike_magnitude = kv::value(&e, file)?,
                "shift_magnitude" => spec.shift_magnitude = kv::value(&e, file)?,
                "time_shift_steps" => spec.time_shift_steps = kv::value(&e, file)?,
                "segment_min" => spec.segment_min = kv::value(&e, file)?,
                "segment_max" => spec.segment_max = kv::value(&e, file)?,
                "warmup" => spec.warmup = kv::value(&e, file)?,
                "segments" => spec.segments = parse_segments(&e, file)?,
                other => return Err(Error::parse(file, e.line, format!("unknown key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `kind:start:len:magnitude` items separated by `;`.
fn parse_segments(e: &kv::Entry, file: &str) -> Result<Vec<AnomalySegment>> {
    e.value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let err = || Error::parse(file, e.line, format!("bad segment {item:?}"));
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let [kind, start, len, mag] = parts.as_slice() else {
                return Err(err());
            };
            Ok(AnomalySegment {
                kind: kind.parse().map_err(|_| err())?,
                start: start.parse().map_err(|_| err())?,
                len: len.parse().map_err(|_| err())?,
                magnitude: mag.parse().map_err(|_| err())?,
            })
        })
        .collect()
}

/// The generated data plus the segments that were injected.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub bundle: DatasetBundle,
    pub segments: Vec<AnomalySegment>,
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Synthesized> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.source_count();
    let m = spec.dims;
    let freqs = spec
        .frequencies
        .clone()
        .unwrap_or_else(|| (0..s).map(|_| rng.random_range(0.01..0.05)).collect());
    let phases = spec
        .phases
        .clone()
        .unwrap_or_else(|| (0..s).map(|_| rng.random_range(0.0..TAU)).collect());
    let mixing = spec
        .mixing
        .clone()
        .unwrap_or_else(|| (0..m * s).map(|_| rng.random_range(-1.0..1.0)).collect());

    let total = spec.train_len + spec.test_len;
    // Time-shifted segments read the clean signal ahead of the test split.
    let max_shift = spec
        .segments
        .iter()
        .filter(|s| s.kind == AnomalyKind::TimeShift)
        .map(|s| s.magnitude.round() as usize)
        .fold(spec.time_shift_steps, usize::max);
    let horizon = total + max_shift;
    let clean = clean_signal(spec, &freqs, &phases, &mixing, horizon);
    let mut values: Vec<f64> = clean[..total * m].to_vec();
    for v in values.iter_mut() {
        *v += spec.noise_std * rng.sample::<f64, _>(StandardNormal);
    }

    let segments = place_segments(spec, &mut rng)?;
    let means: Vec<f64> = (0..m)
        .map(|d| (0..total).map(|t| clean[t * m + d]).sum::<f64>() / total as f64)
        .collect();
    let half = m.div_ceil(2);
    let mut labels = vec![0u8; spec.test_len];
    for seg in &segments {
        let channels = sample(&mut rng, m, half).into_vec();
        let signs: Vec<f64> = channels
            .iter()
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        labels[seg.start..seg.end()].fill(1);
        for r in seg.start..seg.end() {
            let t = spec.train_len + r;
            let row = &mut values[t * m..(t + 1) * m];
            match seg.kind {
                AnomalyKind::Spike | AnomalyKind::LevelShift => {
                    for (&d, sign) in channels.iter().zip(&signs) {
                        row[d] += sign * seg.magnitude;
                    }
                }
                AnomalyKind::CorrelationBreak => {
                    for &d in &channels {
                        row[d] = 2.0 * means[d] - row[d];
                    }
                }
                AnomalyKind::TimeShift => {
                    let src = t + seg.magnitude.round() as usize;
                    for (d, v) in row.iter_mut().enumerate() {
                        *v += clean[src * m + d] - clean[t * m + d];
                    }
                }
            }
        }
    }

    let (train, test) = values.split_at(spec.train_len * m);
    let train = SeriesMatrix::new("train", m, train.to_vec())?;
    let test = SeriesMatrix::new("test", m, test.to_vec())?.with_labels(labels)?;
    Ok(Synthesized {
        bundle: DatasetBundle::new(format!("synth-{}", spec.seed), train, test)?,
        segments,
    })
}

fn clean_signal(spec: &SynthSpec, freqs: &[f64], phases: &[f64], mixing: &[f64], len: usize) -> Vec<f64> {
    let s = freqs.len();
    let m = spec.dims;
    let mut out = Vec::with_capacity(len * m);
    let mut theta = phases.to_vec();
    let mut src = vec![0.0; s];
    for t in 0..len {
        if spec.nonlinear {
            for (v, th) in src.iter_mut().zip(&theta) {
                *v = th.sin();
            }
            let next: Vec<f64> = (0..s)
                .map(|j| theta[j] + TAU * freqs[j] * (1.0 + 0.5 * theta[(j + 1) % s].sin()))
                .collect();
            theta = next;
        } else {
            for j in 0..s {
                src[j] = (TAU * freqs[j] * t as f64 + phases[j]).sin();
            }
        }
        for d in 0..m {
            let mix: f64 = (0..s).map(|j| mixing[d * s + j] * src[j]).sum();
            out.push(if spec.nonlinear { mix.tanh() } else { mix });
        }
    }
    out
}

fn place_segments(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<AnomalySegment>> {
    let mut placed = spec.segments.clone();
    let wanted = [
        (AnomalyKind::Spike, spec.spikes, spec.spike_magnitude),
        (AnomalyKind::LevelShift, spec.level_shifts, spec.shift_magnitude),
        (AnomalyKind::CorrelationBreak, spec.correlation_breaks, 0.0),
        (AnomalyKind::TimeShift, spec.time_shifts, spec.time_shift_steps as f64),
    ];
    // Random segments keep a clean gap from everything else.
    let gap = spec.segment_max;
    for (kind, count, magnitude) in wanted {
        for _ in 0..count {
            let mut attempts = 0;
            loop {
                attempts += 1;
                if attempts > 10_000 {
                    return Err(Error::Spec(format!(
                        "cannot fit another {kind} segment into {} test rows",
                        spec.test_len
                    )));
                }
                let len = rng.random_range(spec.segment_min..=spec.segment_max);
                if spec.warmup + len > spec.test_len {
                    continue;
                }
                let start = rng.random_range(spec.warmup..=spec.test_len - len);
                let clash = placed
                    .iter()
                    .any(|p| start < p.end() + gap && p.start < start + len + gap);
                if !clash {
                    placed.push(AnomalySegment {
                        kind,
                        start,
                        len,
                        magnitude,
                    });
                    break;
                }
            }
        }
    }
    placed.sort_by_key(|p| p.start);
    Ok(placed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SynthSpec {
        SynthSpec {
            train_len: 300,
            test_len: 200,
            dims: 4,
            spikes: 0,
            level_shifts: 0,
            correlation_breaks: 0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn no_anomalies_means_no_labels() {
        let out = synth_generate(&quiet()).unwrap();
        assert!(out.bundle.test_labels().iter().all(|l| *l == 0));
        assert_eq!(out.bundle.train.len(), 300);
        assert_eq!(out.bundle.test.len(), 200);
    }

    #[test]
    fn spikes_are_labeled_exactly_where_injected() {
        let base = quiet();
        let mut spiked = base.clone();
        spiked.segments = vec![
            AnomalySegment {
                kind: AnomalyKind::Spike,
                start: 50,
                len: 6,
                magnitude: 10.0 * base.noise_std,
            },
            AnomalySegment {
                kind: AnomalyKind::Spike,
                start: 120,
                len: 3,
                magnitude: 10.0 * base.noise_std,
            },
        ];
        let clean = synth_generate(&base).unwrap().bundle;
        let out = synth_generate(&spiked).unwrap().bundle;
        let labels = out.test_labels();
        for (r, l) in labels.iter().enumerate() {
            let inside = (50..56).contains(&r) || (120..123).contains(&r);
            assert_eq!(*l == 1, inside, "row {r}");
            let moved = out.test.row(r) != clean.test.row(r);
            assert_eq!(moved, inside, "row {r}");
        }
        assert_eq!(labels.iter().map(|l| *l as usize).sum::<usize>(), 9);
        assert_eq!(spiked.anomalous_timestamps(), Some(9));
    }

    #[test]
    fn same_seed_same_bundle() {
        let spec = SynthSpec::default();
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let other = SynthSpec {
            seed: 1,
            ..spec.clone()
        };
        assert_ne!(
            synth_generate(&spec).unwrap().bundle,
            synth_generate(&other).unwrap().bundle
        );
    }

    #[test]
    fn label_mass_matches_segment_lengths() {
        for seed in 0..5 {
            let spec = SynthSpec {
                seed,
                time_shifts: 1,
                nonlinear: seed % 2 == 0,
                ..SynthSpec::default()
            };
            let out = synth_generate(&spec).unwrap();
            assert_eq!(out.segments.len(), 7);
            let mass: usize = out.segments.iter().map(|s| s.len).sum();
            let labeled = out.bundle.test_labels().iter().filter(|l| **l == 1).count();
            assert_eq!(mass, labeled);
            assert!(out
                .segments
                .iter()
                .all(|s| s.start >= spec.warmup && s.end() <= spec.test_len));
            assert!(out.segments.iter().all(|s| (5..=20).contains(&s.len)));
        }
    }

    #[test]
    fn overlapping_segments_are_rejected() {
        let mut spec = quiet();
        spec.segments = vec![
            AnomalySegment {
                kind: AnomalyKind::Spike,
                start: 40,
                len: 10,
                magnitude: 1.0,
            },
            AnomalySegment {
                kind: AnomalyKind::LevelShift,
                start: 45,
                len: 10,
                magnitude: 1.0,
            },
        ];
        assert!(matches!(synth_generate(&spec), Err(Error::Spec(_))));
        spec.segments.truncate(1);
        spec.segments[0].start = 5;
        assert!(synth_generate(&spec).is_err(), "inside warmup");
    }

    #[test]
    fn too_many_segments_is_a_spec_error() {
        let spec = SynthSpec {
            test_len: 60,
            spikes: 10,
            ..quiet()
        };
        assert!(matches!(synth_generate(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn parses_spec_text() {
        let text = "seed = 4\ndims=3\nsources=2\nfrequencies=0.02,0.03\nsegments = spike:20:5:1.5; level_shift:40:5:0.5\nspikes=0\nlevel_shifts=0\ncorrelation_breaks=0\ntest_len=100\n";
        let spec = SynthSpec::parse(text, "s").unwrap();
        assert_eq!(spec.seed, 4);
        assert_eq!(spec.segments.len(), 2);
        assert_eq!(spec.segments[1].kind, AnomalyKind::LevelShift);
        assert_eq!(spec.anomalous_timestamps(), Some(10));
        assert!(SynthSpec::parse("bogus=1", "s").is_err());
        assert!(SynthSpec::parse("frequencies=0.1", "s").is_err());
        assert!(SynthSpec::parse("segments=spike:1", "s").is_err());
    }
}
