//! Point-adjusted evaluation: precision/recall/F1, AUROC, threshold search
//! and aggregation over series and repeats.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{write_file, Error, Result};

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Data(format!("{what}: {a} values against {b} labels")))
    }
}

/// Maximal runs of label 1 as `start..end` ranges.
pub fn segments(labels: &[u8]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l == 1, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..labels.len());
    }
    out
}

/// Flags every point of a labeled segment once any point in it is flagged.
pub fn point_adjust(flags: &[u8], labels: &[u8]) -> Result<Vec<u8>> {
    same_len(flags.len(), labels.len(), "point_adjust")?;
    let mut out = flags.to_vec();
    for seg in segments(labels) {
        if flags[seg.clone()].contains(&1) {
            out[seg].fill(1);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Prf {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 of binary flags. Zero denominators give 0.
pub fn prf(flags: &[u8], labels: &[u8]) -> Result<Prf> {
    same_len(flags.len(), labels.len(), "prf")?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&f, &l) in flags.iter().zip(labels) {
        match (f == 1, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Scores with every labeled point raised to its segment maximum. A
/// threshold flags such a point exactly when it flags some point of the
/// segment, which is what point adjustment does.
pub fn segment_max_scores(scores: &[f64], labels: &[u8]) -> Result<Vec<f64>> {
    same_len(scores.len(), labels.len(), "segment_max_scores")?;
    let mut out = scores.to_vec();
    for seg in segments(labels) {
        let m = scores[seg.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out[seg].fill(m);
    }
    Ok(out)
}

/// Rank-based AUROC; tied scores count one half. With `adjust`, flags at
/// each threshold are point-adjusted before counting.
pub fn auroc(scores: &[f64], labels: &[u8], adjust: bool) -> Result<f64> {
    same_len(scores.len(), labels.len(), "auroc")?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("auroc: NaN score".into()));
    }
    let pos = labels.iter().filter(|l| **l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes in the labels".into()));
    }
    let s = if adjust {
        segment_max_scores(scores, labels)?
    } else {
        scores.to_vec()
    };
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && s[idx[j + 1]] == s[idx[i]] {
            j += 1;
        }
        // Average 1-based rank of the tie group.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Number of steps in the threshold grid over `[0, max score]`.
pub const GRID_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub lambda: f64,
    pub prf: Prf,
}

/// Point-adjusted F1 at every `λ = i / 10000 · max(scores)`, `i = 0..=10000`;
/// returns the smallest `λ` reaching the best F1.
pub fn threshold_search(scores: &[f64], labels: &[u8]) -> Result<ThresholdChoice> {
    same_len(scores.len(), labels.len(), "threshold_search")?;
    if scores.is_empty() {
        return Err(Error::Data("threshold_search: no scores".into()));
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Data(
            "threshold_search: scores must be finite and non-negative".into(),
        ));
    }
    let max = scores.iter().copied().fold(0.0, f64::max);
    let mut negatives: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l != 1)
        .map(|(s, _)| *s)
        .collect();
    negatives.sort_by(f64::total_cmp);
    // (segment max, segment length), sorted by max, with suffix sums of length.
    let mut segs: Vec<(f64, usize)> = segments(labels)
        .into_iter()
        .map(|r| (scores[r.clone()].iter().copied().fold(0.0, f64::max), r.len()))
        .collect();
    segs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut suffix = vec![0usize; segs.len() + 1];
    for i in (0..segs.len()).rev() {
        suffix[i] = suffix[i + 1] + segs[i].1;
    }
    let positives = suffix[0];
    let eval = |lambda: f64| {
        let fp = negatives.len() - negatives.partition_point(|s| *s < lambda);
        let tp = suffix[segs.partition_point(|s| s.0 < lambda)];
        Prf::from_counts(tp, fp, positives - tp)
    };
    let mut best = ThresholdChoice {
        lambda: 0.0,
        prf: eval(0.0),
    };
    if max > 0.0 {
        for i in 1..=GRID_STEPS {
            let lambda = max * (i as f64 / GRID_STEPS as f64);
            let prf = eval(lambda);
            if prf.f1 > best.prf.f1 {
                best = ThresholdChoice { lambda, prf };
            }
        }
    }
    Ok(best)
}

/// Metrics of one (series, repeat) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub series: String,
    pub repeat: usize,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "AUROC")]
    pub auroc: f64,
    pub lambda: f64,
}

/// Grand means over all runs. `F1_star` is the harmonic mean of the averaged
/// precision and recall; `lambda` is the mean selected threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "F1_star")]
    pub f1_star: f64,
    #[serde(rename = "AUROC")]
    pub auroc: f64,
    pub lambda: f64,
    pub per_series: Vec<RunMetrics>,
}

/// Averages a complete `n_series × d_repeats` grid of runs.
pub fn aggregate(runs: &[RunMetrics], n_series: usize, d_repeats: usize) -> Result<MetricBundle> {
    if n_series == 0 || d_repeats == 0 {
        return Err(Error::Data("aggregate needs at least one series and one repeat".into()));
    }
    let series: BTreeSet<&str> = runs.iter().map(|r| r.series.as_str()).collect();
    let cells: BTreeSet<(&str, usize)> = runs.iter().map(|r| (r.series.as_str(), r.repeat)).collect();
    let complete = series.len() == n_series
        && cells.len() == runs.len()
        && runs.len() == n_series * d_repeats
        && runs.iter().all(|r| r.repeat < d_repeats);
    if !complete {
        return Err(Error::Data(format!(
            "expected {n_series} series x {d_repeats} repeats, got {} runs over {} series",
            runs.len(),
            series.len()
        )));
    }
    let mean = |f: fn(&RunMetrics) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let precision = mean(|r| r.precision);
    let recall = mean(|r| r.recall);
    Ok(MetricBundle {
        precision,
        recall,
        f1: mean(|r| r.f1),
        f1_star: harmonic(precision, recall),
        auroc: mean(|r| r.auroc),
        lambda: mean(|r| r.lambda),
        per_series: runs.to_vec(),
    })
}

/// Threshold search, adjusted metrics and AUROC for one scored series.
pub fn evaluate_run(
    series: &str,
    repeat: usize,
    scores: &[f64],
    labels: &[u8],
    adjust_auroc: bool,
) -> Result<RunMetrics> {
    let choice = threshold_search(scores, labels)?;
    Ok(RunMetrics {
        series: series.to_string(),
        repeat,
        precision: choice.prf.precision,
        recall: choice.prf.recall,
        f1: choice.prf.f1,
        auroc: auroc(scores, labels, adjust_auroc)?,
        lambda: choice.lambda,
    })
}

pub fn report_json(bundle: &MetricBundle) -> String {
    let mut s = serde_json::to_string_pretty(bundle).expect("metric bundle serializes");
    s.push('\n');
    s
}

pub fn write_report(bundle: &MetricBundle, path: &Path) -> Result<()> {
    write_file(path, &report_json(bundle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adjust_hand_example() {
        assert_eq!(
            point_adjust(&[0, 0, 1, 0, 0], &[0, 1, 1, 1, 0]).unwrap(),
            vec![0, 1, 1, 1, 0]
        );
        assert_eq!(point_adjust(&[0; 5], &[0, 1, 1, 1, 0]).unwrap(), vec![0; 5]);
        assert_eq!(point_adjust(&[1, 0, 1], &[0, 0, 0]).unwrap(), vec![1, 0, 1]);
        assert!(point_adjust(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn prf_hand_values() {
        let p = prf(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf(&[0, 0], &[1, 0]).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        // TP=2, FP=1, FN=1
        let p = prf(&[1, 1, 1, 0], &[1, 1, 0, 1]).unwrap();
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auroc_hand_values() {
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1], false).unwrap(), 0.75);
        assert_eq!(auroc(&[0.1, 0.2, 0.9, 0.8], &[0, 0, 1, 1], false).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[0, 1, 0, 1, 1, 0], false).unwrap(), 0.5);
        assert_eq!(auroc(&[0.3; 6], &[0, 1, 0, 1, 1, 0], true).unwrap(), 0.5);
        // Adjustment lifts the 0.35 point to its segment's 0.8.
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1], true).unwrap(), 1.0);
        assert!(matches!(
            auroc(&[0.1, 0.2], &[0, 0], true),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            auroc(&[0.1, 0.2], &[1, 1], false),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn search_on_binary_scores_is_perfect() {
        let labels = [0, 1, 1, 0, 0, 1, 0];
        let scores: Vec<f64> = labels.iter().map(|l| f64::from(*l)).collect();
        let best = threshold_search(&scores, &labels).unwrap();
        assert_eq!(best.prf.f1, 1.0);
        assert_eq!(best.lambda, 1e-4);
        assert!(threshold_search(&[], &[]).is_err());
        assert!(threshold_search(&[-1.0], &[0]).is_err());
    }

    #[test]
    fn search_on_all_zero_scores() {
        let best = threshold_search(&[0.0; 4], &[0, 1, 0, 0]).unwrap();
        assert_eq!(best.lambda, 0.0);
        assert!((best.prf.f1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn aggregate_hand_values() {
        let run = |series: &str, repeat, p: f64, r: f64| RunMetrics {
            series: series.into(),
            repeat,
            precision: p,
            recall: r,
            f1: harmonic(p, r),
            auroc: 0.9,
            lambda: 0.5,
        };
        let one = [run("a", 0, 0.6, 0.9)];
        let agg = aggregate(&one, 1, 1).unwrap();
        assert!((agg.f1_star - agg.f1).abs() < 1e-15);
        let two = [run("a", 0, 1.0, 0.5), run("a", 1, 0.5, 1.0)];
        let agg = aggregate(&two, 1, 2).unwrap();
        assert_eq!((agg.precision, agg.recall, agg.f1_star), (0.75, 0.75, 0.75));
        let same = [run("a", 0, 0.7, 0.8), run("b", 0, 0.7, 0.8)];
        let agg = aggregate(&same, 2, 1).unwrap();
        assert!((agg.f1 - same[0].f1).abs() < 1e-15 && (agg.f1_star - same[0].f1).abs() < 1e-15);
        assert!(aggregate(&two, 2, 1).is_err());
        assert!(aggregate(&two[..1], 1, 2).is_err());
        assert!(aggregate(&[run("a", 0, 1.0, 1.0), run("a", 0, 1.0, 1.0)], 1, 2).is_err());
    }

    #[test]
    fn report_uses_protocol_keys() {
        let bundle = aggregate(
            &[RunMetrics {
                series: "s".into(),
                repeat: 0,
                precision: 1.0,
                recall: 0.5,
                f1: 2.0 / 3.0,
                auroc: 0.8,
                lambda: 0.1,
            }],
            1,
            1,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&report_json(&bundle)).unwrap();
        for key in ["P", "R", "F1", "F1_star", "AUROC", "lambda", "per_series"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: MetricBundle = serde_json::from_value(v).unwrap();
        assert_eq!(back, bundle);
    }

    fn naive_adjust(flags: &[u8], labels: &[u8]) -> Vec<u8> {
        let mut out = flags.to_vec();
        let n = labels.len();
        let mut i = 0;
        while i < n {
            if labels[i] == 1 {
                let mut j = i;
                while j < n && labels[j] == 1 {
                    j += 1;
                }
                if (i..j).any(|k| flags[k] == 1) {
                    for o in &mut out[i..j] {
                        *o = 1;
                    }
                }
                i = j;
            } else {
                i += 1;
            }
        }
        out
    }

    /// Trapezoidal area under the ROC traced by thresholding at every
    /// distinct score, with point adjustment applied at each threshold.
    fn trapezoid_auroc(scores: &[f64], labels: &[u8], adjust: bool) -> f64 {
        let mut th: Vec<f64> = scores.to_vec();
        th.sort_by(f64::total_cmp);
        th.dedup();
        th.push(f64::INFINITY);
        let pos = labels.iter().filter(|l| **l == 1).count() as f64;
        let neg = labels.len() as f64 - pos;
        let mut pts: Vec<(f64, f64)> = th
            .iter()
            .map(|&t| {
                let flags: Vec<u8> = scores.iter().map(|s| u8::from(*s >= t)).collect();
                let flags = if adjust { naive_adjust(&flags, labels) } else { flags };
                let tp = flags.iter().zip(labels).filter(|(f, l)| **f == 1 && **l == 1).count() as f64;
                let fp = flags.iter().zip(labels).filter(|(f, l)| **f == 1 && **l == 0).count() as f64;
                (fp / neg, tp / pos)
            })
            .collect();
        pts.push((0.0, 0.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    fn brute_best_f1(scores: &[f64], labels: &[u8]) -> f64 {
        let mut d: Vec<f64> = scores.to_vec();
        d.sort_by(f64::total_cmp);
        d.dedup();
        let mut cands = vec![d[0] - 1.0, d[d.len() - 1] + 1.0];
        cands.extend(d.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        cands
            .iter()
            .map(|&t| {
                let flags: Vec<u8> = scores.iter().map(|s| u8::from(*s >= t)).collect();
                prf(&naive_adjust(&flags, labels), labels).unwrap().f1
            })
            .fold(0.0, f64::max)
    }

    fn labeled(n: usize) -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
        (prop::collection::vec(0u8..2, n), prop::collection::vec(0u32..500, n))
            .prop_map(|(l, s)| (l, s.into_iter().map(|k| f64::from(k) / 500.0).collect()))
    }

    proptest! {
        #[test]
        fn adjust_matches_naive((labels, scores) in labeled(40), lambda in 0.0f64..1.0) {
            let flags: Vec<u8> = scores.iter().map(|s| u8::from(*s >= lambda)).collect();
            let adj = point_adjust(&flags, &labels).unwrap();
            prop_assert_eq!(&adj, &naive_adjust(&flags, &labels));
            prop_assert_eq!(&point_adjust(&adj, &labels).unwrap(), &adj);
            let raw = prf(&flags, &labels).unwrap();
            let fixed = prf(&adj, &labels).unwrap();
            prop_assert!(fixed.f1 >= raw.f1);
            for (i, l) in labels.iter().enumerate() {
                if *l == 0 {
                    prop_assert_eq!(adj[i], flags[i]);
                }
            }
        }

        #[test]
        fn auroc_matches_trapezoid((labels, scores) in labeled(30), adjust in any::<bool>()) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let fast = auroc(&scores, &labels, adjust).unwrap();
            prop_assert!((fast - trapezoid_auroc(&scores, &labels, adjust)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&fast));
        }

        #[test]
        fn raw_auroc_ignores_monotone_transforms((labels, scores) in labeled(30)) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 0.5).collect();
            prop_assert_eq!(auroc(&scores, &labels, false).unwrap(), auroc(&warped, &labels, false).unwrap());
        }

        #[test]
        fn grid_search_matches_midpoint_brute_force((labels, scores) in labeled(50)) {
            prop_assume!(scores.iter().any(|s| *s > 0.0));
            let best = threshold_search(&scores, &labels).unwrap();
            prop_assert!((best.prf.f1 - brute_best_f1(&scores, &labels)).abs() < 1e-12);
            let flags: Vec<u8> = scores.iter().map(|s| u8::from(*s >= best.lambda)).collect();
            let check = prf(&point_adjust(&flags, &labels).unwrap(), &labels).unwrap();
            prop_assert!((check.f1 - best.prf.f1).abs() < 1e-12);
        }

        #[test]
        fn grid_search_dominates_every_grid_point(
            labels in prop::collection::vec(0u8..2, 1..40),
            seed in prop::collection::vec(0.0f64..5.0, 40),
            i in 0usize..=GRID_STEPS,
        ) {
            let scores = &seed[..labels.len()];
            let best = threshold_search(scores, &labels).unwrap();
            let max = scores.iter().copied().fold(0.0, f64::max);
            let lambda = max * (i as f64 / GRID_STEPS as f64);
            let flags: Vec<u8> = scores.iter().map(|s| u8::from(*s >= lambda)).collect();
            let f1 = prf(&point_adjust(&flags, &labels).unwrap(), &labels).unwrap().f1;
            prop_assert!(best.prf.f1 >= f1);
            prop_assert!(best.prf.f1 <= brute_best_f1(scores, &labels) + 1e-12);
            for v in [best.prf.precision, best.prf.recall, best.prf.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
