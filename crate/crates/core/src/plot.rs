//! Per-timestamp plot data and a small static SVG rendering.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::SeriesMatrix;
use crate::detect::{DetectionReport, WindowScores};
use crate::error::{write_file, Error, Result};

/// CSV with a header and one record per scored timestamp:
/// `timestamp, x_1..x_M, r_1..r_M, score, flag, label`.
pub fn plot_records(
    series: &SeriesMatrix,
    scores: &WindowScores,
    report: &DetectionReport,
    labels: &[u8],
) -> Result<String> {
    check(series, scores, report, labels)?;
    let m = series.dims();
    let mut s = String::from("timestamp");
    for d in 1..=m {
        let _ = write!(s, ",x{d}");
    }
    for d in 1..=m {
        let _ = write!(s, ",r{d}");
    }
    s.push_str(",score,flag,label\n");
    for i in 0..report.scores.len() {
        let row = report.row(i);
        let _ = write!(s, "{}", row + 1);
        for v in series.row(row).iter().chain(scores.reconstruction_row(i)) {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{},{},{}", report.scores[i], report.flags[i], labels[row]);
    }
    Ok(s)
}

fn check(series: &SeriesMatrix, scores: &WindowScores, report: &DetectionReport, labels: &[u8]) -> Result<()> {
    let n = report.scores.len();
    let ok = labels.len() == series.len()
        && report.prefix + n == series.len()
        && report.flags.len() == n
        && scores.scores.len() == n
        && scores.dims == series.dims();
    if ok {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "plot inputs disagree: {} rows, {} labels, {} scores after a prefix of {}",
            series.len(),
            labels.len(),
            n,
            report.prefix
        )))
    }
}

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 300.0;

/// Truth and reconstruction of dimension `dim` over the scored range, with
/// labeled segments shaded red and flagged points marked blue underneath.
pub fn plot_svg(
    series: &SeriesMatrix,
    scores: &WindowScores,
    report: &DetectionReport,
    labels: &[u8],
    dim: usize,
) -> Result<String> {
    check(series, scores, report, labels)?;
    if dim >= series.dims() {
        return Err(Error::Data(format!(
            "no dimension {dim} in a {}-dimensional series",
            series.dims()
        )));
    }
    let n = report.scores.len();
    let truth: Vec<f64> = (0..n).map(|i| series.row(report.row(i))[dim]).collect();
    let recon: Vec<f64> = (0..n).map(|i| scores.reconstruction_row(i)[dim]).collect();
    let lo = truth.iter().chain(&recon).copied().fold(f64::INFINITY, f64::min);
    let hi = truth.iter().chain(&recon).copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |i: usize| i as f64 * WIDTH / n.max(2).saturating_sub(1) as f64;
    let y = |v: f64| 10.0 + (hi - v) / span * (HEIGHT - 30.0);
    let bar = WIDTH / n as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..n {
        if labels[report.row(i)] == 1 {
            let _ = writeln!(
                s,
                r#"<rect class="label" x="{:.2}" y="0" width="{bar:.2}" height="{HEIGHT}" fill="red" fill-opacity="0.15"/>"#,
                x(i)
            );
        }
        if report.flags[i] == 1 {
            let _ = writeln!(
                s,
                r#"<rect class="flag" x="{:.2}" y="{}" width="{bar:.2}" height="10" fill="blue"/>"#,
                x(i),
                HEIGHT - 12.0
            );
        }
    }
    for (class, vals, color) in [("truth", &truth, "black"), ("reconstruction", &recon, "orange")] {
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot_data(
    series: &SeriesMatrix,
    scores: &WindowScores,
    report: &DetectionReport,
    labels: &[u8],
    csv_path: &Path,
    svg_path: Option<&Path>,
) -> Result<()> {
    write_file(csv_path, &plot_records(series, scores, report, labels)?)?;
    if let Some(p) = svg_path {
        write_file(p, &plot_svg(series, scores, report, labels, 0)?)?;
    }
    Ok(())
}
