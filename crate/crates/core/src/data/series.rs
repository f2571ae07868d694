use std::fmt::Write as _;
use std::path::Path;

use crate::error::{read_file, write_file, Error, Result};

/// `T` timestamps by `M` dimensions, row-major, with optional 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    id: String,
    dims: usize,
    values: Vec<f64>,
    labels: Option<Vec<u8>>,
}

impl SeriesMatrix {
    pub fn new(id: impl Into<String>, dims: usize, values: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Data("series needs at least one dimension".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(dims) {
            return Err(Error::Data(format!(
                "{} values do not form rows of {dims}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at row {}", i / dims)));
        }
        Ok(Self {
            id: id.into(),
            dims,
            values,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Data(format!(
                "{} labels for {} timestamps",
                labels.len(),
                self.len()
            )));
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of timestamps `T`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of dimensions `M`.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    /// Rows `start..end` as one contiguous row-major slice.
    pub fn rows(&self, start: usize, end: usize) -> &[f64] {
        &self.values[start * self.dims..end * self.dims]
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn column(&self, m: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(m).step_by(self.dims).copied()
    }

    /// Same labels and id, new values of identical shape.
    pub(crate) fn map_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.id.clone(), self.dims, values)?;
        out.labels = self.labels.clone();
        Ok(out)
    }
}

/// A train split (unlabeled) and a labeled test split of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub train: SeriesMatrix,
    pub test: SeriesMatrix,
}

impl DatasetBundle {
    pub fn new(name: impl Into<String>, train: SeriesMatrix, test: SeriesMatrix) -> Result<Self> {
        if train.dims() != test.dims() {
            return Err(Error::Data(format!(
                "train has {} dimensions, test has {}",
                train.dims(),
                test.dims()
            )));
        }
        if test.labels().is_none() {
            return Err(Error::Data("test split must be labeled".into()));
        }
        Ok(Self {
            name: name.into(),
            train,
            test,
        })
    }

    pub fn test_labels(&self) -> &[u8] {
        self.test.labels().expect("validated on construction")
    }
}

/// Parses headerless comma-separated rows. Blank lines are skipped; every
/// other line must have the same number of finite numeric cells.
pub fn parse_matrix(text: &str, file: &str) -> Result<(usize, Vec<f64>)> {
    let mut dims = None;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for cell in line.split(',') {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(file, i + 1, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(file, i + 1, format!("non-finite value {cell:?}")));
            }
            values.push(v);
        }
        let width = values.len() - before;
        match dims {
            None => dims = Some(width),
            Some(d) if d != width => {
                return Err(Error::parse(
                    file,
                    i + 1,
                    format!("expected {d} columns, found {width}"),
                ))
            }
            Some(_) => {}
        }
    }
    match dims {
        Some(d) => Ok((d, values)),
        None => Err(Error::parse(file, 0, "no data rows")),
    }
}

/// Parses one 0/1 integer per line. Blank lines are skipped.
pub fn parse_labels(text: &str, file: &str) -> Result<Vec<u8>> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => {
                return Err(Error::parse(
                    file,
                    i + 1,
                    format!("label must be 0 or 1, found {other:?}"),
                ))
            }
        }
    }
    Ok(labels)
}

pub fn parse_series(text: &str, file: &str) -> Result<SeriesMatrix> {
    let (dims, values) = parse_matrix(text, file)?;
    SeriesMatrix::new(file, dims, values)
}

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const LABEL_FILE: &str = "test_label.csv";

/// Loads `train.csv`, `test.csv` and `test_label.csv` from `dir`.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let load = |name: &str| -> Result<SeriesMatrix> {
        let path = dir.join(name);
        let text = read_file(&path)?;
        parse_series(&text, &path.display().to_string())
    };
    let train = load(TRAIN_FILE)?;
    let test = load(TEST_FILE)?;
    let label_path = dir.join(LABEL_FILE);
    let label_name = label_path.display().to_string();
    let labels = parse_labels(&read_file(&label_path)?, &label_name)?;
    if labels.len() != test.len() {
        return Err(Error::parse(
            &label_name,
            labels.len().min(test.len()) + 1,
            format!("{} labels for {} test rows", labels.len(), test.len()),
        ));
    }
    let test = test.with_labels(labels)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    if train.dims() != test.dims() {
        return Err(Error::parse(
            &dir.join(TEST_FILE).display().to_string(),
            1,
            format!("train has {} columns, test has {}", train.dims(), test.dims()),
        ));
    }
    DatasetBundle::new(name, train, test)
}

/// Rows as shortest round-trip decimal text.
pub fn format_matrix(series: &SeriesMatrix) -> String {
    let mut out = String::with_capacity(series.values().len() * 20);
    for t in 0..series.len() {
        for (j, v) in series.row(t).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    write_file(&dir.join(TRAIN_FILE), &format_matrix(&bundle.train))?;
    write_file(&dir.join(TEST_FILE), &format_matrix(&bundle.test))?;
    let labels: String = bundle
        .test_labels()
        .iter()
        .map(|l| if *l == 1 { "1\n" } else { "0\n" })
        .collect();
    write_file(&dir.join(LABEL_FILE), &labels)
}
