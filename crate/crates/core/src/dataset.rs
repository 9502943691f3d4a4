//! Datasets as `(X, T)` matrix pairs: CSV loading, target encoding and the
//! input bias column.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PilError, Result};
use crate::linalg::Matrix;

/// Column index of the bias in an augmented input matrix.
pub const BIAS_COLUMN: usize = 0;

/// Default scaled-target interval; keeps `|arctanh(t)| <= ln 3`.
pub const DEFAULT_TARGET_LOW: f64 = -0.8;
pub const DEFAULT_TARGET_HIGH: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    RegressionRaw,
    RegressionScaled,
    OneHotScaled,
}

impl FromStr for EncodingMode {
    type Err = PilError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "regression-raw" | "raw" => Ok(EncodingMode::RegressionRaw),
            "regression-scaled" | "scaled" => Ok(EncodingMode::RegressionScaled),
            "one-hot-scaled" | "one-hot" => Ok(EncodingMode::OneHotScaled),
            other => Err(PilError::Config(format!(
                "unknown encoding {other:?}; expected regression-raw, regression-scaled or one-hot-scaled"
            ))),
        }
    }
}

impl fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodingMode::RegressionRaw => "regression-raw",
            EncodingMode::RegressionScaled => "regression-scaled",
            EncodingMode::OneHotScaled => "one-hot-scaled",
        })
    }
}

/// How raw targets become the matrix `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEncoding {
    pub mode: EncodingMode,
    pub low: f64,
    pub high: f64,
    /// Class names in column order (one-hot mode). Filled from the data when
    /// left empty.
    pub class_labels: Option<Vec<String>>,
}

impl TargetEncoding {
    pub fn new(mode: EncodingMode) -> Self {
        TargetEncoding {
            mode,
            low: DEFAULT_TARGET_LOW,
            high: DEFAULT_TARGET_HIGH,
            class_labels: None,
        }
    }

    pub fn regression_raw() -> Self {
        Self::new(EncodingMode::RegressionRaw)
    }

    pub fn one_hot(classes: &[&str]) -> Self {
        TargetEncoding {
            class_labels: Some(classes.iter().map(|c| c.to_string()).collect()),
            ..Self::new(EncodingMode::OneHotScaled)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode != EncodingMode::RegressionRaw
            && !(-1.0 < self.low && self.low < self.high && self.high < 1.0)
        {
            return Err(PilError::Config(format!(
                "scaled targets need -1 < low < high < 1, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Raw target column contents before encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum RawTargets {
    Labels(Vec<String>),
    Values(Matrix),
}

/// Encodes raw targets into `T`.
///
/// * one-hot-scaled: `high` at the class column, `low` elsewhere.
/// * regression-scaled: each column mapped affinely from its observed
///   `[min, max]` onto `[low, high]`; constant columns go to the midpoint.
/// * regression-raw: values unchanged.
///
/// In one-hot mode without explicit `class_labels`, classes are the sorted
/// distinct labels.
pub fn encode_targets(raw: &RawTargets, enc: &TargetEncoding) -> Result<Matrix> {
    enc.validate()?;
    match (raw, enc.mode) {
        (RawTargets::Labels(labels), EncodingMode::OneHotScaled) => {
            let classes = match &enc.class_labels {
                Some(c) => c.clone(),
                None => distinct_sorted(labels),
            };
            if labels.is_empty() || classes.is_empty() {
                return Err(PilError::EmptyDataset);
            }
            let mut data = Vec::with_capacity(labels.len() * classes.len());
            for label in labels {
                let idx = classes
                    .iter()
                    .position(|c| c == label)
                    .ok_or_else(|| PilError::UnknownClass(label.clone()))?;
                data.extend((0..classes.len()).map(|j| if j == idx { enc.high } else { enc.low }));
            }
            Matrix::from_row_slice(labels.len(), classes.len(), &data)
        }
        (RawTargets::Labels(labels), _) => {
            let values = labels
                .iter()
                .enumerate()
                .map(|(row, l)| {
                    l.trim().parse::<f64>().map_err(|_| PilError::Parse {
                        row,
                        col: 0,
                        value: l.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if values.is_empty() {
                return Err(PilError::EmptyDataset);
            }
            let m = Matrix::from_row_slice(values.len(), 1, &values)?;
            encode_targets(&RawTargets::Values(m), enc)
        }
        (RawTargets::Values(m), EncodingMode::RegressionRaw) => Ok(m.clone()),
        (RawTargets::Values(m), EncodingMode::RegressionScaled) => {
            let (rows, cols) = m.shape();
            let ranges: Vec<(f64, f64)> = (0..cols)
                .map(|j| {
                    (0..rows).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                        (lo.min(m.get(i, j)), hi.max(m.get(i, j)))
                    })
                })
                .collect();
            let mid = 0.5 * (enc.low + enc.high);
            Matrix::from_fn(rows, cols, |i, j| {
                let (lo, hi) = ranges[j];
                if hi > lo {
                    enc.low + (m.get(i, j) - lo) / (hi - lo) * (enc.high - enc.low)
                } else {
                    mid
                }
            })
        }
        (RawTargets::Values(m), EncodingMode::OneHotScaled) => {
            let labels = m.iter().map(|v| v.to_string()).collect::<Vec<_>>();
            if m.cols() != 1 {
                return Err(PilError::Config(
                    "one-hot encoding needs a single target column".into(),
                ));
            }
            encode_targets(&RawTargets::Labels(labels), enc)
        }
    }
}

fn distinct_sorted(labels: &[String]) -> Vec<String> {
    let mut classes = labels.to_vec();
    classes.sort();
    classes.dedup();
    classes
}

/// Row-wise argmax: the class index each row votes for.
pub fn decode_argmax(t: &Matrix) -> Vec<usize> {
    (0..t.rows())
        .map(|i| {
            (0..t.cols())
                .fold((0, f64::NEG_INFINITY), |(best, bv), j| {
                    if t.get(i, j) > bv {
                        (j, t.get(i, j))
                    } else {
                        (best, bv)
                    }
                })
                .0
        })
        .collect()
}

/// `[1 | x_raw]`: prepends a column of ones.
pub fn augment_bias(x_raw: &Matrix) -> Matrix {
    x_raw.insert_constant_column(BIAS_COLUMN, 1.0)
}

/// Per-column min-max scaling onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    ranges: Vec<(f64, f64)>,
}

impl MinMaxScaler {
    pub fn fit(x: &Matrix) -> Self {
        let ranges = (0..x.cols())
            .map(|j| {
                (0..x.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    (lo.min(x.get(i, j)), hi.max(x.get(i, j)))
                })
            })
            .collect();
        MinMaxScaler { ranges }
    }

    /// Constant columns map to 0.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.ranges.len() {
            return Err(PilError::shape("min-max scaling", self.ranges.len(), x.cols()));
        }
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            let (lo, hi) = self.ranges[j];
            if hi > lo {
                (x.get(i, j) - lo) / (hi - lo)
            } else {
                0.0
            }
        })
    }
}

/// Paired inputs `X` (bias-augmented) and targets `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    t: Matrix,
    n_raw_features: usize,
    encoding: TargetEncoding,
    source: String,
}

impl Dataset {
    /// Builds a dataset from raw features, prepending the bias column.
    pub fn new(
        x_raw: Matrix,
        t: Matrix,
        encoding: TargetEncoding,
        source: impl Into<String>,
    ) -> Result<Self> {
        if x_raw.rows() != t.rows() {
            return Err(PilError::shape(
                "dataset",
                format!("{} target rows", x_raw.rows()),
                t.rows(),
            ));
        }
        Ok(Dataset {
            n_raw_features: x_raw.cols(),
            x: augment_bias(&x_raw),
            t,
            encoding,
            source: source.into(),
        })
    }

    /// Builds a dataset whose input matrix is used as given, with no bias
    /// column added. Use for hand-constructed `X`.
    pub fn from_augmented(
        x: Matrix,
        t: Matrix,
        encoding: TargetEncoding,
        source: impl Into<String>,
    ) -> Result<Self> {
        if x.rows() != t.rows() {
            return Err(PilError::shape("dataset", format!("{} target rows", x.rows()), t.rows()));
        }
        Ok(Dataset {
            n_raw_features: x.cols(),
            x,
            t,
            encoding,
            source: source.into(),
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn t(&self) -> &Matrix {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_raw_features(&self) -> usize {
        self.n_raw_features
    }

    pub fn has_bias(&self) -> bool {
        self.x.cols() == self.n_raw_features + 1
    }

    pub fn encoding(&self) -> &TargetEncoding {
        &self.encoding
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Inputs without the bias column.
    pub fn raw_features(&self) -> Matrix {
        if self.has_bias() && self.x.cols() > 1 {
            self.x.remove_column(BIAS_COLUMN).expect("bias column present")
        } else {
            self.x.clone()
        }
    }

    /// Adds the bias column to a dataset built with [`Dataset::from_augmented`].
    pub fn with_bias(self) -> Result<Self> {
        if self.has_bias() {
            return Err(PilError::AlreadyAugmented);
        }
        Ok(Dataset {
            x: augment_bias(&self.x),
            ..self
        })
    }

    /// Writes raw features followed by the encoded target columns, with a
    /// header row. Loading the file back with `regression-raw` targets
    /// reproduces both matrices bit for bit.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let io = |source| PilError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        let features = self.raw_features();
        let nf = if self.has_bias() { features.cols() } else { self.x.cols() };
        let header: Vec<String> = (0..nf)
            .map(|j| format!("x{j}"))
            .chain((0..self.t.cols()).map(|j| format!("t{j}")))
            .collect();
        w.write_record(&header).map_err(|e| io(e.into()))?;
        for i in 0..self.len() {
            let row: Vec<String> = features
                .row(i)
                .into_iter()
                .chain(self.t.row(i))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}

/// Which CSV columns hold features and which hold targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub features: Vec<usize>,
    pub targets: Vec<usize>,
}

impl ColumnSpec {
    /// Parses index lists such as `"0-1"` or `"0,2,4-6"`.
    pub fn parse(features: &str, targets: &str) -> Result<Self> {
        let spec = ColumnSpec {
            features: parse_index_list(features)?,
            targets: parse_index_list(targets)?,
        };
        if let Some(c) = spec.features.iter().find(|c| spec.targets.contains(c)) {
            return Err(PilError::Config(format!(
                "column {c} is both a feature and a target"
            )));
        }
        Ok(spec)
    }
}

fn parse_index_list(s: &str) -> Result<Vec<usize>> {
    let bad = || PilError::Config(format!("bad column list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Loads a CSV file.
///
/// The first row is taken as a header when none of its feature cells parse
/// as numbers. Row and column numbers in [`PilError::Parse`] are 0-based
/// positions in the file.
pub fn load_csv(path: &Path, spec: &ColumnSpec, encoding: &TargetEncoding) -> Result<Dataset> {
    encoding.validate()?;
    let io = |source| PilError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(err) => io(err),
            other => PilError::Config(format!("malformed CSV in {}: {other:?}", path.display())),
        })?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        records.push(rec);
    }

    let skip_header = records.first().is_some_and(|first| {
        spec.features
            .iter()
            .all(|&c| first.get(c).is_none_or(|v| v.trim().parse::<f64>().is_err()))
    });
    let data_start = usize::from(skip_header);
    if records.len() <= data_start {
        return Err(PilError::EmptyDataset);
    }

    let cell = |row: usize, col: usize| -> Result<&str> {
        records[row]
            .get(col)
            .map(str::trim)
            .ok_or_else(|| PilError::Parse {
                row,
                col,
                value: "<missing>".into(),
            })
    };
    let number = |row: usize, col: usize| -> Result<f64> {
        let v = cell(row, col)?;
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(PilError::Parse {
                row,
                col,
                value: v.to_string(),
            }),
        }
    };

    let n = records.len() - data_start;
    let mut xs = Vec::with_capacity(n * spec.features.len());
    for row in data_start..records.len() {
        for &c in &spec.features {
            xs.push(number(row, c)?);
        }
    }
    let x_raw = Matrix::from_row_slice(n, spec.features.len(), &xs)?;

    let raw = if encoding.mode == EncodingMode::OneHotScaled {
        if spec.targets.len() != 1 {
            return Err(PilError::Config(
                "one-hot encoding needs exactly one target column".into(),
            ));
        }
        let labels = (data_start..records.len())
            .map(|row| cell(row, spec.targets[0]).map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        RawTargets::Labels(labels)
    } else {
        let mut ts = Vec::with_capacity(n * spec.targets.len());
        for row in data_start..records.len() {
            for &c in &spec.targets {
                ts.push(number(row, c)?);
            }
        }
        RawTargets::Values(Matrix::from_row_slice(n, spec.targets.len(), &ts)?)
    };

    let mut encoding = encoding.clone();
    if let (RawTargets::Labels(labels), None) = (&raw, &encoding.class_labels) {
        encoding.class_labels = Some(distinct_sorted(labels));
    }
    let t = encode_targets(&raw, &encoding)?;
    Dataset::new(x_raw, t, encoding, path.display().to_string())
}
