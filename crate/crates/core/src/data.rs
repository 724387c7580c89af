//! Tabular datasets, feature subsets, column standardization and CSV I/O.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Continuous => "continuous",
            OutcomeKind::Binary => "binary",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" | "gaussian" => Ok(OutcomeKind::Continuous),
            "binary" | "binomial" => Ok(OutcomeKind::Binary),
            other => Err(Error::Config(format!("unknown outcome kind `{other}`"))),
        }
    }
}

/// Covariate matrix plus outcome. Immutable once constructed.
///
/// The matrix is stored column-major, so `column(j)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Vec<f64>,
    kind: OutcomeKind,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, kind: OutcomeKind) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Self::with_names(x, y, kind, names)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: Vec<f64>,
        kind: OutcomeKind,
        names: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidData(format!(
                "{} covariate rows but {} outcomes",
                x.nrows(),
                y.len()
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::InvalidData(format!(
                "{} names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let n = x.nrows().max(1);
            return Err(Error::InvalidData(format!(
                "non-finite covariate at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidData(format!("non-finite outcome at row {i}")));
            }
            if kind == OutcomeKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::InvalidData(format!(
                    "binary outcome at row {i} is {v}, expected 0 or 1"
                )));
            }
        }
        Ok(Dataset { x, y, kind, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        column(&self.x, j)
    }

    /// Rows `idx` (in the given order) as a new dataset.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let x = select_rows(&self.x, idx);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Dataset {
            x,
            y,
            kind: self.kind,
            names: self.names.clone(),
        }
    }

    /// Same covariates with a replacement outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::with_names(self.x.clone(), y, self.kind, self.names.clone())
    }

    pub fn mean_outcome(&self) -> f64 {
        mean(&self.y)
    }
}

/// Contiguous view of column `j` of a column-major matrix.
pub fn column(x: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = x.nrows();
    &x.as_slice()[j * n..(j + 1) * n]
}

pub fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut data = Vec::with_capacity(n * cols.len());
    for &j in cols {
        data.extend_from_slice(column(x, j));
    }
    DMatrix::from_vec(n, cols.len(), data)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation with the n - 1 denominator.
pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}

/// Sorted, duplicate-free, nonempty set of column indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureSubset {
    indices: Vec<usize>,
}

impl FeatureSubset {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::InvalidSubset("empty feature subset".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= p {
                return Err(Error::IndexOutOfRange { index: last, p });
            }
        }
        Ok(FeatureSubset { indices })
    }

    pub fn all(p: usize) -> Self {
        assert!(p > 0, "dataset has no columns");
        FeatureSubset {
            indices: (0..p).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &FeatureSubset) -> bool {
        self.indices.iter().all(|&j| other.contains(j))
    }

    /// Stable identifier used when deriving seeds for subset-specific fits.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self.indices.iter().map(|j| j.to_string()).collect();
        parts.join(",")
    }
}

pub fn subset_columns(d: &Dataset, s: &FeatureSubset) -> Result<Dataset> {
    if let Some(&bad) = s.indices().iter().find(|&&j| j >= d.p()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            p: d.p(),
        });
    }
    let x = select_columns(d.x(), s.indices());
    let names = s.indices().iter().map(|&j| d.names[j].clone()).collect();
    Dataset::with_names(x, d.y.clone(), d.kind, names)
}

/// Per-column centering and scaling to unit sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ColumnScaler {
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.means[j]) / self.sds[j]
        }))
    }

    pub fn inverse(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(z)?;
        Ok(DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| {
            z[(i, j)] * self.sds[j] + self.means[j]
        }))
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: x.ncols(),
            });
        }
        Ok(())
    }
}

pub fn standardize_columns(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ColumnScaler)> {
    if x.nrows() < 2 {
        return Err(Error::TooFewObservations(
            "standardization needs at least 2 rows".into(),
        ));
    }
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let col = column(x, j);
        let sd = sample_sd(col);
        if !(sd > 0.0) {
            return Err(Error::ConstantColumn(j));
        }
        means.push(mean(col));
        sds.push(sd);
    }
    let scaler = ColumnScaler { means, sds };
    let z = scaler.transform(x)?;
    Ok((z, scaler))
}

/// Reads a numeric CSV with a header row. Covariates keep file column order.
pub fn load_csv(path: impl AsRef<Path>, outcome_column: &str, kind: OutcomeKind) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let y_col = header
        .iter()
        .position(|h| h == outcome_column)
        .ok_or_else(|| Error::MissingColumn(outcome_column.to_string()))?;
    let p = header.len() - 1;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut y = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        // row numbers are 1-based data rows (the header is row 0)
        let row = r + 1;
        if rec.len() != header.len() {
            return Err(Error::Cell {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let mut k = 0;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Cell {
                row,
                column: header[c].clone(),
                message: format!("`{field}` is not numeric"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row,
                    column: header[c].clone(),
                    message: format!("`{field}` is not finite"),
                });
            }
            if c == y_col {
                if kind == OutcomeKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::Cell {
                        row,
                        column: header[c].clone(),
                        message: format!("binary outcome must be 0 or 1, found {v}"),
                    });
                }
                y.push(v);
            } else {
                cols[k].push(v);
                k += 1;
            }
        }
    }
    let n = y.len();
    let data: Vec<f64> = cols.into_iter().flatten().collect();
    let x = DMatrix::from_vec(n, p, data);
    let names = header
        .into_iter()
        .enumerate()
        .filter(|(c, _)| *c != y_col)
        .map(|(_, h)| h)
        .collect();
    Dataset::with_names(x, y, kind, names)
}

/// Writes covariates followed by the outcome column. Values use the shortest
/// representation that round-trips exactly.
pub fn write_csv(path: impl AsRef<Path>, d: &Dataset, outcome_column: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header: Vec<&str> = d.names.iter().map(String::as_str).collect();
    header.push(outcome_column);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for i in 0..d.n() {
        line.clear();
        for j in 0..d.p() {
            line.push_str(&format!("{:?},", d.x[(i, j)]));
        }
        line.push_str(&format!("{:?}", d.y[i]));
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}
