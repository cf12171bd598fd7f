//! Dense matrices, loss tables and packed distance matrices, plus their on-disk
//! formats.
//!
//! Binary layout (`FDM1`): the 4 ASCII bytes `FDM1`, `rows` as u64 LE, `cols`
//! as u64 LE, then `rows * cols` f64 LE values in row-major order.
//!
//! CSV layout: one matrix row per line, comma separated, no header. Values are
//! written with Rust's shortest round-trip float formatting.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"FDM1";
const HEADER_LEN: usize = 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("{path}: malformed header: {detail}")]
    MalformedHeader { path: PathBuf, detail: String },
    #[error("{path}: dimension mismatch at {location}: expected {expected}, found {found}")]
    DimensionMismatch {
        path: PathBuf,
        location: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { path: PathBuf, row: usize, col: usize },
    #[error("{path}: cannot parse {token:?} at row {row}, column {col}")]
    InvalidNumber {
        path: PathBuf,
        row: usize,
        col: usize,
        token: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid matrix: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, MatrixError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` (any case) selects CSV; everything else is binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

/// Row-major matrix of finite f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MatrixError::Invalid(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::Invalid(format!(
                "non-finite entry at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(MatrixError::Invalid(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-sample losses: one row per hypothesis (iterate), one column per data sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix(DenseMatrix);

impl LossMatrix {
    pub fn new(inner: DenseMatrix) -> Result<Self> {
        if inner.rows() < 2 {
            return Err(MatrixError::Invalid(format!(
                "a loss matrix needs at least 2 hypotheses, got {}",
                inner.rows()
            )));
        }
        if inner.cols() == 0 {
            return Err(MatrixError::Invalid("a loss matrix needs at least one sample".into()));
        }
        Ok(Self(inner))
    }

    /// Like [`LossMatrix::new`] but additionally checks `0 <= l <= bound`.
    pub fn with_bound(inner: DenseMatrix, bound: f64) -> Result<Self> {
        if let Some(pos) = inner.data().iter().position(|&v| !(0.0..=bound).contains(&v)) {
            return Err(MatrixError::Invalid(format!(
                "loss at row {}, column {} outside [0, {bound}]",
                pos / inner.cols(),
                pos % inner.cols()
            )));
        }
        Self::new(inner)
    }

    pub fn n_hypotheses(&self) -> usize {
        self.0.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.0
    }

    /// Largest loss on a single sample over all hypotheses.
    pub fn max_loss(&self) -> f64 {
        self.0.max_value()
    }
}

/// Symmetric distance matrix with zero diagonal; only the strict upper
/// triangle is stored, packed row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n_pts: usize,
    values: Vec<f64>,
}

#[inline]
fn packed_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[inline]
fn row_offset(n: usize, i: usize) -> usize {
    i * (2 * n - i - 1) / 2
}

impl DistanceMatrix {
    pub fn new(n_pts: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != packed_len(n_pts) {
            return Err(MatrixError::Invalid(format!(
                "{} packed values for {n_pts} points, expected {}",
                values.len(),
                packed_len(n_pts)
            )));
        }
        if let Some(pos) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MatrixError::Invalid(format!(
                "packed entry {pos} is {} (must be finite and nonnegative)",
                values[pos]
            )));
        }
        Ok(Self { n_pts, values })
    }

    /// Fills every pair `i < j` from `f(i, j)`.
    pub fn from_fn(n_pts: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(packed_len(n_pts));
        for i in 0..n_pts {
            for j in i + 1..n_pts {
                values.push(f(i, j));
            }
        }
        Self::new(n_pts, values)
    }

    pub(crate) fn from_packed_unchecked(n_pts: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), packed_len(n_pts));
        Self { n_pts, values }
    }

    /// Reads a square matrix; requires a zero diagonal and symmetry.
    pub fn from_square(m: &DenseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(MatrixError::Invalid(format!(
                "distance matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Err(MatrixError::Invalid(format!("nonzero diagonal at {i}")));
            }
            for j in i + 1..n {
                let (a, b) = (m.get(i, j), m.get(j, i));
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(MatrixError::Invalid(format!("asymmetric entry at ({i}, {j})")));
                }
            }
        }
        Self::from_fn(n, |i, j| m.get(i, j))
    }

    pub fn n_pts(&self) -> usize {
        self.n_pts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 0.0,
            Less => self.values[row_offset(self.n_pts, i) + (j - i - 1)],
            Greater => self.values[row_offset(self.n_pts, j) + (i - j - 1)],
        }
    }

    /// Packed slice of row `i` to the right of the diagonal: distances `(i, i+1..n)`.
    #[inline]
    pub fn upper_row(&self, i: usize) -> &[f64] {
        let start = row_offset(self.n_pts, i);
        &self.values[start..start + (self.n_pts - i - 1)]
    }

    pub fn scaled(&self, c: f64) -> DistanceMatrix {
        assert!(c > 0.0 && c.is_finite(), "scale must be positive");
        Self {
            n_pts: self.n_pts,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn diameter(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_square(&self) -> DenseMatrix {
        let n = self.n_pts;
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = self.get(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MatrixError + '_ {
    move |source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_matrix(path: &Path, format: Format) -> Result<DenseMatrix> {
    match format {
        Format::Binary => {
            let file = File::open(path).map_err(io_err(path))?;
            let mut bytes = Vec::new();
            BufReader::new(file).read_to_end(&mut bytes).map_err(io_err(path))?;
            decode_binary(&bytes, path)
        }
        Format::Csv => {
            let file = File::open(path).map_err(io_err(path))?;
            parse_csv(BufReader::new(file), path)
        }
    }
}

/// Loads by content: files starting with the `FDM1` magic are binary, others CSV.
pub fn load_matrix_auto(path: &Path) -> Result<DenseMatrix> {
    let mut head = [0u8; 4];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(io_err(path))?;
    if n == 4 && &head == MAGIC {
        load_matrix(path, Format::Binary)
    } else {
        load_matrix(path, Format::Csv)
    }
}

pub fn save_matrix(m: &DenseMatrix, path: &Path, format: Format) -> Result<()> {
    if m.rows == 0 || m.cols == 0 {
        return Err(MatrixError::MalformedHeader {
            path: path.to_path_buf(),
            detail: format!("refusing to write a {}x{} matrix (rows and cols must be >= 1)", m.rows, m.cols),
        });
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Binary => w.write_all(&encode_binary(m)),
        Format::Csv => write_csv(m, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(io_err(path))
}

pub fn encode_binary(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols as u64).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    let malformed = |detail: String| MatrixError::MalformedHeader {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < HEADER_LEN {
        return Err(malformed(format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(malformed(format!("bad magic {:?}", &bytes[..4])));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(malformed(format!("declared shape {rows}x{cols}")));
    }
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| malformed(format!("declared shape {rows}x{cols} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 8 {
        return Err(MatrixError::DimensionMismatch {
            path: path.to_path_buf(),
            location: "payload".into(),
            expected: count * 8,
            found: payload.len(),
        });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut data = Vec::with_capacity(count);
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(MatrixError::NonFiniteEntry {
                path: path.to_path_buf(),
                row: k / cols,
                col: k % cols,
            });
        }
        data.push(v);
    }
    Ok(DenseMatrix { rows, cols, data })
}

pub fn parse_csv<R: Read>(reader: R, path: &Path) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| MatrixError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(MatrixError::DimensionMismatch {
                    path: path.to_path_buf(),
                    location: format!("row {rows}"),
                    expected: c,
                    found: record.len(),
                })
            }
            _ => {}
        }
        for (col, token) in record.iter().enumerate() {
            let v: f64 = token.parse().map_err(|_| MatrixError::InvalidNumber {
                path: path.to_path_buf(),
                row: rows,
                col,
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(MatrixError::NonFiniteEntry {
                    path: path.to_path_buf(),
                    row: rows,
                    col,
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| MatrixError::MalformedHeader {
        path: path.to_path_buf(),
        detail: "no rows".into(),
    })?;
    Ok(DenseMatrix { rows, cols, data })
}

pub fn write_csv<W: Write>(m: &DenseMatrix, w: &mut W) -> std::io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
