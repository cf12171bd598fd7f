//! Distances between hypotheses.
//!
//! The loss-based pseudo-metric compares two hypotheses by the mean absolute
//! difference of their per-sample losses; two hypotheses that agree on every
//! sample sit at distance zero even when their parameters differ. The
//! subsampled variant restricts the mean to one fixed subset of samples drawn
//! once per matrix. The Euclidean metric works on raw parameter coordinates.

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix_io::{DenseMatrix, DistanceMatrix, LossMatrix};
use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("column subset is empty")]
    EmptySubset,
    #[error("invalid column subset: {0}")]
    InvalidSubset(String),
    #[error("fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("an explicit subset and a fraction are mutually exclusive")]
    ConflictingSelection,
    #[error("{0:?} is not a loss-based metric")]
    NotALossMetric(MetricKind),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Mean absolute loss difference over all samples.
    LossPseudo,
    /// Mean absolute loss difference over a subset of samples.
    LossPseudoSubsampled,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub subset: Option<Vec<usize>>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
}

impl MetricSpec {
    pub fn loss_pseudo() -> Self {
        Self {
            kind: MetricKind::LossPseudo,
            subset: None,
            fraction: None,
            seed: None,
        }
    }

    pub fn subsampled_fraction(fraction: f64, seed: u64) -> Self {
        Self {
            kind: MetricKind::LossPseudoSubsampled,
            subset: None,
            fraction: Some(fraction),
            seed: Some(seed),
        }
    }

    pub fn subsampled_columns(subset: Vec<usize>) -> Self {
        Self {
            kind: MetricKind::LossPseudoSubsampled,
            subset: Some(subset),
            fraction: None,
            seed: None,
        }
    }

    pub fn euclidean() -> Self {
        Self {
            kind: MetricKind::Euclidean,
            subset: None,
            fraction: None,
            seed: None,
        }
    }

    /// Columns to average over for a table with `n_cols` samples; `None` means all.
    ///
    /// A fraction `f` selects `ceil(f * n_cols)` columns uniformly without
    /// replacement from the stream seeded by `seed` (0 when absent).
    pub fn resolve_columns(&self, n_cols: usize) -> Result<Option<Vec<usize>>, MetricError> {
        match (&self.subset, self.fraction) {
            (Some(_), Some(_)) => Err(MetricError::ConflictingSelection),
            (Some(cols), None) => {
                validate_subset(cols, n_cols)?;
                Ok(Some(cols.clone()))
            }
            (None, Some(f)) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(MetricError::InvalidFraction(f));
                }
                let k = ((f * n_cols as f64).ceil() as usize).clamp(1, n_cols);
                let mut rng = SplitMix64::derive(self.seed.unwrap_or(0), 0x5eed_c01, 0);
                Ok(Some(rng.sample_sorted(n_cols, k)))
            }
            (None, None) => Ok(None),
        }
    }
}

fn validate_subset(cols: &[usize], n_cols: usize) -> Result<(), MetricError> {
    if cols.is_empty() {
        return Err(MetricError::EmptySubset);
    }
    if !cols.windows(2).all(|w| w[0] < w[1]) {
        return Err(MetricError::InvalidSubset("indices must be strictly increasing".into()));
    }
    if let Some(&last) = cols.last() {
        if last >= n_cols {
            return Err(MetricError::InvalidSubset(format!(
                "column {last} out of range for {n_cols} samples"
            )));
        }
    }
    Ok(())
}

/// A finite (pseudo-)metric space addressed by point index.
pub trait Pairwise: Sync {
    fn n_pts(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> f64;

    fn diameter(&self) -> f64 {
        let n = self.n_pts();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(self.dist(i, j));
            }
        }
        best
    }
}

impl Pairwise for DistanceMatrix {
    fn n_pts(&self) -> usize {
        DistanceMatrix::n_pts(self)
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }

    fn diameter(&self) -> f64 {
        DistanceMatrix::diameter(self)
    }
}

/// Euclidean distances between rows of a point matrix, computed on demand.
///
/// Gives the same values as [`distance_matrix_euclidean`] without the
/// quadratic memory.
#[derive(Debug, Clone, Copy)]
pub struct EuclideanCloud<'a> {
    points: &'a DenseMatrix,
}

impl<'a> EuclideanCloud<'a> {
    pub fn new(points: &'a DenseMatrix) -> Self {
        Self { points }
    }
}

impl Pairwise for EuclideanCloud<'_> {
    fn n_pts(&self) -> usize {
        self.points.rows()
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        euclidean(self.points.row(i), self.points.row(j))
    }
}

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s.sqrt()
}

/// Mean of `|a_k - b_k|` with Kahan compensation, summed in index order.
#[inline]
fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let term = (x - y).abs() - comp;
        let t = sum + term;
        comp = (t - sum) - term;
        sum = t;
    }
    sum / a.len() as f64
}

pub fn pseudo_distance(
    losses: &LossMatrix,
    i: usize,
    j: usize,
    cols: Option<&[usize]>,
) -> Result<f64, MetricError> {
    let m = losses.matrix();
    for index in [i, j] {
        if index >= m.rows() {
            return Err(MetricError::IndexOutOfRange { index, len: m.rows() });
        }
    }
    match cols {
        None => Ok(mean_abs_diff(m.row(i), m.row(j))),
        Some(cols) => {
            validate_subset(cols, m.cols())?;
            let a: Vec<f64> = cols.iter().map(|&c| m.get(i, c)).collect();
            let b: Vec<f64> = cols.iter().map(|&c| m.get(j, c)).collect();
            Ok(mean_abs_diff(&a, &b))
        }
    }
}

/// Fills the packed upper triangle row by row in parallel. Each entry is
/// computed independently, so the result does not depend on thread count.
fn fill_packed(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
    let mut values = vec![0.0; n * n.saturating_sub(1) / 2];
    let mut rows = Vec::with_capacity(n);
    let mut rest = values.as_mut_slice();
    for i in 0..n {
        let (head, tail) = rest.split_at_mut(n - i - 1);
        rows.push((i, head));
        rest = tail;
    }
    rows.into_par_iter().for_each(|(i, row)| {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = f(i, i + 1 + k);
        }
    });
    values
}

pub fn distance_matrix_from_losses(
    losses: &LossMatrix,
    spec: &MetricSpec,
) -> Result<DistanceMatrix, MetricError> {
    if spec.kind == MetricKind::Euclidean {
        return Err(MetricError::NotALossMetric(spec.kind));
    }
    let m = losses.matrix();
    let selected;
    let table = match spec.resolve_columns(m.cols())? {
        // gather the subset once so every pair reads contiguous memory
        Some(cols) if cols.len() < m.cols() => {
            let mut data = Vec::with_capacity(m.rows() * cols.len());
            for r in m.row_iter() {
                data.extend(cols.iter().map(|&c| r[c]));
            }
            selected = DenseMatrix::new(m.rows(), cols.len(), data)
                .expect("gathered loss columns are finite");
            &selected
        }
        _ => m,
    };
    let n = table.rows();
    let values = fill_packed(n, |i, j| mean_abs_diff(table.row(i), table.row(j)));
    Ok(DistanceMatrix::from_packed_unchecked(n, values))
}

pub fn distance_matrix_euclidean(points: &DenseMatrix) -> Result<DistanceMatrix, MetricError> {
    if points.rows() < 2 {
        return Err(MetricError::TooFewPoints(points.rows()));
    }
    let n = points.rows();
    let values = fill_packed(n, |i, j| euclidean(points.row(i), points.row(j)));
    Ok(DistanceMatrix::from_packed_unchecked(n, values))
}
