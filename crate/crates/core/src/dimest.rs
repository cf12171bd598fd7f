//! Fractal dimension estimators.
//!
//! * PH dimension: draw random subsets of growing size `n`, compute the
//!   `alpha`-weighted sum `E_alpha` of their degree-0 lifetimes, regress
//!   `log E_alpha` on `log n` and read the dimension off the slope `a` as
//!   `alpha / (1 - a)`.
//! * Box dimension: count greedy farthest-point covers `N_delta` over a range
//!   of scales and regress `log N_delta` on `log(1/delta)`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::matrix_io::LossMatrix;
use crate::metric::{distance_matrix_from_losses, MetricError, MetricSpec, Pairwise};
use crate::ph0::{life_sum, mst_weights};
use crate::rng::SplitMix64;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_TRIALS: usize = 5;
pub const DEFAULT_N_SIZES: usize = 20;
pub const DEFAULT_N_DELTAS: usize = 8;
/// Minimum number of subset sizes with positive `E_alpha` for a regression.
pub const MIN_FIT_POINTS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum DimError {
    #[error("need at least 4 points to estimate a dimension, got {0}")]
    TooFewPoints(usize),
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("trials must be >= 1")]
    NoTrials,
    #[error("invalid subset sizes: {0}")]
    SizesOutOfRange(String),
    #[error("all lifetimes are zero for all but {surviving} subset sizes; the cloud is degenerate")]
    ZeroLifetimes { surviving: usize },
    #[error("fitted slope {slope} >= 1: the PH dimension estimate is undefined")]
    SlopeAtLeastOne { slope: f64 },
    #[error("delta list is empty")]
    EmptyDeltaList,
    #[error("deltas must be positive, finite and strictly decreasing")]
    InvalidDeltas,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "ols needs two points");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        let ss_res: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhDimConfig {
    pub alpha: f64,
    /// Subset sizes; `None` selects [`default_sizes`].
    pub sizes: Option<Vec<usize>>,
    pub trials: usize,
    pub seed: u64,
}

impl PhDimConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            sizes: None,
            trials: DEFAULT_TRIALS,
            seed,
        }
    }
}

/// 20 sizes evenly spaced from `ceil(n/5)` to `n` (deduplicated, at least 2).
pub fn default_sizes(n_pts: usize) -> Vec<usize> {
    let lo = n_pts.div_ceil(5).max(2);
    let hi = n_pts;
    let mut sizes: Vec<usize> = (0..DEFAULT_N_SIZES)
        .map(|k| {
            let t = k as f64 / (DEFAULT_N_SIZES - 1) as f64;
            (lo as f64 + t * (hi - lo) as f64).round() as usize
        })
        .collect();
    sizes.dedup();
    sizes
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub size: usize,
    pub log_size: f64,
    /// Mean of `log E_alpha` over the trials where `E_alpha > 0`.
    pub mean_log_e: f64,
    /// Trials that produced `E_alpha > 0`.
    pub trials_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub alpha: f64,
    pub sizes: Vec<usize>,
    pub trials_per_size: usize,
    pub log_e_records: Vec<LogRecord>,
    pub slope: f64,
    pub intercept: f64,
    /// `alpha / (1 - slope)`; `+inf` when the slope is at least 1.
    pub dimension: f64,
    pub valid: bool,
    pub r_squared: f64,
    pub seed: u64,
}

impl DimensionEstimate {
    /// The dimension, or [`DimError::SlopeAtLeastOne`] when it is undefined.
    pub fn value(&self) -> Result<f64, DimError> {
        if self.valid {
            Ok(self.dimension)
        } else {
            Err(DimError::SlopeAtLeastOne { slope: self.slope })
        }
    }

    /// Plot-ready `size,log_size,mean_log_e` rows.
    pub fn write_records_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "size,log_size,mean_log_e")?;
        for r in &self.log_e_records {
            writeln!(w, "{},{},{}", r.size, r.log_size, r.mean_log_e)?;
        }
        Ok(())
    }
}

/// Binary exponent of a positive normal float.
fn exponent_of(x: f64) -> i32 {
    ((x.to_bits() >> 52) & 0x7ff) as i32 - 1023
}

pub fn estimate_ph_dim<P: Pairwise + ?Sized>(space: &P, cfg: &PhDimConfig) -> Result<DimensionEstimate, DimError> {
    let n = space.n_pts();
    if n < 4 {
        return Err(DimError::TooFewPoints(n));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha.is_finite()) {
        return Err(DimError::InvalidAlpha(cfg.alpha));
    }
    if cfg.trials == 0 {
        return Err(DimError::NoTrials);
    }
    let sizes = cfg.sizes.clone().unwrap_or_else(|| default_sizes(n));
    validate_sizes(&sizes, n)?;

    let work: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let sums: Vec<f64> = work
        .par_iter()
        .map(|&(s, t)| {
            let mut rng = SplitMix64::derive(cfg.seed, s as u64, t as u64);
            let idx = rng.sample_sorted(n, sizes[s]);
            life_sum(&mst_weights(space, &idx), cfg.alpha)
        })
        .collect();

    // Normalize by a power of two before taking logs: rescaling the metric by
    // 2^k then changes only the exponent and leaves the fitted slope bit-identical.
    let max_e = sums.iter().copied().fold(0.0f64, f64::max);
    if !(max_e > 0.0) {
        return Err(DimError::ZeroLifetimes { surviving: 0 });
    }
    let shift = exponent_of(max_e);
    let unshift = 2f64.powi(-shift);
    let log_shift = shift as f64 * std::f64::consts::LN_2;

    let mut records = Vec::with_capacity(sizes.len());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (s, &size) in sizes.iter().enumerate() {
        let logs: Vec<f64> = sums[s * cfg.trials..(s + 1) * cfg.trials]
            .iter()
            .filter(|&&e| e > 0.0)
            .map(|&e| (e * unshift).ln())
            .collect();
        if logs.is_empty() {
            continue;
        }
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let log_size = (size as f64).ln();
        xs.push(log_size);
        ys.push(mean);
        records.push(LogRecord {
            size,
            log_size,
            mean_log_e: mean + log_shift,
            trials_used: logs.len(),
        });
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(DimError::ZeroLifetimes { surviving: xs.len() });
    }
    let fit = ols(&xs, &ys);
    let valid = fit.slope < 1.0;
    Ok(DimensionEstimate {
        alpha: cfg.alpha,
        sizes,
        trials_per_size: cfg.trials,
        log_e_records: records,
        slope: fit.slope,
        intercept: fit.intercept + log_shift,
        dimension: if valid { cfg.alpha / (1.0 - fit.slope) } else { f64::INFINITY },
        valid,
        r_squared: fit.r_squared,
        seed: cfg.seed,
    })
}

fn validate_sizes(sizes: &[usize], n: usize) -> Result<(), DimError> {
    if sizes.len() < MIN_FIT_POINTS {
        return Err(DimError::SizesOutOfRange(format!(
            "need at least {MIN_FIT_POINTS} sizes, got {}",
            sizes.len()
        )));
    }
    if !sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(DimError::SizesOutOfRange("sizes must be strictly increasing".into()));
    }
    if sizes[0] < 2 || *sizes.last().unwrap() > n {
        return Err(DimError::SizesOutOfRange(format!("sizes must lie in [2, {n}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDimEstimate {
    pub deltas: Vec<f64>,
    pub counts: Vec<usize>,
    /// Slope of `log N` against `log(1/delta)`; `None` with fewer than two scales.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverStrategy {
    GreedyFarthest,
}

/// Covering radii of the greedy farthest-point ordering.
///
/// Centers are added starting from point 0, each time taking the point
/// farthest from all current centers (lowest index on ties). Entry `k - 1` is
/// the largest distance from any point to its nearest of the first `k`
/// centers; the sequence is nonincreasing and ends at 0.
pub fn farthest_point_radii<P: Pairwise + ?Sized>(space: &P) -> Vec<f64> {
    let n = space.n_pts();
    if n == 0 {
        return Vec::new();
    }
    let mut nearest = vec![f64::INFINITY; n];
    let mut radii = Vec::with_capacity(n);
    let mut center = 0;
    for _ in 0..n {
        nearest[center] = 0.0;
        let mut far = 0;
        let mut far_d = -1.0;
        for (v, slot) in nearest.iter_mut().enumerate() {
            let d = space.dist(center, v);
            if d < *slot {
                *slot = d;
            }
            if *slot > far_d {
                far_d = *slot;
                far = v;
            }
        }
        radii.push(far_d);
        if far_d <= 0.0 {
            break;
        }
        center = far;
    }
    radii
}

/// Number of greedy centers whose closed `delta`-balls cover the cloud.
pub fn cover_count(radii: &[f64], delta: f64) -> usize {
    radii.partition_point(|&r| r > delta) + 1
}

/// Eight scales log-spaced from `diameter/4` down to
/// `max(diameter/256, diameter/sqrt(n_pts))`.
///
/// Below `diameter/sqrt(n)` a planar sample of `n` points has nearly one
/// ball per point and the counts flatten out.
pub fn default_deltas(diameter: f64, n_pts: usize) -> Vec<f64> {
    let hi = diameter / 4.0;
    let lo = (diameter / 256.0).max(diameter / (n_pts.max(1) as f64).sqrt()).min(hi / 2.0);
    let k = DEFAULT_N_DELTAS;
    (0..k)
        .map(|i| hi * (lo / hi).powf(i as f64 / (k - 1) as f64))
        .collect()
}

pub fn estimate_box_dim<P: Pairwise + ?Sized>(
    space: &P,
    deltas: &[f64],
    strategy: CoverStrategy,
) -> Result<BoxDimEstimate, DimError> {
    let CoverStrategy::GreedyFarthest = strategy;
    if deltas.is_empty() {
        return Err(DimError::EmptyDeltaList);
    }
    if !deltas.iter().all(|d| d.is_finite() && *d > 0.0) || !deltas.windows(2).all(|w| w[0] > w[1]) {
        return Err(DimError::InvalidDeltas);
    }
    let radii = farthest_point_radii(space);
    let counts: Vec<usize> = deltas.iter().map(|&d| cover_count(&radii, d)).collect();
    let (slope, intercept, r_squared) = if deltas.len() >= 2 {
        let x: Vec<f64> = deltas.iter().map(|d| -d.ln()).collect();
        let y: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
        let fit = ols(&x, &y);
        (Some(fit.slope), Some(fit.intercept), Some(fit.r_squared))
    } else {
        (None, None, None)
    };
    Ok(BoxDimEstimate {
        deltas: deltas.to_vec(),
        counts,
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimComparison {
    pub ph_dim: f64,
    pub box_dim: f64,
    pub abs_difference: f64,
    pub ph: DimensionEstimate,
    pub boxes: BoxDimEstimate,
}

/// Runs both estimators on the same cloud; `deltas = None` uses [`default_deltas`].
pub fn compare_dims<P: Pairwise + ?Sized>(
    space: &P,
    cfg: &PhDimConfig,
    deltas: Option<&[f64]>,
) -> Result<DimComparison, DimError> {
    let ph = estimate_ph_dim(space, cfg)?;
    let ph_dim = ph.value()?;
    let deltas = match deltas {
        Some(d) => d.to_vec(),
        None => default_deltas(space.diameter(), space.n_pts()),
    };
    let boxes = estimate_box_dim(space, &deltas, CoverStrategy::GreedyFarthest)?;
    let box_dim = boxes.slope.ok_or(DimError::EmptyDeltaList)?;
    Ok(DimComparison {
        ph_dim,
        box_dim,
        abs_difference: (ph_dim - box_dim).abs(),
        ph,
        boxes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub fraction: f64,
    pub dim: f64,
    /// `|dim - dim_full| / dim_full` against the estimate on every sample.
    pub relative_error: f64,
}

/// PH dimension under the loss metric restricted to a random `fraction` of
/// the samples, for each fraction, compared with the full-sample estimate.
/// Every estimate shares the subsampling schedule of `cfg`; the sample
/// subsets are drawn from `cfg.seed`.
pub fn robustness_curve(
    losses: &LossMatrix,
    fractions: &[f64],
    cfg: &PhDimConfig,
) -> Result<(f64, Vec<RobustnessRow>), DimError> {
    let full = distance_matrix_from_losses(losses, &MetricSpec::loss_pseudo())?;
    let full_dim = estimate_ph_dim(&full, cfg)?.value()?;
    drop(full);
    let rows = fractions
        .iter()
        .map(|&fraction| {
            let dm = distance_matrix_from_losses(losses, &MetricSpec::subsampled_fraction(fraction, cfg.seed))?;
            let dim = estimate_ph_dim(&dm, cfg)?.value()?;
            Ok(RobustnessRow {
                fraction,
                dim,
                relative_error: (dim - full_dim).abs() / full_dim.abs(),
            })
        })
        .collect::<Result<_, DimError>>()?;
    Ok((full_dim, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_io::{DenseMatrix, DistanceMatrix};
    use crate::metric::EuclideanCloud;
    use crate::synth::{generate, FractalKind, FractalSpec};

    #[test]
    fn ols_exact_line() {
        let fit = ols(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]);
        assert_eq!(fit.slope, 2.0);
        assert_eq!(fit.intercept, 1.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn default_schedule() {
        let s = default_sizes(5000);
        assert_eq!(s.len(), 20);
        assert_eq!((s[0], s[19]), (1000, 5000));
        let s = default_sizes(6);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!((s[0], *s.last().unwrap()), (2, 6));
    }

    #[test]
    fn identical_points_have_zero_lifetimes() {
        let d = DistanceMatrix::new(50, vec![0.0; 50 * 49 / 2]).unwrap();
        assert_eq!(
            estimate_ph_dim(&d, &PhDimConfig::new(1)),
            Err(DimError::ZeroLifetimes { surviving: 0 })
        );
    }

    #[test]
    fn argument_validation() {
        let pts = generate(&FractalSpec {
            kind: FractalKind::UniformCube { dim: 2 },
            n_points: 40,
            seed: 1,
        })
        .unwrap();
        let cloud = EuclideanCloud::new(&pts);
        let mut cfg = PhDimConfig::new(0);
        cfg.alpha = 0.0;
        assert_eq!(estimate_ph_dim(&cloud, &cfg), Err(DimError::InvalidAlpha(0.0)));
        cfg.alpha = 1.0;
        cfg.trials = 0;
        assert_eq!(estimate_ph_dim(&cloud, &cfg), Err(DimError::NoTrials));
        cfg.trials = 1;
        for bad in [vec![5, 10, 50], vec![1, 10, 20], vec![10, 10, 20], vec![10, 20]] {
            cfg.sizes = Some(bad);
            assert!(matches!(estimate_ph_dim(&cloud, &cfg), Err(DimError::SizesOutOfRange(_))));
        }
        let small = DenseMatrix::zeros(3, 1);
        assert_eq!(
            estimate_ph_dim(&EuclideanCloud::new(&small), &PhDimConfig::new(0)),
            Err(DimError::TooFewPoints(3))
        );
    }

    #[test]
    fn mostly_duplicated_cloud_drops_zero_sizes() {
        // two distinct locations, heavily duplicated: small subsets often see one location only
        let mut rows = vec![vec![0.0]; 60];
        rows[0] = vec![1.0];
        let pts = DenseMatrix::from_rows(&rows).unwrap();
        let mut cfg = PhDimConfig::new(3);
        cfg.sizes = Some(vec![2, 3, 4]);
        cfg.trials = 1;
        let err = estimate_ph_dim(&EuclideanCloud::new(&pts), &cfg).unwrap_err();
        assert!(matches!(err, DimError::ZeroLifetimes { .. }));
    }

    #[test]
    fn line_segment_has_dimension_one() {
        let pts = generate(&FractalSpec {
            kind: FractalKind::UniformCube { dim: 1 },
            n_points: 4096,
            seed: 11,
        })
        .unwrap();
        let mut cfg = PhDimConfig::new(4);
        cfg.sizes = Some((1..=8).map(|k| 512 * k).collect());
        cfg.trials = 10;
        let est = estimate_ph_dim(&EuclideanCloud::new(&pts), &cfg).unwrap();
        assert!((0.85..=1.15).contains(&est.dimension), "{}", est.dimension);
    }

    #[test]
    fn unit_square_has_dimension_two() {
        let pts = generate(&FractalSpec {
            kind: FractalKind::UniformCube { dim: 2 },
            n_points: 4096,
            seed: 12,
        })
        .unwrap();
        let mut cfg = PhDimConfig::new(5);
        cfg.sizes = Some((1..=8).map(|k| 512 * k).collect());
        cfg.trials = 10;
        let est = estimate_ph_dim(&EuclideanCloud::new(&pts), &cfg).unwrap();
        assert!((1.75..=2.25).contains(&est.dimension), "{}", est.dimension);
    }

    #[test]
    fn slope_above_one_is_flagged() {
        let est = DimensionEstimate {
            alpha: 1.0,
            sizes: vec![],
            trials_per_size: 1,
            log_e_records: vec![],
            slope: 1.2,
            intercept: 0.0,
            dimension: f64::INFINITY,
            valid: false,
            r_squared: 1.0,
            seed: 0,
        };
        assert_eq!(est.value(), Err(DimError::SlopeAtLeastOne { slope: 1.2 }));
    }

    #[test]
    fn box_counts_basic() {
        let two = DistanceMatrix::new(2, vec![1.0]).unwrap();
        let est = estimate_box_dim(&two, &[0.4], CoverStrategy::GreedyFarthest).unwrap();
        assert_eq!(est.counts, vec![2]);
        assert_eq!(est.slope, None);
        let est = estimate_box_dim(&two, &[1.0, 0.5], CoverStrategy::GreedyFarthest).unwrap();
        assert_eq!(est.counts, vec![1, 2]);
        assert_eq!(
            estimate_box_dim(&two, &[], CoverStrategy::GreedyFarthest),
            Err(DimError::EmptyDeltaList)
        );
        assert_eq!(
            estimate_box_dim(&two, &[0.1, 0.2], CoverStrategy::GreedyFarthest),
            Err(DimError::InvalidDeltas)
        );
    }

    #[test]
    fn diameter_scale_covers_with_one_ball() {
        let pts = generate(&FractalSpec {
            kind: FractalKind::SierpinskiTriangle,
            n_points: 300,
            seed: 2,
        })
        .unwrap();
        let cloud = EuclideanCloud::new(&pts);
        let diam = cloud.diameter();
        let est = estimate_box_dim(&cloud, &[2.0 * diam, diam], CoverStrategy::GreedyFarthest).unwrap();
        assert_eq!(est.counts, vec![1, 1]);
    }

    #[test]
    fn cantor_endpoints_cover_exactly() {
        let pts = crate::synth::cantor_lattice(9, 1024, 0).unwrap();
        let deltas: Vec<f64> = (1..=5).map(|k| 3f64.powi(9 - k)).collect();
        let est = estimate_box_dim(&EuclideanCloud::new(&pts), &deltas, CoverStrategy::GreedyFarthest).unwrap();
        assert_eq!(est.counts, vec![2, 4, 8, 16, 32]);
        let slope = est.slope.unwrap();
        assert!((slope - 2f64.ln() / 3f64.ln()).abs() < 1e-9, "{slope}");
    }

    #[test]
    fn radii_are_nonincreasing() {
        let pts = generate(&FractalSpec {
            kind: FractalKind::UniformCube { dim: 3 },
            n_points: 200,
            seed: 8,
        })
        .unwrap();
        let radii = farthest_point_radii(&EuclideanCloud::new(&pts));
        assert!(radii.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(*radii.last().unwrap(), 0.0);
        assert_eq!(radii.len(), 200);
    }

    #[test]
    fn compare_degenerate_cloud() {
        let d = DistanceMatrix::new(10, vec![0.0; 45]).unwrap();
        assert!(matches!(
            compare_dims(&d, &PhDimConfig::new(0), None),
            Err(DimError::ZeroLifetimes { .. })
        ));
    }
}
