//! Rank correlations between dimension estimates and generalization gaps.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooFewPoints(usize),
    #[error("ranks have zero variance")]
    ZeroVariance,
    #[error("observations must be finite")]
    NonFinite,
    #[error("no slice along {0} has 2 or more usable records")]
    NoValidSlices(&'static str),
}

/// Which dimension column of a grid run to correlate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimSource {
    Euclid,
    RhoS,
}

/// One grid cell reduced to what the statistics need.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub gen_gap: Option<f64>,
    pub dim: Option<f64>,
    pub failed: bool,
}

impl GridRecord {
    /// `(gen_gap, dim)` for records that may enter the statistics.
    pub fn observation(&self) -> Option<(f64, f64)> {
        match (self.failed, self.gen_gap, self.dim) {
            (false, Some(g), Some(d)) if g.is_finite() && d.is_finite() => Some((g, d)),
            _ => None,
        }
    }
}

fn check_pair(g: &[f64], d: &[f64]) -> Result<(), StatsError> {
    if g.len() != d.len() {
        return Err(StatsError::LengthMismatch(g.len(), d.len()));
    }
    if g.len() < 2 {
        return Err(StatsError::TooFewPoints(g.len()));
    }
    if g.iter().chain(d).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Adding 0.0 folds -0.0 into 0.0 so `total_cmp` agrees with `==`.
fn key(x: f64) -> f64 {
    x + 0.0
}

fn tied_pairs(sorted: &[f64]) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` (stable) and returns the number of strict inversions removed.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-a: `sum_{i<j} sign(g_i - g_j) sign(d_i - d_j) / C(n, 2)`.
///
/// Tied pairs contribute 0. Runs in `O(n log n)` via Knight's merge-sort count.
pub fn kendall_tau(g: &[f64], d: &[f64]) -> Result<f64, StatsError> {
    check_pair(g, d)?;
    let n = g.len() as i64;
    let mut pairs: Vec<(f64, f64)> = g.iter().zip(d).map(|(&a, &b)| (key(a), key(b))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = n * (n - 1) / 2;
    let gs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&gs);
    let mut n3 = 0i64;
    let mut run = 1i64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut ds: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ds.len());
    let swaps = merge_count(&mut ds, &mut buf);
    let n2 = tied_pairs(&ds);
    let s = n0 - n1 - n2 + n3 - 2 * swaps;
    Ok(s as f64 / n0 as f64)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| key(x[a]).total_cmp(&key(x[b])));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        order[start..end].iter().for_each(|&i| ranks[i] = avg);
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of the average ranks.
pub fn spearman_rho(g: &[f64], d: &[f64]) -> Result<f64, StatsError> {
    check_pair(g, d)?;
    let (rg, rd) = (average_ranks(g), average_ranks(d));
    let n = g.len() as f64;
    let (mg, md) = (rg.iter().sum::<f64>() / n, rd.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rg.iter().zip(&rd) {
        sxy += (a - mg) * (b - md);
        sxx += (a - mg) * (a - mg);
        syy += (b - md) * (b - md);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GranulatedKendall {
    /// Mean over batch sizes of tau taken along the learning-rate axis.
    pub psi_lr: f64,
    /// Mean over learning rates of tau taken along the batch-size axis.
    pub psi_bs: f64,
    #[serde(rename = "Psi")]
    pub psi: f64,
    /// Slices dropped for having fewer than 2 usable records.
    pub skipped_slices: usize,
}

/// Mean tau over slices grouped by `slice_key`, plus the number of skipped slices.
fn axis_psi<K: Ord>(records: &[&GridRecord], slice_key: impl Fn(&GridRecord) -> K) -> (Option<f64>, usize) {
    let mut slices: BTreeMap<K, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let entry = slices.entry(slice_key(r)).or_default();
        if let Some((g, d)) = r.observation() {
            entry.0.push(g);
            entry.1.push(d);
        }
    }
    let mut taus = Vec::new();
    let mut skipped = 0;
    for (g, d) in slices.values() {
        match kendall_tau(g, d) {
            Ok(t) => taus.push(t),
            Err(_) => skipped += 1,
        }
    }
    let mean = (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64);
    (mean, skipped)
}

/// Granulated Kendall coefficients over a (possibly incomplete) lr x batch-size grid.
pub fn granulated_kendall(records: &[GridRecord]) -> Result<GranulatedKendall, StatsError> {
    let refs: Vec<&GridRecord> = records.iter().collect();
    granulated_refs(&refs)
}

fn granulated_refs(records: &[&GridRecord]) -> Result<GranulatedKendall, StatsError> {
    // learning rates are positive, so their bit patterns sort numerically
    let (psi_lr, skip_lr) = axis_psi(records, |r| r.batch_size);
    let (psi_bs, skip_bs) = axis_psi(records, |r| key(r.lr).to_bits());
    let psi_lr = psi_lr.ok_or(StatsError::NoValidSlices("learning rate"))?;
    let psi_bs = psi_bs.ok_or(StatsError::NoValidSlices("batch size"))?;
    Ok(GranulatedKendall {
        psi_lr,
        psi_bs,
        psi: (psi_lr + psi_bs) / 2.0,
        skipped_slices: skip_lr + skip_bs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedCorrelation {
    pub seed: u64,
    pub n_records: usize,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub psi_lr: Option<f64>,
    pub psi_bs: Option<f64>,
    #[serde(rename = "Psi")]
    pub psi: Option<f64>,
    pub skipped_slices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSpread {
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub psi_lr: Option<f64>,
    pub psi_bs: Option<f64>,
    #[serde(rename = "Psi")]
    pub psi: Option<f64>,
}

/// Statistics computed per seed, then averaged; `std` holds the sample
/// standard deviation across seeds (0 with a single seed).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub rho: Option<f64>,
    pub psi_lr: Option<f64>,
    pub psi_bs: Option<f64>,
    #[serde(rename = "Psi")]
    pub psi: Option<f64>,
    pub tau: Option<f64>,
    pub std: CorrelationSpread,
    pub per_seed: Vec<SeedCorrelation>,
    pub skipped_slices: usize,
    pub failed_records: usize,
}

fn mean_std(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

pub fn correlation_report(records: &[GridRecord]) -> CorrelationReport {
    let mut by_seed: BTreeMap<u64, Vec<&GridRecord>> = BTreeMap::new();
    for r in records {
        by_seed.entry(r.seed).or_default().push(r);
    }
    let per_seed: Vec<SeedCorrelation> = by_seed
        .into_iter()
        .map(|(seed, recs)| {
            let (g, d): (Vec<f64>, Vec<f64>) = recs.iter().filter_map(|r| r.observation()).unzip();
            let gran = granulated_refs(&recs).ok();
            SeedCorrelation {
                seed,
                n_records: g.len(),
                tau: kendall_tau(&g, &d).ok(),
                rho: spearman_rho(&g, &d).ok(),
                psi_lr: gran.as_ref().map(|k| k.psi_lr),
                psi_bs: gran.as_ref().map(|k| k.psi_bs),
                psi: gran.as_ref().map(|k| k.psi),
                skipped_slices: gran.as_ref().map_or(0, |k| k.skipped_slices),
            }
        })
        .collect();
    let (tau, tau_sd) = mean_std(per_seed.iter().map(|s| s.tau));
    let (rho, rho_sd) = mean_std(per_seed.iter().map(|s| s.rho));
    let (psi_lr, psi_lr_sd) = mean_std(per_seed.iter().map(|s| s.psi_lr));
    let (psi_bs, psi_bs_sd) = mean_std(per_seed.iter().map(|s| s.psi_bs));
    let (psi, psi_sd) = mean_std(per_seed.iter().map(|s| s.psi));
    CorrelationReport {
        rho,
        psi_lr,
        psi_bs,
        psi,
        tau,
        std: CorrelationSpread {
            tau: tau_sd,
            rho: rho_sd,
            psi_lr: psi_lr_sd,
            psi_bs: psi_bs_sd,
            psi: psi_sd,
        },
        skipped_slices: per_seed.iter().map(|s| s.skipped_slices).sum(),
        failed_records: records.iter().filter(|r| r.observation().is_none()).count(),
        per_seed,
    }
}
