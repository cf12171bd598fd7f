//! Hyperparameter grid: one training run per (learning rate, batch size, seed)
//! cell, each followed by the two dimension estimates.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Dataset, TrainConfig};
use crate::dimest::{estimate_ph_dim, PhDimConfig};
use crate::matrix_io::LossMatrix;
use crate::metric::{distance_matrix_from_losses, EuclideanCloud, MetricSpec};
use crate::stats::{DimSource, GridRecord};

pub const GRID_CSV_HEADER: &str = "lr,batch_size,seed,status,gen_gap,gen_gap_sup,dim_euclid,dim_rho_s,train_risk,test_risk";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl GridSpec {
    /// Cells in output order: learning rate outermost, seed innermost.
    pub fn cells(&self) -> Vec<(f64, usize, u64)> {
        let mut out = Vec::with_capacity(self.learning_rates.len() * self.batch_sizes.len() * self.seeds.len());
        for &lr in &self.learning_rates {
            for &bs in &self.batch_sizes {
                for &seed in &self.seeds {
                    out.push((lr, bs, seed));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub holdout_fraction: f64,
    pub alpha: f64,
    pub trials: usize,
    pub sizes: Option<Vec<usize>>,
    /// Loss-based metric for the data-dependent dimension. A fraction-based
    /// subset is redrawn per run from that run's seed.
    pub loss_metric: MetricSpec,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.2,
            alpha: crate::dimest::DEFAULT_ALPHA,
            trials: crate::dimest::DEFAULT_TRIALS,
            sizes: None,
            loss_metric: MetricSpec::loss_pseudo(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub status: RunStatus,
    /// Why the cell failed, when it did.
    pub failure: Option<String>,
    pub gen_gap: Option<f64>,
    pub gen_gap_sup: Option<f64>,
    pub dim_euclid: Option<f64>,
    pub dim_rho_s: Option<f64>,
    pub train_risk: Option<f64>,
    pub test_risk: Option<f64>,
    /// Tail losses, kept when requested.
    pub losses: Option<LossMatrix>,
}

impl GridRun {
    fn failed(lr: f64, batch_size: usize, seed: u64, why: String) -> Self {
        Self {
            lr,
            batch_size,
            seed,
            status: RunStatus::Failed,
            failure: Some(why),
            gen_gap: None,
            gen_gap_sup: None,
            dim_euclid: None,
            dim_rho_s: None,
            train_risk: None,
            test_risk: None,
            losses: None,
        }
    }

    pub fn record(&self, source: DimSource) -> GridRecord {
        GridRecord {
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            gen_gap: self.gen_gap,
            dim: match source {
                DimSource::Euclid => self.dim_euclid,
                DimSource::RhoS => self.dim_rho_s,
            },
            failed: self.status == RunStatus::Failed,
        }
    }
}

fn run_cell(
    base: &TrainConfig,
    data: &Dataset,
    opts: &GridOptions,
    (lr, batch_size, seed): (f64, usize, u64),
    keep_losses: bool,
) -> GridRun {
    let cfg = TrainConfig {
        learning_rate: lr,
        batch_size,
        seed,
        record_params: true,
        ..base.clone()
    };
    let traj = match train(&cfg, data, opts.holdout_fraction) {
        Ok(t) => t,
        Err(e) => return GridRun::failed(lr, batch_size, seed, e.to_string()),
    };
    let dim_cfg = PhDimConfig {
        alpha: opts.alpha,
        sizes: opts.sizes.clone(),
        trials: opts.trials,
        seed,
    };
    let mut failure = None;
    let mut note = |what: &str, e: String| {
        failure.get_or_insert_with(|| format!("{what}: {e}"));
        None
    };
    let params = traj.params.as_ref().expect("params were recorded");
    let dim_euclid = match estimate_ph_dim(&EuclideanCloud::new(params), &dim_cfg).and_then(|d| d.value()) {
        Ok(d) => Some(d),
        Err(e) => note("euclidean dimension", e.to_string()),
    };
    let mut loss_metric = opts.loss_metric.clone();
    if loss_metric.fraction.is_some() {
        loss_metric.seed = Some(seed);
    }
    let dim_rho_s = match distance_matrix_from_losses(&traj.losses, &loss_metric) {
        Ok(dm) => match estimate_ph_dim(&dm, &dim_cfg).and_then(|d| d.value()) {
            Ok(d) => Some(d),
            Err(e) => note("loss dimension", e.to_string()),
        },
        Err(e) => note("loss metric", e.to_string()),
    };
    GridRun {
        lr,
        batch_size,
        seed,
        status: if failure.is_some() { RunStatus::Failed } else { RunStatus::Ok },
        failure,
        gen_gap: Some(traj.gen_gap),
        gen_gap_sup: Some(traj.gen_gap_sup),
        dim_euclid,
        dim_rho_s,
        train_risk: Some(traj.train_risk),
        test_risk: Some(traj.test_risk),
        losses: keep_losses.then_some(traj.losses),
    }
}

/// Runs every cell (in parallel) and returns them in [`GridSpec::cells`] order.
///
/// A failing cell never aborts the grid; it comes back with
/// [`RunStatus::Failed`] and whatever values were computed before the failure.
pub fn run_grid(
    base: &TrainConfig,
    data: &Dataset,
    grid: &GridSpec,
    opts: &GridOptions,
    keep_losses: bool,
) -> Vec<GridRun> {
    grid.cells()
        .into_par_iter()
        .map(|cell| run_cell(base, data, opts, cell, keep_losses))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    lr: f64,
    batch_size: usize,
    seed: u64,
    status: RunStatus,
    gen_gap: Option<f64>,
    gen_gap_sup: Option<f64>,
    dim_euclid: Option<f64>,
    dim_rho_s: Option<f64>,
    train_risk: Option<f64>,
    test_risk: Option<f64>,
}

pub fn write_grid_csv<W: Write>(runs: &[GridRun], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in runs {
        out.serialize(GridRow {
            lr: r.lr,
            batch_size: r.batch_size,
            seed: r.seed,
            status: r.status,
            gen_gap: r.gen_gap,
            gen_gap_sup: r.gen_gap_sup,
            dim_euclid: r.dim_euclid,
            dim_rho_s: r.dim_rho_s,
            train_risk: r.train_risk,
            test_risk: r.test_risk,
        })?;
    }
    if runs.is_empty() {
        out.write_record(GRID_CSV_HEADER.split(','))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a grid CSV back; the header must match [`GRID_CSV_HEADER`] exactly.
pub fn read_grid_csv<R: Read>(r: R) -> Result<Vec<GridRun>, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| e.to_string())?;
    let found: Vec<&str> = header.iter().collect();
    if found.join(",") != GRID_CSV_HEADER {
        return Err(format!("grid header mismatch: expected `{GRID_CSV_HEADER}`, found `{}`", found.join(",")));
    }
    rdr.deserialize::<GridRow>()
        .map(|row| {
            let row = row.map_err(|e| e.to_string())?;
            Ok(GridRun {
                lr: row.lr,
                batch_size: row.batch_size,
                seed: row.seed,
                status: row.status,
                failure: None,
                gen_gap: row.gen_gap,
                gen_gap_sup: row.gen_gap_sup,
                dim_euclid: row.dim_euclid,
                dim_rho_s: row.dim_rho_s,
                train_risk: row.train_risk,
                test_risk: row.test_risk,
                losses: None,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{toy_regression, StopRule};

    fn tiny_base() -> TrainConfig {
        TrainConfig {
            max_iterations: 100,
            tail_length: 40,
            stop_rule: StopRule::FixedIterations,
            ..TrainConfig::regression(vec![3, 4, 1], 0)
        }
    }

    #[test]
    fn grid_order_and_csv_round_trip() {
        let data = toy_regression(80, 3, 0.1, 1);
        let grid = GridSpec {
            learning_rates: vec![0.01, 0.05],
            batch_sizes: vec![4, 16],
            seeds: vec![0],
        };
        let opts = GridOptions {
            trials: 2,
            ..GridOptions::default()
        };
        let runs = run_grid(&tiny_base(), &data, &grid, &opts, false);
        let order: Vec<(f64, usize)> = runs.iter().map(|r| (r.lr, r.batch_size)).collect();
        assert_eq!(order, vec![(0.01, 4), (0.01, 16), (0.05, 4), (0.05, 16)]);

        let mut buf = Vec::new();
        write_grid_csv(&runs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), GRID_CSV_HEADER);
        let back = read_grid_csv(&buf[..]).unwrap();
        for (a, b) in runs.iter().zip(&back) {
            assert_eq!((a.lr, a.batch_size, a.seed, a.status), (b.lr, b.batch_size, b.seed, b.status));
            assert_eq!(a.gen_gap, b.gen_gap);
            assert_eq!(a.dim_rho_s, b.dim_rho_s);
        }
    }

    #[test]
    fn divergent_cells_are_flagged_not_fatal() {
        let data = toy_regression(60, 3, 0.1, 2);
        let grid = GridSpec {
            learning_rates: vec![0.01, 1e6],
            batch_sizes: vec![4],
            seeds: vec![1],
        };
        let opts = GridOptions {
            trials: 2,
            ..GridOptions::default()
        };
        let runs = run_grid(&tiny_base(), &data, &grid, &opts, false);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].status, RunStatus::Failed);
        assert!(runs[1].failure.as_deref().unwrap().contains("non-finite"));
        let mut buf = Vec::new();
        write_grid_csv(&runs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("1000000.0,4,1,failed,,"));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_grid_csv("lr,bs\n0.1,2\n".as_bytes()).is_err());
    }
}
