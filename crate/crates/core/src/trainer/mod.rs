//! SGD trajectory capture.
//!
//! Training runs plain constant-step SGD until the stop rule fires, then keeps
//! going for `tail_length` more steps. After each tail step the loss of the
//! current iterate is evaluated on every training sample, which yields the
//! `tail_length x n_train` loss table the pseudo-metric is built from.

mod grid;
mod mlp;

pub use grid::{read_grid_csv, run_grid, write_grid_csv, GridOptions, GridRun, GridSpec, RunStatus, GRID_CSV_HEADER};
pub use mlp::{Mlp, Task, Workspace};

use serde::Serialize;
use thiserror::Error;

use crate::matrix_io::{DenseMatrix, LossMatrix};
use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("loss became non-finite at iteration {iteration}")]
    DivergedLoss { iteration: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    /// Exactly `max_iterations` steps before the tail.
    FixedIterations,
    /// Every `check_period` steps evaluate the full training risk and stop once
    /// it changed by less than `threshold` relative to the previous check.
    /// `max_iterations` still caps the run.
    RelativeLossChange { threshold: f64, check_period: usize },
}

impl StopRule {
    /// 0.5% relative change, checked every 2000 iterations.
    pub fn default_relative() -> Self {
        StopRule::RelativeLossChange {
            threshold: 0.005,
            check_period: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub task: Task,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub tail_length: usize,
    pub stop_rule: StopRule,
    pub seed: u64,
    /// Keep the flattened parameters of every tail iterate.
    pub record_params: bool,
}

impl TrainConfig {
    pub const DEFAULT_TAIL: usize = 2000;

    /// Defaults for a regression run with the given widths.
    pub fn regression(layer_widths: Vec<usize>, seed: u64) -> Self {
        Self {
            layer_widths,
            activation: Activation::Relu,
            task: Task::RegressionMse,
            learning_rate: 0.01,
            batch_size: 32,
            max_iterations: 100_000,
            tail_length: Self::DEFAULT_TAIL,
            stop_rule: StopRule::default_relative(),
            seed,
            record_params: true,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.layer_widths.len() < 2 || self.layer_widths.contains(&0) {
            return bad(format!("layer widths {:?} need >= 2 positive entries", self.layer_widths));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if self.tail_length < 2 {
            return bad(format!("tail length must be >= 2, got {}", self.tail_length));
        }
        if let StopRule::RelativeLossChange { threshold, check_period } = self.stop_rule {
            if !(threshold > 0.0) || check_period == 0 {
                return bad("relative stop rule needs threshold > 0 and check_period >= 1".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    /// Regression: one column per output. Classification: one column of class
    /// indices, or one column per class holding a target distribution.
    pub targets: DenseMatrix,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `tail_length x n_train` per-sample losses.
    pub losses: LossMatrix,
    /// `tail_length x n_params` iterates, when recorded.
    pub params: Option<DenseMatrix>,
    pub train_risk: f64,
    pub test_risk: f64,
    /// `test_risk - train_risk` at the final iterate.
    pub gen_gap: f64,
    /// Largest gap over the recorded tail iterates.
    pub gen_gap_sup: f64,
    /// SGD steps taken before the tail started.
    pub iterations_before_tail: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Targets expanded to one column per network output.
fn dense_targets(net: &Mlp, data: &Dataset) -> Result<DenseMatrix, TrainError> {
    let out = net.output_dim();
    let t = &data.targets;
    if t.rows() != data.features.rows() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} feature rows but {} target rows",
            data.features.rows(),
            t.rows()
        )));
    }
    if data.features.cols() != net.input_dim() {
        return Err(TrainError::ShapeMismatch(format!(
            "features have {} columns, network expects {}",
            data.features.cols(),
            net.input_dim()
        )));
    }
    match net.task() {
        Task::ClassificationCrossentropy if t.cols() == 1 && out > 1 => {
            let mut dense = Vec::with_capacity(t.rows() * out);
            for (r, row) in t.row_iter().enumerate() {
                let c = row[0];
                if c.fract() != 0.0 || c < 0.0 || c as usize >= out {
                    return Err(TrainError::ShapeMismatch(format!(
                        "row {r}: class label {c} is not an integer in 0..{out}"
                    )));
                }
                dense.extend((0..out).map(|k| if k == c as usize { 1.0 } else { 0.0 }));
            }
            Ok(DenseMatrix::new(t.rows(), out, dense).expect("one-hot targets are finite"))
        }
        _ if t.cols() == out => Ok(t.clone()),
        _ => Err(TrainError::ShapeMismatch(format!(
            "targets have {} columns, network has {out} outputs",
            t.cols()
        ))),
    }
}

/// Seeded split into sorted (train, test) row lists.
pub fn holdout_split(n: usize, holdout_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(TrainError::InvalidConfig(format!(
            "holdout fraction must be in (0, 1), got {holdout_fraction}"
        )));
    }
    let n_test = ((n as f64 * holdout_fraction).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 2 || n_test == 0 {
        return Err(TrainError::ShapeMismatch(format!("cannot split {n} samples")));
    }
    let mut rng = SplitMix64::derive(seed, 0x7e57, 0);
    let test = rng.sample_sorted(n, n_test);
    let mut is_test = vec![false; n];
    test.iter().for_each(|&i| is_test[i] = true);
    let train = (0..n).filter(|&i| !is_test[i]).collect();
    Ok((train, test))
}

struct Evaluator<'a> {
    net: &'a Mlp,
    features: &'a DenseMatrix,
    targets: &'a DenseMatrix,
}

impl Evaluator<'_> {
    fn losses_into(&self, params: &[f64], rows: &[usize], out: &mut Vec<f64>, ws: &mut Workspace) {
        out.clear();
        out.extend(
            rows.iter()
                .map(|&r| self.net.sample_loss(params, self.features.row(r), self.targets.row(r), ws)),
        );
    }

    fn risk(&self, params: &[f64], rows: &[usize], ws: &mut Workspace) -> f64 {
        rows.iter()
            .map(|&r| self.net.sample_loss(params, self.features.row(r), self.targets.row(r), ws))
            .sum::<f64>()
            / rows.len() as f64
    }
}

/// Iterates minibatches over the training rows, reshuffling each epoch.
struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    rng: SplitMix64,
}

impl BatchStream {
    fn new(rows: &[usize], seed: u64) -> Self {
        let mut rng = SplitMix64::derive(seed, 0xba7c, 0);
        let mut order = rows.to_vec();
        rng.shuffle(&mut order);
        Self { order, pos: 0, rng }
    }

    fn next(&mut self, size: usize) -> &[usize] {
        if self.pos + size > self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let batch = &self.order[self.pos..self.pos + size];
        self.pos += size;
        batch
    }
}

pub fn train(cfg: &TrainConfig, data: &Dataset, holdout_fraction: f64) -> Result<Trajectory, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::ShapeMismatch("dataset is empty".into()));
    }
    let net = Mlp::new(cfg.layer_widths.clone(), cfg.task);
    let targets = dense_targets(&net, data)?;
    let (train_rows, test_rows) = holdout_split(data.len(), holdout_fraction, cfg.seed)?;
    if cfg.batch_size > train_rows.len() {
        return Err(TrainError::InvalidConfig(format!(
            "batch size {} exceeds {} training samples",
            cfg.batch_size,
            train_rows.len()
        )));
    }

    let eval = Evaluator {
        net: &net,
        features: &data.features,
        targets: &targets,
    };
    let mut ws = net.workspace();
    let mut params = net.init_params(&mut SplitMix64::derive(cfg.seed, 0x1417, 0));
    let mut grad = vec![0.0; params.len()];
    let mut batches = BatchStream::new(&train_rows, cfg.seed);
    let mut iteration = 0usize;

    let mut step = |params: &mut Vec<f64>, iteration: usize, ws: &mut Workspace| -> Result<(), TrainError> {
        let batch = batches.next(cfg.batch_size);
        let loss = net.loss_and_grad(params, &data.features, &targets, batch, &mut grad, ws);
        if !loss.is_finite() {
            return Err(TrainError::DivergedLoss { iteration });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::DivergedLoss { iteration });
        }
        Ok(())
    };

    let mut last_check: Option<f64> = None;
    while iteration < cfg.max_iterations {
        step(&mut params, iteration, &mut ws)?;
        iteration += 1;
        if let StopRule::RelativeLossChange { threshold, check_period } = cfg.stop_rule {
            if iteration % check_period == 0 {
                let risk = eval.risk(&params, &train_rows, &mut ws);
                if !risk.is_finite() {
                    return Err(TrainError::DivergedLoss { iteration });
                }
                if let Some(prev) = last_check {
                    if (prev - risk).abs() <= threshold * prev.abs() {
                        break;
                    }
                }
                last_check = Some(risk);
            }
        }
    }
    let iterations_before_tail = iteration;

    let n_train = train_rows.len();
    let mut losses = Vec::with_capacity(cfg.tail_length * n_train);
    let mut param_rows = cfg.record_params.then(|| Vec::with_capacity(cfg.tail_length * params.len()));
    let mut row = Vec::with_capacity(n_train);
    let (mut train_risk, mut test_risk) = (f64::NAN, f64::NAN);
    let mut gen_gap_sup = f64::NEG_INFINITY;
    for _ in 0..cfg.tail_length {
        step(&mut params, iteration, &mut ws)?;
        eval.losses_into(&params, &train_rows, &mut row, &mut ws);
        if row.iter().any(|l| !l.is_finite()) {
            return Err(TrainError::DivergedLoss { iteration });
        }
        iteration += 1;
        train_risk = row.iter().sum::<f64>() / n_train as f64;
        test_risk = eval.risk(&params, &test_rows, &mut ws);
        if !test_risk.is_finite() {
            return Err(TrainError::DivergedLoss { iteration });
        }
        gen_gap_sup = gen_gap_sup.max(test_risk - train_risk);
        losses.extend_from_slice(&row);
        if let Some(p) = param_rows.as_mut() {
            p.extend_from_slice(&params);
        }
    }

    let losses = LossMatrix::new(DenseMatrix::new(cfg.tail_length, n_train, losses).expect("finite losses"))
        .expect("tail_length >= 2");
    let params = param_rows.map(|p| DenseMatrix::new(cfg.tail_length, net.n_params(), p).expect("finite params"));
    Ok(Trajectory {
        losses,
        params,
        train_risk,
        test_risk,
        gen_gap: test_risk - train_risk,
        gen_gap_sup,
        iterations_before_tail,
        train_rows,
        test_rows,
    })
}

/// Smooth nonlinear regression target with Gaussian noise.
///
/// `x ~ U[-1, 1]^dim`, `y = sin(pi <u, x>) + 0.5 <v, x>^2 + noise * N(0, 1)`
/// with `u`, `v` fixed unit-scale directions drawn from the seed.
pub fn toy_regression(n: usize, dim: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = SplitMix64::derive(seed, 0xda7a, 0);
    let scale = 1.0 / (dim as f64).sqrt();
    let u: Vec<f64> = (0..dim).map(|_| rng.normal() * scale).collect();
    let v: Vec<f64> = (0..dim).map(|_| rng.normal() * scale).collect();
    let mut x = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let a: f64 = row.iter().zip(&u).map(|(p, q)| p * q).sum();
        let b: f64 = row.iter().zip(&v).map(|(p, q)| p * q).sum();
        y.push((std::f64::consts::PI * a).sin() + 0.5 * b * b + noise * rng.normal());
        x.extend(row);
    }
    Dataset {
        features: DenseMatrix::new(n, dim, x).expect("finite"),
        targets: DenseMatrix::new(n, 1, y).expect("finite"),
    }
}

/// Gaussian blobs, one per class, with class labels in a single column.
pub fn toy_classification(n: usize, dim: usize, classes: usize, spread: f64, seed: u64) -> Dataset {
    let mut rng = SplitMix64::derive(seed, 0xc1a5, 0);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect())
        .collect();
    let mut x = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        x.extend(centers[c].iter().map(|m| m + spread * rng.normal()));
        y.push(c as f64);
    }
    Dataset {
        features: DenseMatrix::new(n, dim, x).expect("finite"),
        targets: DenseMatrix::new(n, 1, y).expect("finite"),
    }
}
