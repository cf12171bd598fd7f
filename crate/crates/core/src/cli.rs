//! The `phdim` command line. `main.rs` only forwards to [`run_main`].
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numeric failure
//! (diverged training, degenerate lifetimes, undefined dimension fit).

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::bounds::{b_from_losses, bound_table, write_bound_csv, InvalidInputs};
use crate::dimest::{
    compare_dims, default_deltas, estimate_box_dim, estimate_ph_dim, robustness_curve, CoverStrategy, DimError,
    PhDimConfig, DEFAULT_ALPHA, DEFAULT_TRIALS,
};
use crate::matrix_io::{self, DenseMatrix, DistanceMatrix, Format, LossMatrix, MatrixError};
use crate::metric::{distance_matrix_euclidean, distance_matrix_from_losses, EuclideanCloud, MetricError, MetricSpec, Pairwise};
use crate::ph0::{persistence0, Ph0Error};
use crate::stats::{correlation_report, DimSource, GridRecord};
use crate::synth::{generate, FractalKind, FractalSpec, InvalidSpec};
use crate::trainer::{
    read_grid_csv, run_grid, toy_classification, toy_regression, train, write_grid_csv, Dataset, GridOptions, GridSpec,
    StopRule, Task, TrainConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

macro_rules! usage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Usage(e.to_string())
            }
        }
    )*};
}

usage_from!(MatrixError, MetricError, Ph0Error, InvalidSpec, InvalidInputs, io::Error, serde_json::Error, csv::Error);

impl From<DimError> for CliError {
    fn from(e: DimError) -> Self {
        match e {
            DimError::ZeroLifetimes { .. } | DimError::SlopeAtLeastOne { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::DivergedLoss { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "phdim", version, about = "Persistent-homology fractal dimension of training trajectories")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a point cloud with known dimension.
    Synth(SynthArgs),
    /// Full pairwise distance matrix.
    Dist(DistArgs),
    /// Degree-0 persistence deaths, one per line.
    Ph0(Ph0Args),
    /// PH dimension estimate as JSON.
    Dim(DimArgs),
    /// Box-counting dimension estimate as JSON.
    BoxDim(BoxDimArgs),
    /// PH and box-counting estimates side by side.
    CompareDims(CompareArgs),
    /// Train a small MLP and record its tail losses.
    Train(TrainArgs),
    /// Train over a learning-rate x batch-size x seed grid.
    Grid(GridArgs),
    /// Rank correlations between dimension and generalization gap.
    Corr(CorrArgs),
    /// Computable bound for each grid run.
    Bound(BoundArgs),
    /// Dimension under the loss metric on random sample fractions.
    Robustness(RobustnessArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum KindArg {
    #[value(name = "cantor_line")]
    CantorLine,
    #[value(name = "cantor_dust_2d")]
    CantorDust2d,
    #[value(name = "sierpinski_triangle")]
    SierpinskiTriangle,
    #[value(name = "uniform_cube")]
    UniformCube,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Construction depth for the Cantor kinds.
    #[arg(long)]
    depth: Option<u32>,
    /// Ambient dimension for uniform_cube.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Output matrix (`.csv` for CSV, anything else for binary); stdout CSV if absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MetricArg {
    /// Rows are points in Euclidean space.
    Euclid,
    /// Rows are hypotheses, columns per-sample losses.
    RhoS,
    /// Like rho-s on a random fraction of the columns.
    RhoT,
    /// The input already is a square distance matrix.
    Precomputed,
}

#[derive(Args, Debug, Serialize)]
struct MetricArgs {
    #[arg(long, value_enum, default_value = "euclid")]
    metric: MetricArg,
    /// Fraction of samples kept by rho-t, in (0, 1].
    #[arg(long)]
    fraction: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct DistArgs {
    input: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct Ph0Args {
    input: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EstimatorArgs {
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Subset sizes, comma separated; defaults to 20 sizes from n/5 to n.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
}

impl EstimatorArgs {
    fn config(&self, seed: u64) -> PhDimConfig {
        PhDimConfig {
            alpha: self.alpha,
            sizes: self.sizes.clone(),
            trials: self.trials,
            seed,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct DimArgs {
    input: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long)]
    seed: u64,
    /// JSON estimate; stdout if absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write `size,log_size,mean_log_e` rows here.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BoxDimArgs {
    input: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// Strictly decreasing scales, comma separated; a default ladder otherwise.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    input: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum ToyArg {
    Regression,
    Classification,
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Feature matrix, one sample per row.
    #[arg(long, requires = "targets", conflicts_with = "toy")]
    features: Option<PathBuf>,
    /// Target matrix; class indices in one column for classification.
    #[arg(long, requires = "features")]
    targets: Option<PathBuf>,
    /// Built-in synthetic dataset instead of files.
    #[arg(long, value_enum)]
    toy: Option<ToyArg>,
    #[arg(long, default_value_t = 1000)]
    toy_n: usize,
    #[arg(long, default_value_t = 4)]
    toy_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    toy_noise: f64,
    #[arg(long, default_value_t = 3)]
    toy_classes: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        match (&self.features, &self.targets, self.toy) {
            (Some(f), Some(t), None) => Ok(Dataset {
                features: matrix_io::load_matrix_auto(f)?,
                targets: matrix_io::load_matrix_auto(t)?,
            }),
            (None, None, Some(ToyArg::Regression)) => {
                Ok(toy_regression(self.toy_n, self.toy_dim, self.toy_noise, self.data_seed))
            }
            (None, None, Some(ToyArg::Classification)) => Ok(toy_classification(
                self.toy_n,
                self.toy_dim,
                self.toy_classes,
                self.toy_noise.max(f64::MIN_POSITIVE),
                self.data_seed,
            )),
            _ => Err(usage("give either --features and --targets, or --toy")),
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.features.iter().chain(&self.targets).cloned().collect()
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum TaskArg {
    #[value(name = "regression_mse")]
    RegressionMse,
    #[value(name = "classification_crossentropy")]
    ClassificationCrossentropy,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum StopArg {
    Fixed,
    Relative,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    /// Hidden layer widths; input and output widths come from the data.
    #[arg(long, value_delimiter = ',', default_value = "32,32")]
    hidden: Vec<usize>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    /// Iterates recorded after the stop rule fires.
    #[arg(long, default_value_t = TrainConfig::DEFAULT_TAIL)]
    tail: usize,
    #[arg(long, value_enum, default_value = "relative")]
    stop: StopArg,
    /// Relative risk change that ends training (relative stop rule).
    #[arg(long, default_value_t = 0.005)]
    threshold: f64,
    #[arg(long, default_value_t = 2000)]
    check_period: usize,
    /// Held-out share of the dataset.
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
}

impl ModelArgs {
    fn task(&self, data: &DataArgs) -> Task {
        match (self.task, data.toy) {
            (Some(TaskArg::RegressionMse), _) => Task::RegressionMse,
            (Some(TaskArg::ClassificationCrossentropy), _) => Task::ClassificationCrossentropy,
            (None, Some(ToyArg::Classification)) => Task::ClassificationCrossentropy,
            (None, _) => Task::RegressionMse,
        }
    }

    fn base_config(&self, data_args: &DataArgs, data: &Dataset, seed: u64) -> Result<TrainConfig> {
        let task = self.task(data_args);
        let out = match task {
            Task::ClassificationCrossentropy if data.targets.cols() == 1 => {
                let max = data.targets.max_value();
                if !(max >= 0.0) {
                    return Err(usage("class labels must be non-negative integers"));
                }
                max as usize + 1
            }
            _ => data.targets.cols(),
        };
        let mut widths = vec![data.features.cols()];
        widths.extend(self.hidden.iter().copied().filter(|&w| w > 0));
        widths.push(out);
        Ok(TrainConfig {
            layer_widths: widths,
            task,
            max_iterations: self.max_iterations,
            tail_length: self.tail,
            stop_rule: match self.stop {
                StopArg::Fixed => StopRule::FixedIterations,
                StopArg::Relative => StopRule::RelativeLossChange {
                    threshold: self.threshold,
                    check_period: self.check_period,
                },
            },
            record_params: true,
            ..TrainConfig::regression(Vec::new(), seed)
        })
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    lr: f64,
    #[arg(long)]
    batch_size: usize,
    #[arg(long)]
    seed: u64,
    /// Tail loss matrix (iterates x training samples).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Tail iterates (iterates x parameters).
    #[arg(long)]
    params_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct GridArgs {
    /// JSON document {"learning_rates": [...], "batch_sizes": [...], "seeds": [...]}.
    #[arg(long, conflicts_with_all = ["lrs", "batch_sizes", "seeds"])]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    lrs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Estimate the loss dimension on this fraction of the samples (rho-t).
    #[arg(long)]
    fraction: Option<f64>,
    /// Grid CSV; stdout if absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Directory for each run's tail loss matrix.
    #[arg(long)]
    save_losses: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DimColumn {
    Euclid,
    RhoS,
}

impl From<DimColumn> for DimSource {
    fn from(c: DimColumn) -> Self {
        match c {
            DimColumn::Euclid => DimSource::Euclid,
            DimColumn::RhoS => DimSource::RhoS,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct CorrArgs {
    /// Grid CSV.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rho-s")]
    dim: DimColumn,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BoundArgs {
    /// Grid CSV.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rho-s")]
    dim: DimColumn,
    /// Loss bound B.
    #[arg(long, required_unless_present = "b_from_data", conflicts_with = "b_from_data")]
    b: Option<f64>,
    /// Take B as the largest loss in the `--losses` matrices.
    #[arg(long, requires = "losses")]
    b_from_data: bool,
    /// Loss matrices or directories of them.
    #[arg(long, num_args = 1.., requires = "b_from_data")]
    losses: Vec<PathBuf>,
    /// Number of training samples.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RobustnessArgs {
    /// Loss matrix (iterates x samples).
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.1,0.2,0.4,0.7,0.99")]
    fractions: Vec<f64>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: &'a C,
    argv: &'a [String],
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
}

struct Ctx {
    argv: Vec<String>,
    threads: Option<usize>,
}

impl Ctx {
    /// Writes `<first output>.manifest.json` when there is any output file.
    fn manifest<C: Serialize>(
        &self,
        subcommand: &'static str,
        config: &C,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        seed: Option<u64>,
    ) -> Result<()> {
        let Some(first) = outputs.first() else {
            return Ok(());
        };
        let mut path = first.clone().into_os_string();
        path.push(".manifest.json");
        let doc = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config,
            argv: &self.argv,
            inputs,
            outputs: outputs.clone(),
            seed,
            threads: self.threads,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(PathBuf::from(path), text)?;
        Ok(())
    }
}

fn write_out(output: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(p) => fs::write(p, bytes).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(output: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_out(output, text.as_bytes())
}

fn write_matrix(output: Option<&Path>, m: &DenseMatrix) -> Result<()> {
    match output {
        Some(p) => Ok(matrix_io::save_matrix(m, p, Format::from_path(p))?),
        None => {
            let mut buf = Vec::new();
            matrix_io::write_csv(m, &mut buf)?;
            write_out(None, &buf)
        }
    }
}

/// Input rows together with whatever the metric needs to compare them.
struct Space {
    points: DenseMatrix,
    matrix: Option<DistanceMatrix>,
}

impl Space {
    fn load(input: &Path, metric: &MetricArgs, seed: Option<u64>) -> Result<Self> {
        let points = matrix_io::load_matrix_auto(input)?;
        if metric.fraction.is_some() && metric.metric != MetricArg::RhoT {
            return Err(usage("--fraction only applies to --metric rho-t"));
        }
        let matrix = match metric.metric {
            MetricArg::Euclid => None,
            MetricArg::Precomputed => Some(DistanceMatrix::from_square(&points)?),
            MetricArg::RhoS => Some(distance_matrix_from_losses(
                &LossMatrix::new(points.clone())?,
                &MetricSpec::loss_pseudo(),
            )?),
            MetricArg::RhoT => {
                let fraction = metric.fraction.ok_or_else(|| usage("--metric rho-t needs --fraction"))?;
                let seed = seed.ok_or_else(|| usage("--metric rho-t needs --seed"))?;
                Some(distance_matrix_from_losses(
                    &LossMatrix::new(points.clone())?,
                    &MetricSpec::subsampled_fraction(fraction, seed),
                )?)
            }
        };
        Ok(Self { points, matrix })
    }

    fn with<R>(&self, f: impl FnOnce(&dyn Pairwise) -> R) -> R {
        match &self.matrix {
            Some(dm) => f(dm),
            None => f(&EuclideanCloud::new(&self.points)),
        }
    }

    fn into_distance_matrix(self) -> Result<DistanceMatrix> {
        match self.matrix {
            Some(dm) => Ok(dm),
            None => Ok(distance_matrix_euclidean(&self.points)?),
        }
    }
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let need_depth = || a.depth.ok_or_else(|| usage("this kind needs --depth"));
    let kind = match a.kind {
        KindArg::CantorLine => FractalKind::CantorLine { depth: need_depth()? },
        KindArg::CantorDust2d => FractalKind::CantorDust2d { depth: need_depth()? },
        KindArg::SierpinskiTriangle => FractalKind::SierpinskiTriangle,
        KindArg::UniformCube => FractalKind::UniformCube {
            dim: a.dim.ok_or_else(|| usage("uniform_cube needs --dim"))?,
        },
    };
    let spec = FractalSpec {
        kind,
        n_points: a.n,
        seed: a.seed,
    };
    let m = generate(&spec)?;
    write_matrix(a.output.as_deref(), &m)?;
    ctx.manifest("synth", &json!({"args": a, "spec": spec}), vec![], a.output.iter().cloned().collect(), Some(a.seed))
}

fn cmd_dist(ctx: &Ctx, a: &DistArgs) -> Result<()> {
    let dm = Space::load(&a.input, &a.metric, a.seed)?.into_distance_matrix()?;
    write_matrix(a.output.as_deref(), &dm.to_square())?;
    ctx.manifest("dist", a, vec![a.input.clone()], a.output.iter().cloned().collect(), a.seed)
}

fn cmd_ph0(ctx: &Ctx, a: &Ph0Args) -> Result<()> {
    let space = Space::load(&a.input, &a.metric, a.seed)?;
    let pd = space.with(|s| persistence0(s))?;
    let mut buf = Vec::new();
    pd.write_csv(&mut buf)?;
    write_out(a.output.as_deref(), &buf)?;
    ctx.manifest("ph0", a, vec![a.input.clone()], a.output.iter().cloned().collect(), a.seed)
}

fn cmd_dim(ctx: &Ctx, a: &DimArgs) -> Result<()> {
    let space = Space::load(&a.input, &a.metric, Some(a.seed))?;
    let cfg = a.estimator.config(a.seed);
    let est = space.with(|s| estimate_ph_dim(s, &cfg))?;
    if !est.valid {
        eprintln!("warning: fitted slope {} >= 1, the dimension is undefined", est.slope);
    }
    write_json(a.output.as_deref(), &est)?;
    if let Some(p) = &a.records {
        let mut buf = Vec::new();
        est.write_records_csv(&mut buf)?;
        write_out(Some(p), &buf)?;
    }
    let outputs = a.output.iter().chain(&a.records).cloned().collect();
    ctx.manifest("dim", &json!({"args": a, "estimator": cfg}), vec![a.input.clone()], outputs, Some(a.seed))
}

fn cmd_box_dim(ctx: &Ctx, a: &BoxDimArgs) -> Result<()> {
    let space = Space::load(&a.input, &a.metric, a.seed)?;
    let deltas = match &a.deltas {
        Some(d) => d.clone(),
        None => space.with(|s| default_deltas(s.diameter(), s.n_pts())),
    };
    let est = space.with(|s| estimate_box_dim(s, &deltas, CoverStrategy::GreedyFarthest))?;
    write_json(a.output.as_deref(), &est)?;
    ctx.manifest("box-dim", &json!({"args": a, "deltas": deltas}), vec![a.input.clone()], a.output.iter().cloned().collect(), a.seed)
}

fn cmd_compare(ctx: &Ctx, a: &CompareArgs) -> Result<()> {
    let space = Space::load(&a.input, &a.metric, Some(a.seed))?;
    let cfg = a.estimator.config(a.seed);
    let cmp = space.with(|s| compare_dims(s, &cfg, a.deltas.as_deref()))?;
    write_json(a.output.as_deref(), &cmp)?;
    ctx.manifest("compare-dims", &json!({"args": a, "estimator": cfg}), vec![a.input.clone()], a.output.iter().cloned().collect(), Some(a.seed))
}

#[derive(Serialize)]
struct TrainSummary {
    train_risk: f64,
    test_risk: f64,
    gen_gap: f64,
    gen_gap_sup: f64,
    iterations_before_tail: usize,
    n_train: usize,
    n_test: usize,
    max_loss: f64,
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let data = a.data.load()?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        ..a.model.base_config(&a.data, &data, a.seed)?
    };
    let traj = train(&cfg, &data, a.model.holdout)?;
    if let Some(p) = &a.output {
        write_matrix(Some(p), traj.losses.matrix())?;
    }
    if let (Some(p), Some(params)) = (&a.params_out, &traj.params) {
        write_matrix(Some(p), params)?;
    }
    write_json(
        None,
        &TrainSummary {
            train_risk: traj.train_risk,
            test_risk: traj.test_risk,
            gen_gap: traj.gen_gap,
            gen_gap_sup: traj.gen_gap_sup,
            iterations_before_tail: traj.iterations_before_tail,
            n_train: traj.train_rows.len(),
            n_test: traj.test_rows.len(),
            max_loss: traj.losses.max_loss(),
        },
    )?;
    let outputs = a.output.iter().chain(&a.params_out).cloned().collect();
    ctx.manifest("train", &json!({"args": a, "estimator": cfg}), a.data.inputs(), outputs, Some(a.seed))
}

fn cmd_grid(ctx: &Ctx, a: &GridArgs) -> Result<()> {
    let grid = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<GridSpec>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => GridSpec {
            learning_rates: a.lrs.clone().ok_or_else(|| usage("grid needs --lrs or --config"))?,
            batch_sizes: a.batch_sizes.clone().ok_or_else(|| usage("grid needs --batch-sizes or --config"))?,
            seeds: a.seeds.clone().ok_or_else(|| usage("grid needs --seeds or --config"))?,
        },
    };
    if grid.learning_rates.is_empty() || grid.batch_sizes.is_empty() || grid.seeds.is_empty() {
        return Err(usage("every grid axis needs at least one value"));
    }
    let data = a.data.load()?;
    let base = a.model.base_config(&a.data, &data, 0)?;
    base.validate()?;
    let opts = GridOptions {
        holdout_fraction: a.model.holdout,
        alpha: a.estimator.alpha,
        trials: a.estimator.trials,
        sizes: a.estimator.sizes.clone(),
        loss_metric: match a.fraction {
            Some(f) => MetricSpec::subsampled_fraction(f, 0),
            None => MetricSpec::loss_pseudo(),
        },
    };
    let runs = run_grid(&base, &data, &grid, &opts, a.save_losses.is_some());
    for r in runs.iter().filter(|r| r.failure.is_some()) {
        eprintln!(
            "warning: lr={} batch_size={} seed={} failed: {}",
            r.lr,
            r.batch_size,
            r.seed,
            r.failure.as_deref().unwrap_or_default()
        );
    }
    let mut outputs: Vec<PathBuf> = a.output.iter().cloned().collect();
    if let Some(dir) = &a.save_losses {
        fs::create_dir_all(dir)?;
        for r in &runs {
            if let Some(l) = &r.losses {
                let p = dir.join(format!("lr{}_bs{}_seed{}.fdm", r.lr, r.batch_size, r.seed));
                matrix_io::save_matrix(l.matrix(), &p, Format::Binary)?;
                outputs.push(p);
            }
        }
    }
    let mut buf = Vec::new();
    write_grid_csv(&runs, &mut buf)?;
    write_out(a.output.as_deref(), &buf)?;
    ctx.manifest("grid", &json!({"args": a, "grid": grid, "train": base, "estimator": opts}), a.data.inputs(), outputs, None)
}

fn load_grid(path: &Path, dim: DimColumn) -> Result<Vec<GridRecord>> {
    let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let runs = read_grid_csv(file).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(runs.iter().map(|r| r.record(dim.into())).collect())
}

fn cmd_corr(ctx: &Ctx, a: &CorrArgs) -> Result<()> {
    let records = load_grid(&a.input, a.dim)?;
    let report = correlation_report(&records);
    write_json(a.output.as_deref(), &report)?;
    ctx.manifest("corr", a, vec![a.input.clone()], a.output.iter().cloned().collect(), None)
}

/// Expands directories into their matrix files, sorted by name.
fn loss_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && !f.to_string_lossy().ends_with(".manifest.json"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn cmd_bound(ctx: &Ctx, a: &BoundArgs) -> Result<()> {
    let records = load_grid(&a.input, a.dim)?;
    let mut inputs = vec![a.input.clone()];
    let b = if a.b_from_data {
        let files = loss_files(&a.losses)?;
        let mut mats = Vec::with_capacity(files.len());
        for f in &files {
            mats.push(LossMatrix::new(matrix_io::load_matrix_auto(f)?)?);
        }
        inputs.extend(files);
        b_from_losses(&mats).ok_or_else(|| usage("--b-from-data found no loss matrices"))?
    } else {
        a.b.expect("clap enforces --b or --b-from-data")
    };
    eprintln!("B = {b}");
    let rows = bound_table(&records, b, a.delta, a.eta, a.n)?;
    let mut buf = Vec::new();
    write_bound_csv(&rows, &mut buf)?;
    write_out(a.output.as_deref(), &buf)?;
    ctx.manifest("bound", &json!({"args": a, "b": b}), inputs, a.output.iter().cloned().collect(), None)
}

fn cmd_robustness(ctx: &Ctx, a: &RobustnessArgs) -> Result<()> {
    let losses = LossMatrix::new(matrix_io::load_matrix_auto(&a.input)?)?;
    let cfg = a.estimator.config(a.seed);
    let (full, rows) = robustness_curve(&losses, &a.fractions, &cfg)?;
    eprintln!("full-sample dimension = {full}");
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let buf = w.into_inner().map_err(|e| usage(e.to_string()))?;
    let buf = if rows.is_empty() { b"fraction,dim,relative_error\n".to_vec() } else { buf };
    write_out(a.output.as_deref(), &buf)?;
    ctx.manifest("robustness", &json!({"args": a, "estimator": cfg}), vec![a.input.clone()], a.output.iter().cloned().collect(), Some(a.seed))
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let ctx = Ctx {
        argv,
        threads: cli.threads,
    };
    match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Dist(a) => cmd_dist(&ctx, a),
        Command::Ph0(a) => cmd_ph0(&ctx, a),
        Command::Dim(a) => cmd_dim(&ctx, a),
        Command::BoxDim(a) => cmd_box_dim(&ctx, a),
        Command::CompareDims(a) => cmd_compare(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Grid(a) => cmd_grid(&ctx, a),
        Command::Corr(a) => cmd_corr(&ctx, a),
        Command::Bound(a) => cmd_bound(&ctx, a),
        Command::Robustness(a) => cmd_robustness(&ctx, a),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
