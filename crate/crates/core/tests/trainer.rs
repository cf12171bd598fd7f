mod common;

use phdim::trainer::{run_grid, toy_regression, GridOptions, GridSpec, RunStatus, StopRule, TrainConfig};

#[test]
fn backprop_matches_finite_differences() {
    for seed in 100..120 {
        let err = common::gradient_check(seed);
        assert!(err <= 1e-4, "seed {seed}: relative error {err:e}");
    }
}

fn base() -> TrainConfig {
    TrainConfig {
        max_iterations: 200,
        tail_length: 50,
        stop_rule: StopRule::FixedIterations,
        ..TrainConfig::regression(vec![3, 6, 1], 0)
    }
}

fn opts() -> GridOptions {
    GridOptions {
        trials: 2,
        ..GridOptions::default()
    }
}

#[test]
fn single_cell_grid() {
    let data = toy_regression(100, 3, 0.1, 1);
    let grid = GridSpec {
        learning_rates: vec![0.02],
        batch_sizes: vec![8],
        seeds: vec![4],
    };
    let runs = run_grid(&base(), &data, &grid, &opts(), true);
    assert_eq!(runs.len(), 1);
    let r = &runs[0];
    assert_eq!(r.status, RunStatus::Ok, "{:?}", r.failure);
    assert!(r.dim_euclid.unwrap().is_finite() && r.dim_rho_s.unwrap().is_finite());
    assert_eq!(r.gen_gap.unwrap(), r.test_risk.unwrap() - r.train_risk.unwrap());
    assert_eq!(r.losses.as_ref().unwrap().n_hypotheses(), 50);
}

#[test]
fn one_diverging_cell_in_two_by_two() {
    let data = toy_regression(100, 3, 0.1, 2);
    let grid = GridSpec {
        learning_rates: vec![0.02, 1e8],
        batch_sizes: vec![80, 8],
        seeds: vec![0],
    };
    let runs = run_grid(&base(), &data, &grid, &opts(), false);
    assert_eq!(runs.len(), 4);
    let failed: Vec<_> = runs.iter().filter(|r| r.status == RunStatus::Failed).collect();
    assert!(failed.iter().all(|r| r.lr == 1e8));
    assert!(!failed.is_empty());
    for r in runs.iter().filter(|r| r.lr == 0.02) {
        assert_eq!(r.status, RunStatus::Ok, "{:?}", r.failure);
    }
}

#[test]
fn grid_is_deterministic() {
    let data = toy_regression(80, 3, 0.1, 3);
    let grid = GridSpec {
        learning_rates: vec![0.01, 0.03],
        batch_sizes: vec![8],
        seeds: vec![1, 2],
    };
    let a = run_grid(&base(), &data, &grid, &opts(), false);
    let b = run_grid(&base(), &data, &grid, &opts(), false);
    assert_eq!(a, b);
}
