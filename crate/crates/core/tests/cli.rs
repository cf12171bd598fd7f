use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phdim::bounds::{computable_bound, BoundInputs};
use phdim::matrix_io::{load_matrix_auto, save_matrix, DenseMatrix, Format};

fn phdim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phdim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn synth_writes_matrix_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["synth", "--kind", "cantor_line", "--depth", "10", "--n", "1024", "--seed", "7", "-o", "c.fdm"];
    ok(&phdim(&args, dir.path()));
    let m = load_matrix_auto(&dir.path().join("c.fdm")).unwrap();
    assert_eq!((m.rows(), m.cols()), (1024, 1));
    let first = fs::read(dir.path().join("c.fdm")).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("c.fdm.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "synth");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["spec"]["n_points"], 1024);

    ok(&phdim(&args, dir.path()));
    assert_eq!(fs::read(dir.path().join("c.fdm")).unwrap(), first);
}

#[test]
fn missing_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = phdim(&["synth", "--depth", "3", "--n", "4", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn two_row_loss_matrix_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = DenseMatrix::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
    save_matrix(&m, &dir.path().join("l.csv"), Format::Csv).unwrap();
    let out = phdim(&["dim", "l.csv", "--metric", "rho-s", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn degenerate_cloud_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let m = DenseMatrix::new(50, 2, vec![1.0; 100]).unwrap();
    save_matrix(&m, &dir.path().join("same.fdm"), Format::Binary).unwrap();
    let out = phdim(&["dim", "same.fdm", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn diverging_training_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = phdim(
        &[
            "train", "--toy", "regression", "--toy-n", "100", "--hidden", "4", "--lr", "1e9", "--batch-size", "10",
            "--stop", "fixed", "--max-iterations", "50", "--tail", "10", "--seed", "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    ok(&phdim(
        &["synth", "--kind", "sierpinski_triangle", "--n", "800", "--seed", "2", "-o", "s.csv"],
        dir.path(),
    ));
    let one = ok(&phdim(&["--threads", "1", "dim", "s.csv", "--seed", "9"], dir.path()));
    let two = ok(&phdim(&["--threads", "2", "dim", "s.csv", "--seed", "9"], dir.path()));
    assert_eq!(one, two);
    let est: serde_json::Value = serde_json::from_str(&one).unwrap();
    assert_eq!(est["valid"], true);
}

#[test]
fn precomputed_matches_euclidean() {
    let dir = tempfile::tempdir().unwrap();
    ok(&phdim(&["synth", "--kind", "uniform_cube", "--dim", "3", "--n", "60", "--seed", "4", "-o", "u.fdm"], dir.path()));
    ok(&phdim(&["dist", "u.fdm", "-o", "d.fdm"], dir.path()));
    let direct = ok(&phdim(&["ph0", "u.fdm"], dir.path()));
    let via = ok(&phdim(&["ph0", "d.fdm", "--metric", "precomputed"], dir.path()));
    assert_eq!(direct, via);
    assert_eq!(direct.lines().count(), 59);
}

#[test]
fn rho_t_needs_fraction_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let m = DenseMatrix::new(5, 4, (0..20).map(|v| v as f64 / 20.0).collect()).unwrap();
    save_matrix(&m, &dir.path().join("l.fdm"), Format::Binary).unwrap();
    assert_eq!(phdim(&["dist", "l.fdm", "--metric", "rho-t", "--seed", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(phdim(&["dist", "l.fdm", "--metric", "rho-t", "--fraction", "0.5"], dir.path()).status.code(), Some(2));
    ok(&phdim(&["dist", "l.fdm", "--metric", "rho-t", "--fraction", "0.5", "--seed", "1"], dir.path()));
}

const MIXED_GRID: &str = "lr,batch_size,seed,status,gen_gap,gen_gap_sup,dim_euclid,dim_rho_s,train_risk,test_risk
0.1,1,0,ok,0.0,0.0,1.0,0.0,0.1,0.1
0.2,1,0,ok,1.0,1.0,1.0,10.0,0.1,1.1
0.1,2,0,ok,2.0,2.0,1.0,-10.0,0.1,2.1
0.2,2,0,ok,3.0,3.0,1.0,0.0,0.1,3.1
";

#[test]
fn corr_on_mixed_grid_reports_zero_psi() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.csv"), MIXED_GRID).unwrap();
    let report: serde_json::Value = serde_json::from_str(&ok(&phdim(&["corr", "g.csv"], dir.path()))).unwrap();
    assert_eq!(report["Psi"], 0.0);
    assert_eq!(report["psi_lr"], 1.0);
    assert_eq!(report["psi_bs"], -1.0);
    assert_eq!(report["skipped_slices"], 0);
}

#[test]
fn bound_takes_b_from_loss_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.csv"), MIXED_GRID).unwrap();
    fs::create_dir(dir.path().join("losses")).unwrap();
    let a = DenseMatrix::new(2, 2, vec![0.5, 2.5, 0.1, 0.0]).unwrap();
    let b = DenseMatrix::new(2, 2, vec![1.5, 0.5, 0.1, 0.0]).unwrap();
    save_matrix(&a, &dir.path().join("losses/a.fdm"), Format::Binary).unwrap();
    save_matrix(&b, &dir.path().join("losses/b.fdm"), Format::Binary).unwrap();
    // dimensions must be non-negative, so use the euclid column (all 1.0)
    let csv = ok(&phdim(
        &["bound", "g.csv", "--dim", "euclid", "--b-from-data", "--losses", "losses", "--n", "100"],
        dir.path(),
    ));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("gen_gap,bound"));
    let expected = computable_bound(&BoundInputs {
        dim: 1.0,
        n: 100,
        b: 2.5,
        delta: 0.01,
        eta: 0.1,
    })
    .unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let bound: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(bound, expected);
    }
    let out = phdim(&["bound", "g.csv", "--n", "100"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn robustness_emits_one_row_per_fraction() {
    let dir = tempfile::tempdir().unwrap();
    ok(&phdim(
        &[
            "train", "--toy", "regression", "--toy-n", "200", "--hidden", "8", "--lr", "0.05", "--batch-size", "16",
            "--stop", "fixed", "--max-iterations", "300", "--tail", "150", "--seed", "3", "-o", "l.fdm",
        ],
        dir.path(),
    ));
    let csv = ok(&phdim(
        &["robustness", "l.fdm", "--fractions", "0.02,0.1,0.4,0.99", "--seed", "5", "--trials", "2"],
        dir.path(),
    ));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "fraction,dim,relative_error");
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("0.4,"));
}

#[test]
fn grid_accepts_json_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("grid.json"),
        r#"{"learning_rates": [0.01, 0.05], "batch_sizes": [8], "seeds": [1]}"#,
    )
    .unwrap();
    let csv = ok(&phdim(
        &[
            "grid", "--config", "grid.json", "--toy", "regression", "--toy-n", "120", "--hidden", "4", "--stop", "fixed",
            "--max-iterations", "200", "--tail", "60", "--trials", "2", "-o", "g.csv", "--save-losses", "losses",
        ],
        dir.path(),
    ));
    assert!(csv.is_empty());
    let text = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lr,batch_size,seed,status,gen_gap,gen_gap_sup,dim_euclid,dim_rho_s,train_risk,test_risk");
    assert_eq!(lines.len(), 3);
    assert_eq!(fs::read_dir(dir.path().join("losses")).unwrap().count(), 2);
    assert!(dir.path().join("g.csv.manifest.json").exists());
}
