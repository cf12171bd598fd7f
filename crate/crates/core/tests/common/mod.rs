#![allow(dead_code)]

pub mod oracles;

use phdim::matrix_io::DistanceMatrix;
use phdim::rng::SplitMix64;

/// Random symmetric matrix on `n` points, cycling through three textures by
/// `case`: integer L1 lattice points with duplicates (ties and zero blocks),
/// arbitrary small integer weights, and tie-free uniform floats.
pub fn random_pseudo_matrix(rng: &mut SplitMix64, n: usize, case: usize) -> DistanceMatrix {
    match case % 3 {
        0 => {
            let pts: Vec<(i64, i64)> = (0..n).map(|_| (rng.below(3) as i64, rng.below(3) as i64)).collect();
            DistanceMatrix::from_fn(n, |i, j| ((pts[i].0 - pts[j].0).abs() + (pts[i].1 - pts[j].1).abs()) as f64)
                .unwrap()
        }
        1 => {
            let w: Vec<f64> = (0..n * n).map(|_| rng.below(4) as f64).collect();
            DistanceMatrix::from_fn(n, |i, j| w[i * n + j]).unwrap()
        }
        _ => {
            let w: Vec<f64> = (0..n * n).map(|_| rng.next_f64()).collect();
            DistanceMatrix::from_fn(n, |i, j| w[i * n + j]).unwrap()
        }
    }
}

/// Random planar cloud as a distance matrix.
pub fn random_cloud(rng: &mut SplitMix64, n: usize) -> DistanceMatrix {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.next_f64(), rng.next_f64())).collect();
    DistanceMatrix::from_fn(n, |i, j| (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1)).unwrap()
}

/// Random `(g, d)` observations; `ties` draws from a handful of values.
pub fn random_observations(rng: &mut SplitMix64, n: usize, ties: bool) -> (Vec<f64>, Vec<f64>) {
    let draw = |rng: &mut SplitMix64| if ties { rng.below(5) as f64 } else { rng.normal() };
    let g = (0..n).map(|_| draw(rng)).collect();
    let d = (0..n).map(|_| draw(rng)).collect();
    (g, d)
}

/// Worst norm-relative error between backprop and central differences
/// (step 1e-5) over one random small net, batch and task.
pub fn gradient_check(seed: u64) -> f64 {
    use phdim::matrix_io::DenseMatrix;
    use phdim::trainer::{Mlp, Task};

    let mut rng = SplitMix64::new(seed);
    let mut widths = vec![1 + rng.below(4) as usize];
    for _ in 0..rng.below(3) {
        widths.push(1 + rng.below(6) as usize);
    }
    let out = 1 + rng.below(3) as usize;
    widths.push(out);
    let task = if rng.below(2) == 0 { Task::RegressionMse } else { Task::ClassificationCrossentropy };
    let net = Mlp::new(widths.clone(), task);
    let params: Vec<f64> = (0..net.n_params()).map(|_| rng.normal()).collect();

    let rows = 2 + rng.below(4) as usize;
    let x = DenseMatrix::new(rows, widths[0], (0..rows * widths[0]).map(|_| rng.normal()).collect()).unwrap();
    let t: Vec<f64> = match task {
        Task::RegressionMse => (0..rows * out).map(|_| rng.normal()).collect(),
        Task::ClassificationCrossentropy => (0..rows)
            .flat_map(|_| {
                let c = rng.below(out as u64) as usize;
                (0..out).map(move |k| if k == c { 1.0 } else { 0.0 })
            })
            .collect(),
    };
    let t = DenseMatrix::new(rows, out, t).unwrap();
    let idx: Vec<usize> = (0..rows).collect();

    let mut ws = net.workspace();
    let mut analytic = vec![0.0; net.n_params()];
    net.loss_and_grad(&params, &x, &t, &idx, &mut analytic, &mut ws);

    let h = 1e-5;
    let mut scratch = vec![0.0; net.n_params()];
    let mut p = params.clone();
    let numeric: Vec<f64> = (0..params.len())
        .map(|k| {
            p[k] = params[k] + h;
            let up = net.loss_and_grad(&p, &x, &t, &idx, &mut scratch, &mut ws);
            p[k] = params[k] - h;
            let down = net.loss_and_grad(&p, &x, &t, &idx, &mut scratch, &mut ws);
            p[k] = params[k];
            (up - down) / (2.0 * h)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
