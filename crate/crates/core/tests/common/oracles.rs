//! Brute-force references for the fast paths. Small inputs only.

use phdim::matrix_io::DistanceMatrix;

#[derive(Debug, PartialEq)]
pub struct TooLarge(pub usize);

pub const MST_LIMIT: usize = 8;
pub const COVER_LIMIT: usize = 12;

/// Edge list of the labelled tree encoded by a Prüfer sequence.
fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Sorted edge weights of a minimum spanning tree, found by enumerating all
/// `n^(n-2)` labelled trees.
pub fn brute_mst(d: &DistanceMatrix) -> Result<Vec<f64>, TooLarge> {
    let n = d.n_pts();
    if n > MST_LIMIT {
        return Err(TooLarge(n));
    }
    match n {
        0 | 1 => return Ok(Vec::new()),
        2 => return Ok(vec![d.get(0, 1)]),
        _ => {}
    }
    let mut seq = vec![0usize; n - 2];
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        let mut w: Vec<f64> = prufer_edges(&seq, n).iter().map(|&(a, b)| d.get(a, b)).collect();
        w.sort_by(f64::total_cmp);
        let total: f64 = w.iter().sum();
        if best.as_ref().is_none_or(|(t, _)| total < *t) {
            best = Some((total, w));
        }
        // odometer increment over {0..n}^(n-2)
        let mut i = 0;
        while i < seq.len() {
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
        if i == seq.len() {
            break;
        }
    }
    Ok(best.unwrap().1)
}

/// `sum_{i<j} sign(g_i - g_j) sign(d_i - d_j) / C(n, 2)`, literally.
pub fn brute_kendall(g: &[f64], d: &[f64]) -> f64 {
    assert_eq!(g.len(), d.len());
    let n = g.len();
    let sign = |x: f64| {
        if x > 0.0 {
            1i64
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += sign(g[i] - g[j]) * sign(d[i] - d[j]);
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

/// Smallest number of closed `delta`-balls centred at data points covering
/// every point, by exhaustive search over center subsets.
pub fn brute_cover(d: &DistanceMatrix, delta: f64) -> Result<usize, TooLarge> {
    let n = d.n_pts();
    if n > COVER_LIMIT {
        return Err(TooLarge(n));
    }
    if n == 0 {
        return Ok(0);
    }
    let reach: Vec<u32> = (0..n)
        .map(|c| (0..n).filter(|&p| p == c || d.get(c, p) <= delta).fold(0u32, |m, p| m | (1 << p)))
        .collect();
    let full = (1u32 << n) - 1;
    let mut best = n;
    for centers in 1u32..=full {
        let k = centers.count_ones() as usize;
        if k >= best {
            continue;
        }
        let covered = (0..n).filter(|&c| centers & (1 << c) != 0).fold(0u32, |m, c| m | reach[c]);
        if covered == full {
            best = k;
        }
    }
    Ok(best)
}
