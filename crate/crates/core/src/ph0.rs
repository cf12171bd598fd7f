//! Degree-0 persistent homology of a finite (pseudo-)metric space.
//!
//! In the Vietoris-Rips filtration every point is born at scale 0 and a
//! connected component dies when an edge first joins it to another one, so
//! the finite deaths are exactly the edge weights of a minimum spanning tree
//! (single linkage). That multiset does not depend on how ties are broken.

use std::io::Write;

use thiserror::Error;

use crate::metric::Pairwise;

#[derive(Debug, Error, PartialEq)]
pub enum Ph0Error {
    #[error("persistence needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("alpha must be nonnegative, got {0}")]
    NegativeAlpha(f64),
}

/// Finite deaths of the degree-0 diagram, ascending. Births are all 0.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PersistenceDiagram0 {
    deaths: Vec<f64>,
}

impl PersistenceDiagram0 {
    pub fn from_deaths(mut deaths: Vec<f64>) -> Self {
        deaths.sort_by(f64::total_cmp);
        Self { deaths }
    }

    pub fn deaths(&self) -> &[f64] {
        &self.deaths
    }

    pub fn n_pts(&self) -> usize {
        self.deaths.len() + 1
    }

    pub fn total_persistence(&self) -> f64 {
        self.deaths.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in &self.deaths {
            writeln!(w, "{d}")?;
        }
        Ok(())
    }
}

/// Disjoint-set forest with path halving and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            let grand = self.parent[self.parent[x]];
            self.parent[x] = grand;
            x = grand;
        }
        x
    }

    /// Merges the sets of `a` and `b`; false when they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Deaths of the degree-0 diagram, via dense Prim in `O(n^2)` time and `O(n)` memory.
pub fn persistence0<P: Pairwise + ?Sized>(space: &P) -> Result<PersistenceDiagram0, Ph0Error> {
    let n = space.n_pts();
    if n < 2 {
        return Err(Ph0Error::TooFewPoints(n));
    }
    let idx: Vec<usize> = (0..n).collect();
    Ok(PersistenceDiagram0::from_deaths(mst_weights(space, &idx)))
}

/// Same diagram via Kruskal: sort all pairs ascending (ties by `(i, j)`) and
/// merge with union-find.
pub fn persistence0_kruskal<P: Pairwise + ?Sized>(space: &P) -> Result<PersistenceDiagram0, Ph0Error> {
    let n = space.n_pts();
    if n < 2 {
        return Err(Ph0Error::TooFewPoints(n));
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((space.dist(i, j), i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut uf = UnionFind::new(n);
    let mut deaths = Vec::with_capacity(n - 1);
    for (w, i, j) in edges {
        if uf.union(i, j) {
            deaths.push(w);
            if deaths.len() == n - 1 {
                break;
            }
        }
    }
    Ok(PersistenceDiagram0::from_deaths(deaths))
}

/// MST edge weights (unsorted) of the sub-space induced by `idx`.
pub(crate) fn mst_weights<P: Pairwise + ?Sized>(space: &P, idx: &[usize]) -> Vec<f64> {
    let k = idx.len();
    if k < 2 {
        return Vec::new();
    }
    // `remaining` holds positions into `idx` not yet in the tree, with their
    // current distance to the tree.
    let mut remaining: Vec<usize> = (1..k).collect();
    let mut best: Vec<f64> = vec![f64::INFINITY; k];
    let mut weights = Vec::with_capacity(k - 1);
    let mut last = idx[0];
    while !remaining.is_empty() {
        let mut arg = 0;
        let mut arg_val = f64::INFINITY;
        for (slot, &p) in remaining.iter().enumerate() {
            let d = space.dist(last, idx[p]);
            let b = &mut best[p];
            if d < *b {
                *b = d;
            }
            if *b < arg_val {
                arg_val = *b;
                arg = slot;
            }
        }
        let p = remaining.swap_remove(arg);
        weights.push(arg_val);
        last = idx[p];
    }
    weights
}

/// `E_alpha = sum of death^alpha`, with `0^0 = 1` so that `E_0` counts pairs.
pub fn weighted_life_sum(pd: &PersistenceDiagram0, alpha: f64) -> Result<f64, Ph0Error> {
    if !(alpha >= 0.0) {
        return Err(Ph0Error::NegativeAlpha(alpha));
    }
    Ok(life_sum(pd.deaths(), alpha))
}

#[inline]
pub(crate) fn life_sum(deaths: &[f64], alpha: f64) -> f64 {
    if alpha == 0.0 {
        deaths.len() as f64
    } else if alpha == 1.0 {
        deaths.iter().sum()
    } else {
        deaths.iter().map(|d| d.powf(alpha)).sum()
    }
}
