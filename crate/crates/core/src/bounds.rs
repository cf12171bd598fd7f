//! The computable part of the dimension-based generalization bound.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::matrix_io::LossMatrix;
use crate::stats::GridRecord;

#[derive(Debug, Error, PartialEq)]
#[error("invalid bound inputs: {0}")]
pub struct InvalidInputs(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub dim: f64,
    pub n: usize,
    /// Upper bound on the per-sample loss.
    pub b: f64,
    pub delta: f64,
    pub eta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<(), InvalidInputs> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !(self.dim >= 0.0 && self.dim.is_finite()) {
            return Err(InvalidInputs(format!("dim must be finite and >= 0, got {}", self.dim)));
        }
        if self.n < 2 {
            return Err(InvalidInputs(format!("n must be >= 2, got {}", self.n)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(InvalidInputs(format!("B must be finite and > 0, got {}", self.b)));
        }
        if !open_unit(self.delta) {
            return Err(InvalidInputs(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !open_unit(self.eta) {
            return Err(InvalidInputs(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        Ok(())
    }
}

/// `delta + B/(sqrt(n) - 1) + sqrt(2) B sqrt((dim ln(1/delta) + ln(sqrt(n)/eta)) / n)`.
pub fn computable_bound(x: &BoundInputs) -> Result<f64, InvalidInputs> {
    x.validate()?;
    let n = x.n as f64;
    let root_n = n.sqrt();
    let radicand = (x.dim * (1.0 / x.delta).ln() + (root_n / x.eta).ln()) / n;
    Ok(x.delta + x.b / (root_n - 1.0) + std::f64::consts::SQRT_2 * x.b * radicand.sqrt())
}

/// Largest single per-sample loss across all trajectories.
pub fn b_from_losses<'a>(losses: impl IntoIterator<Item = &'a LossMatrix>) -> Option<f64> {
    losses.into_iter().map(|l| l.max_loss()).reduce(f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub gen_gap: f64,
    pub dim: f64,
    pub bound: f64,
}

/// One row per usable record; the shared inputs are validated once.
pub fn bound_table(
    records: &[GridRecord],
    b: f64,
    delta: f64,
    eta: f64,
    n: usize,
) -> Result<Vec<BoundRow>, InvalidInputs> {
    BoundInputs {
        dim: 0.0,
        n,
        b,
        delta,
        eta,
    }
    .validate()?;
    records
        .iter()
        .filter_map(|r| r.observation())
        .map(|(gen_gap, dim)| {
            let bound = computable_bound(&BoundInputs { dim, n, b, delta, eta })?;
            Ok(BoundRow { gen_gap, dim, bound })
        })
        .collect()
}

pub fn write_bound_csv<W: Write>(rows: &[BoundRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "gen_gap,bound")?;
    for r in rows {
        writeln!(w, "{:?},{:?}", r.gen_gap, r.bound)?;
    }
    Ok(())
}
