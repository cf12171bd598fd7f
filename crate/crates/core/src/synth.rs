//! Point clouds with known box-counting dimension, for validating the estimators.

use thiserror::Error;

use crate::matrix_io::DenseMatrix;
use crate::rng::SplitMix64;

/// Deepest Cantor construction whose denominators `3^depth` stay exact in an f64.
pub const MAX_CANTOR_DEPTH: u32 = 33;
const CHAOS_BURN_IN: usize = 100;

pub const SIERPINSKI_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.866_025_403_784_438_6]];

#[derive(Debug, Error, PartialEq)]
#[error("invalid fractal spec: {0}")]
pub struct InvalidSpec(pub String);

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FractalKind {
    /// Endpoints of the middle-thirds construction at `depth`: `2^(depth+1)` points.
    CantorLine { depth: u32 },
    CantorDust2d { depth: u32 },
    SierpinskiTriangle,
    UniformCube { dim: usize },
}

impl FractalKind {
    /// Textbook box-counting dimension of the limiting set.
    pub fn analytic_dimension(&self) -> f64 {
        match *self {
            FractalKind::CantorLine { .. } => 2f64.ln() / 3f64.ln(),
            FractalKind::CantorDust2d { .. } => 2.0 * 2f64.ln() / 3f64.ln(),
            FractalKind::SierpinskiTriangle => 3f64.ln() / 2f64.ln(),
            FractalKind::UniformCube { dim } => dim as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FractalSpec {
    #[serde(flatten)]
    pub kind: FractalKind,
    pub n_points: usize,
    pub seed: u64,
}

impl FractalSpec {
    pub fn validate(&self) -> Result<(), InvalidSpec> {
        if self.n_points < 2 {
            return Err(InvalidSpec(format!("n_points must be >= 2, got {}", self.n_points)));
        }
        match self.kind {
            FractalKind::CantorLine { depth } | FractalKind::CantorDust2d { depth } => {
                if !(1..=MAX_CANTOR_DEPTH).contains(&depth) {
                    return Err(InvalidSpec(format!(
                        "cantor depth must be in 1..={MAX_CANTOR_DEPTH}, got {depth}"
                    )));
                }
                let per_axis = 2u128 << depth;
                let available = if matches!(self.kind, FractalKind::CantorDust2d { .. }) {
                    per_axis * per_axis
                } else {
                    per_axis
                };
                if self.n_points as u128 > available {
                    return Err(InvalidSpec(format!(
                        "depth {depth} has only {available} distinct points, asked for {}",
                        self.n_points
                    )));
                }
            }
            FractalKind::UniformCube { dim: 0 } => {
                return Err(InvalidSpec("uniform_cube needs dim >= 1".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Numerator (over `3^depth`) of the `index`-th Cantor endpoint in ascending order.
///
/// Bit 0 of `index` picks the left or right end of an interval; the remaining
/// bits, most significant first, choose left/right thirds at each level.
pub fn cantor_numerator(index: u64, depth: u32) -> u64 {
    let side = index & 1;
    let interval = index >> 1;
    let mut left = 0u64;
    for level in 1..=depth {
        if (interval >> (depth - level)) & 1 == 1 {
            left += 2 * 3u64.pow(depth - level);
        }
    }
    left + side
}

fn cantor_coord(index: u64, depth: u32) -> f64 {
    cantor_numerator(index, depth) as f64 / 3u64.pow(depth) as f64
}

fn cantor_indices(depth: u32, n_points: usize, rng: &mut SplitMix64) -> Vec<u64> {
    let total = 2u64 << depth;
    if n_points as u64 == total {
        (0..total).collect()
    } else {
        rng.floyd(total, n_points)
    }
}

/// Cantor endpoints in lattice units of `3^-depth`: the same points (and the
/// same draw for a given seed) as the `cantor_line` generator scaled by
/// `3^depth`. Every coordinate and pairwise distance is an exact integer, so
/// scale-`3^-k` covers can be counted without rounding.
pub fn cantor_lattice(depth: u32, n_points: usize, seed: u64) -> Result<DenseMatrix, InvalidSpec> {
    let spec = FractalSpec {
        kind: FractalKind::CantorLine { depth },
        n_points,
        seed,
    };
    spec.validate()?;
    let mut rng = SplitMix64::new(seed);
    let data = cantor_indices(depth, n_points, &mut rng)
        .into_iter()
        .map(|i| cantor_numerator(i, depth) as f64)
        .collect();
    Ok(DenseMatrix::new(n_points, 1, data).expect("lattice points are finite"))
}

pub fn generate(spec: &FractalSpec) -> Result<DenseMatrix, InvalidSpec> {
    spec.validate()?;
    let n = spec.n_points;
    let mut rng = SplitMix64::new(spec.seed);
    let (cols, data) = match spec.kind {
        FractalKind::CantorLine { depth } => {
            let picks = cantor_indices(depth, n, &mut rng);
            (1, picks.into_iter().map(|i| cantor_coord(i, depth)).collect())
        }
        FractalKind::CantorDust2d { depth } => {
            let per_axis = 2u128 << depth;
            let total = per_axis * per_axis;
            let picks: Vec<u128> = if total <= u64::MAX as u128 {
                rng.floyd(total as u64, n).into_iter().map(u128::from).collect()
            } else {
                // draw the two axes independently; duplicates are vanishingly rare at this depth
                (0..n)
                    .map(|_| {
                        let a = rng.next_u64() as u128 % per_axis;
                        let b = rng.next_u64() as u128 % per_axis;
                        a * per_axis + b
                    })
                    .collect()
            };
            let mut data = Vec::with_capacity(2 * n);
            for p in picks {
                data.push(cantor_coord((p / per_axis) as u64, depth));
                data.push(cantor_coord((p % per_axis) as u64, depth));
            }
            (2, data)
        }
        FractalKind::SierpinskiTriangle => {
            let mut p = [1.0 / 3.0, SIERPINSKI_VERTICES[2][1] / 3.0];
            let mut data = Vec::with_capacity(2 * n);
            for step in 0..CHAOS_BURN_IN + n {
                let v = SIERPINSKI_VERTICES[rng.below(3) as usize];
                p = [0.5 * (p[0] + v[0]), 0.5 * (p[1] + v[1])];
                if step >= CHAOS_BURN_IN {
                    data.extend_from_slice(&p);
                }
            }
            (2, data)
        }
        FractalKind::UniformCube { dim } => (dim, (0..n * dim).map(|_| rng.next_f64()).collect()),
    };
    Ok(DenseMatrix::new(n, cols, data).expect("generated points are finite"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: FractalKind, n_points: usize, seed: u64) -> FractalSpec {
        FractalSpec { kind, n_points, seed }
    }

    #[test]
    fn cantor_depth_one() {
        let m = generate(&spec(FractalKind::CantorLine { depth: 1 }, 4, 0)).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn cantor_numerators_depth_two() {
        let nums: Vec<u64> = (0..8).map(|i| cantor_numerator(i, 2)).collect();
        assert_eq!(nums, vec![0, 1, 2, 3, 6, 7, 8, 9]);
    }

    #[test]
    fn cantor_subsample_is_sorted_subset() {
        let m = generate(&spec(FractalKind::CantorLine { depth: 10 }, 1024, 7)).unwrap();
        assert_eq!((m.rows(), m.cols()), (1024, 1));
        assert!(m.data().windows(2).all(|w| w[0] < w[1]));
        let only_0_and_2 = |mut v: u64| {
            while v > 0 {
                if v % 3 == 1 {
                    return false;
                }
                v /= 3;
            }
            true
        };
        let lattice = cantor_lattice(10, 1024, 7).unwrap();
        for (&x, &num) in m.data().iter().zip(lattice.data()) {
            assert_eq!(x, num / 3f64.powi(10));
            // left endpoints have ternary digits in {0, 2}; right ones are left + 1
            let num = num as u64;
            assert!(only_0_and_2(num) || only_0_and_2(num - 1), "{num} is not a Cantor endpoint");
        }
    }

    #[test]
    fn too_many_points_for_depth() {
        assert!(generate(&spec(FractalKind::CantorLine { depth: 1 }, 5, 0)).is_err());
        assert!(generate(&spec(FractalKind::CantorLine { depth: 0 }, 2, 0)).is_err());
        assert!(generate(&spec(FractalKind::UniformCube { dim: 2 }, 1, 0)).is_err());
        assert!(generate(&spec(FractalKind::UniformCube { dim: 0 }, 4, 0)).is_err());
    }

    #[test]
    fn uniform_cube_range() {
        let m = generate(&spec(FractalKind::UniformCube { dim: 1 }, 500, 3)).unwrap();
        assert!(m.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        let m = generate(&spec(FractalKind::UniformCube { dim: 3 }, 10, 3)).unwrap();
        assert_eq!(m.cols(), 3);
    }

    #[test]
    fn sierpinski_points_lie_in_triangle() {
        let m = generate(&spec(FractalKind::SierpinskiTriangle, 4096, 9)).unwrap();
        let [a, b, c] = SIERPINSKI_VERTICES;
        let cross = |o: [f64; 2], p: [f64; 2], q: &[f64]| (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
        for p in m.row_iter() {
            // counter-clockwise triangle: inside iff all edge cross products are >= 0
            let tol = -1e-12;
            assert!(cross(a, b, p) >= tol && cross(b, c, p) >= tol && cross(c, a, p) >= tol, "{p:?}");
        }
    }

    #[test]
    fn cantor_dust_coordinates_are_endpoints() {
        let m = generate(&spec(FractalKind::CantorDust2d { depth: 4 }, 300, 2)).unwrap();
        let ends: Vec<f64> = (0..32).map(|i| cantor_coord(i, 4)).collect();
        assert!(m.data().iter().all(|x| ends.contains(x)));
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in [
            FractalKind::CantorLine { depth: 12 },
            FractalKind::CantorDust2d { depth: 6 },
            FractalKind::SierpinskiTriangle,
            FractalKind::UniformCube { dim: 2 },
        ] {
            let a = generate(&spec(kind, 256, 5)).unwrap();
            let b = generate(&spec(kind, 256, 5)).unwrap();
            assert_eq!(crate::matrix_io::encode_binary(&a), crate::matrix_io::encode_binary(&b));
        }
    }
}
