//! Inducing-input selection by greedy pivoted Cholesky.

use rand::seq::index::sample;

use crate::error::Result;
use crate::gp::dedup_rows;
use crate::kernels::{AkHyper, KernelColumns};
use crate::numkit::pcd::pivoted_cholesky_floor;
use crate::numkit::{Matrix, RngStream};

/// Pivots whose residual falls below this fraction of the largest prior
/// variance are treated as numerically dependent and not selected.
pub const PIVOT_FLOOR: f64 = 1e-6;

/// Candidate rows at the first `min(m, numerical rank)` pivots, in pivot
/// order.
pub fn select_inducing(kernel: &AkHyper, candidates: &Matrix, m: usize) -> Result<Matrix> {
    let n = candidates.rows();
    if n == 0 || m == 0 {
        return Ok(Matrix::zeros(0, candidates.cols()));
    }
    let cols = KernelColumns::new(kernel, candidates);
    let diag = cols.diag();
    let floor = PIVOT_FLOOR * diag.iter().cloned().fold(0.0, f64::max);
    let res = pivoted_cholesky_floor(&diag, |j| cols.column(j), m.min(n), 0.0, floor)?;
    Ok(candidates.select_rows(&res.pivots))
}

/// PCD over the old inducing inputs stacked on the new batch; the cost
/// depends only on `|Z_old| + |X_new|`.
pub fn update_inducing(kernel: &AkHyper, z_old: &Matrix, x_new: &Matrix, m: usize) -> Result<Matrix> {
    select_inducing(kernel, &z_old.vstack(x_new), m)
}

/// Uniform random subset of `[Z_old; X_new]` without replacement, kept in
/// candidate order.
pub fn random_inducing(z_old: &Matrix, x_new: &Matrix, m: usize, rng: &mut RngStream) -> Matrix {
    let cand = dedup_rows(&z_old.vstack(x_new));
    if cand.rows() <= m {
        return cand;
    }
    let mut idx = sample(rng, cand.rows(), m).into_vec();
    idx.sort_unstable();
    cand.select_rows(&idx)
}
