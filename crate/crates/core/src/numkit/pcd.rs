//! Greedy pivoted Cholesky decomposition of a PSD matrix that is only ever
//! accessed through its diagonal and individual columns.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Output of [`pivoted_cholesky`].
#[derive(Clone, Debug)]
pub struct PcdResult {
    /// Selected pivots in the order they were chosen.
    pub pivots: Vec<usize>,
    /// N x R factor in the original row order: `factor * factor^T`
    /// approximates the input, and permuting its rows into pivot order makes
    /// it lower-trapezoidal.
    pub factor: Matrix,
    /// Trace of the residual after the last step.
    pub trace_error: f64,
    /// Residual diagonal value of each pivot at the moment it was chosen.
    pub pivot_residuals: Vec<f64>,
}

impl PcdResult {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}

/// Pivoted Cholesky with the trace stopping rule only.
pub fn pivoted_cholesky(
    diag: &[f64],
    column: impl FnMut(usize) -> Vec<f64>,
    rank: usize,
    tol: f64,
) -> Result<PcdResult> {
    pivoted_cholesky_floor(diag, column, rank, tol, 0.0)
}

/// Pivoted Cholesky that additionally stops once the largest residual
/// diagonal entry is at or below `min_pivot`.
///
/// Pivot = argmax of the residual diagonal, ties to the lowest index. Only
/// the columns of chosen pivots are requested from `column`.
pub fn pivoted_cholesky_floor(
    diag: &[f64],
    mut column: impl FnMut(usize) -> Vec<f64>,
    rank: usize,
    tol: f64,
    min_pivot: f64,
) -> Result<PcdResult> {
    let n = diag.len();
    if rank > n {
        return Err(Error::InvalidRank { rank, size: n });
    }
    let mut residual: Vec<f64> = diag.iter().map(|d| d.max(0.0)).collect();
    let mut taken = vec![false; n];
    let mut pivots = Vec::with_capacity(rank);
    let mut pivot_residuals = Vec::with_capacity(rank);
    // factor columns, each of length n
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(rank);

    for _ in 0..rank {
        let trace: f64 = residual.iter().sum();
        if trace <= tol {
            break;
        }
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if residual[i] <= residual[b] => {}
                _ => best = Some(i),
            }
        }
        let Some(p) = best else { break };
        let dp = residual[p];
        if dp <= min_pivot || dp <= 0.0 {
            break;
        }
        let col_p = column(p);
        if col_p.len() != n {
            return Err(Error::Shape(format!(
                "column {p} has {} entries, expected {n}",
                col_p.len()
            )));
        }
        let root = dp.sqrt();
        let mut l = vec![0.0; n];
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let mut v = col_p[i];
            for c in &cols {
                v -= c[i] * c[p];
            }
            l[i] = v / root;
        }
        l[p] = root;
        taken[p] = true;
        for i in 0..n {
            if taken[i] {
                residual[i] = 0.0;
            } else {
                residual[i] = (residual[i] - l[i] * l[i]).max(0.0);
            }
        }
        pivots.push(p);
        pivot_residuals.push(dp);
        cols.push(l);
    }

    let r = cols.len();
    let factor = Matrix::from_fn(n, r, |i, k| cols[k][i]);
    Ok(PcdResult {
        pivots,
        factor,
        trace_error: residual.iter().sum(),
        pivot_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(k: &Matrix, rank: usize) -> PcdResult {
        pivoted_cholesky(&k.diag(), |j| k.col_to_vec(j), rank, 0.0).unwrap()
    }

    #[test]
    fn diagonal_pivots_descend() {
        let k = Matrix::diag_from(&[1.0, 3.0, 2.0]);
        assert_eq!(dense(&k, 3).pivots, vec![1, 2, 0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(dense(&Matrix::identity(3), 2).pivots, vec![0, 1]);
    }

    #[test]
    fn rank_above_size_is_rejected() {
        let k = Matrix::identity(2);
        assert!(matches!(
            pivoted_cholesky(&k.diag(), |j| k.col_to_vec(j), 3, 0.0),
            Err(Error::InvalidRank { rank: 3, size: 2 })
        ));
    }

    #[test]
    fn only_pivot_columns_are_requested() {
        let k = Matrix::from_rows(&[
            vec![2.0, 0.5, 0.1, 0.0],
            vec![0.5, 3.0, 0.2, 0.1],
            vec![0.1, 0.2, 1.0, 0.3],
            vec![0.0, 0.1, 0.3, 1.5],
        ]);
        let mut asked = Vec::new();
        let res = pivoted_cholesky(
            &k.diag(),
            |j| {
                asked.push(j);
                k.col_to_vec(j)
            },
            2,
            0.0,
        )
        .unwrap();
        assert_eq!(asked, res.pivots);
    }

    #[test]
    fn trace_tolerance_stops_early() {
        let k = Matrix::diag_from(&[1.0, 1e-3, 1e-3]);
        let res = pivoted_cholesky(&k.diag(), |j| k.col_to_vec(j), 3, 0.01).unwrap();
        assert_eq!(res.pivots, vec![0]);
        assert!((res.trace_error - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn factor_is_trapezoidal_in_pivot_order() {
        let k = Matrix::from_rows(&[
            vec![2.0, 0.5, 0.1],
            vec![0.5, 3.0, 0.2],
            vec![0.1, 0.2, 1.0],
        ]);
        let res = dense(&k, 3);
        let permuted = res.factor.select_rows(&res.pivots);
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert_eq!(permuted[(i, j)], 0.0);
            }
        }
    }
}
