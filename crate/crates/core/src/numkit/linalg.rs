//! Cholesky factorisation with a jitter-escalation policy, and triangular
//! solves against the resulting factors.

use std::cell::Cell;

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// First jitter tried after a failed factorisation, relative to the mean
/// diagonal.
pub const BASE_JITTER: f64 = 1e-6;
/// Largest relative jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-2;
/// Relative asymmetry tolerated on input.
pub const SYMMETRY_TOL: f64 = 1e-8;

thread_local! {
    static ESCALATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of jitter escalations on this thread since the last
/// [`take_jitter_escalations`].
pub fn jitter_escalations() -> u64 {
    ESCALATIONS.with(Cell::get)
}

/// Returns and resets the per-thread escalation counter.
pub fn take_jitter_escalations() -> u64 {
    ESCALATIONS.with(|c| c.replace(0))
}

/// Lower Cholesky factor plus the jitter that was needed to obtain it.
#[derive(Clone, Debug)]
pub struct Cholesky {
    pub l: Matrix,
    /// Relative jitter (multiple of the mean diagonal) actually applied.
    pub rel_jitter: f64,
    /// Absolute amount added to the diagonal.
    pub added: f64,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `log |A + added I|`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `(A + added I)^{-1} B`.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        solve_lower_t(&self.l, &solve_lower(&self.l, b))
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        self.solve(&Matrix::column(b.to_vec())).into_vec()
    }

    /// `L^{-1} B`.
    pub fn half_solve(&self, b: &Matrix) -> Matrix {
        solve_lower(&self.l, b)
    }

    /// Dense inverse; only for small matrices.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        self.solve(&Matrix::identity(n)).symmetrize()
    }
}

/// Mean of the diagonal, used as the jitter scale. Falls back to 1 for
/// matrices whose diagonal is zero.
pub fn jitter_scale(a: &Matrix) -> f64 {
    let n = a.rows();
    if n == 0 {
        return 1.0;
    }
    let mean = a.trace() / n as f64;
    if mean > 0.0 && mean.is_finite() {
        mean
    } else {
        1.0
    }
}

/// Factorises `A + rel_jitter * mean(diag A) * I`, escalating the jitter by
/// factors of ten from [`BASE_JITTER`] up to [`MAX_JITTER`] when the
/// factorisation fails.
pub fn cholesky_jittered(a: &Matrix, rel_jitter: f64) -> Result<Cholesky> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "cholesky of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs().max(1e-300) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let scale = jitter_scale(a);
    let mut rel = rel_jitter.max(0.0);
    loop {
        if let Some(l) = try_cholesky(a, rel * scale) {
            return Ok(Cholesky {
                l,
                rel_jitter: rel,
                added: rel * scale,
            });
        }
        rel = if rel < BASE_JITTER { BASE_JITTER } else { rel * 10.0 };
        if rel > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::NotPositiveDefinite { jitter: MAX_JITTER });
        }
        ESCALATIONS.with(|c| c.set(c.get() + 1));
        log::debug!("cholesky failed, escalating jitter to {rel:e}");
    }
}

/// Lower-triangular `L` with `L L^T = A + jitter * mean(diag A) * I`
/// (after escalation if needed).
pub fn cholesky(a: &Matrix, jitter: f64) -> Result<Matrix> {
    cholesky_jittered(a, jitter).map(|c| c.l)
}

fn try_cholesky(a: &Matrix, added: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = a[(i, j)] + if i == j { added } else { 0.0 };
            let s = s - dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    assert_eq!(n, b.rows(), "solve_lower shape mismatch");
    let k = b.cols();
    let mut x = b.clone();
    for i in 0..n {
        for p in 0..i {
            let lip = l[(i, p)];
            if lip == 0.0 {
                continue;
            }
            let (head, tail) = x.as_mut_slice().split_at_mut(i * k);
            let xp = &head[p * k..(p + 1) * k];
            for (xi, xv) in tail[..k].iter_mut().zip(xp) {
                *xi -= lip * xv;
            }
        }
        let d = l[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
    }
    x
}

/// Solves `L^T X = B` for lower-triangular `L`.
pub fn solve_lower_t(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    assert_eq!(n, b.rows(), "solve_lower_t shape mismatch");
    let k = b.cols();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let d = l[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
        // propagate row i to the rows above it: x_p -= L[i,p] x_i
        for p in 0..i {
            let lip = l[(i, p)];
            if lip == 0.0 {
                continue;
            }
            let (head, tail) = x.as_mut_slice().split_at_mut(i * k);
            let xi = &tail[..k];
            for (xp, xv) in head[p * k..(p + 1) * k].iter_mut().zip(xi) {
                *xp -= lip * xv;
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let l = cholesky(&Matrix::identity(2), 0.0).unwrap();
        assert_eq!(l, Matrix::identity(2));
    }

    #[test]
    fn two_by_two_factor() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let l = cholesky(&a, 0.0).unwrap();
        let expected = Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 2f64.sqrt()]]);
        assert!(l.max_abs_diff(&expected) < 1e-15);
        // product check against the input
        assert!(l.matmul_nt(&l).max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            cholesky(&a, 0.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn singular_gets_jitter() {
        let before = jitter_escalations();
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let c = cholesky_jittered(&a, 0.0).unwrap();
        assert!(c.rel_jitter >= BASE_JITTER);
        assert!(jitter_escalations() > before);
        let mut shifted = a.clone();
        shifted.add_diag(c.added);
        assert!(c.l.matmul_nt(&c.l).max_abs_diff(&shifted) < 1e-12);
    }

    #[test]
    fn asymmetric_is_rejected() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]);
        assert!(matches!(cholesky(&a, 0.0), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn triangular_solves() {
        let a = Matrix::from_rows(&[
            vec![4.0, 2.0, 0.4],
            vec![2.0, 3.0, 0.5],
            vec![0.4, 0.5, 2.0],
        ]);
        let c = cholesky_jittered(&a, 0.0).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, -1.0], vec![3.0, 0.5]]);
        let x = c.solve(&b);
        assert!(a.matmul(&x).max_abs_diff(&b) < 1e-13);
        let y = solve_lower(&c.l, &b);
        assert!(c.l.matmul(&y).max_abs_diff(&b) < 1e-13);
        let z = solve_lower_t(&c.l, &b);
        assert!(c.l.transpose().matmul(&z).max_abs_diff(&b) < 1e-13);
    }
}
