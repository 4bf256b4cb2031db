//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation in creation order, so a single reverse
//! sweep from a scalar output visits each node after all of its consumers.
//! Leaves created with [`Tape::leaf`] receive gradients; constants do not,
//! and whole subgraphs that depend only on constants are skipped during the
//! sweep.

use std::cell::RefCell;
use std::rc::Rc;

use super::linalg::{cholesky_jittered, solve_lower, solve_lower_t};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward rule sees.
pub struct Ctx<'a> {
    /// Gradient of the output with respect to this node.
    pub grad: &'a Matrix,
    /// Forward value of this node.
    pub value: &'a Matrix,
    /// Forward values of the parents, in declaration order.
    pub parents: Vec<&'a Matrix>,
    /// Whether each parent needs a gradient.
    pub needs: Vec<bool>,
}

pub type BackwardFn = Box<dyn Fn(&Ctx<'_>) -> Vec<Option<Matrix>>>;

struct Node {
    value: Rc<Matrix>,
    parents: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Grads {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Grads {
    /// Gradient with respect to `v`; zeros if `v` did not influence the
    /// output.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&self, value: Matrix, parents: Vec<usize>, backward: Option<BackwardFn>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = backward.is_some() && parents.iter().any(|p| nodes[*p].requires_grad);
        let backward = if requires_grad { backward } else { None };
        nodes.push(Node {
            value: Rc::new(value),
            parents,
            requires_grad,
            backward,
        });
        Var(nodes.len() - 1)
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Matrix) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            requires_grad: true,
            backward: None,
        });
        Var(nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&self, value: Matrix) -> Var {
        self.push(value, Vec::new(), None)
    }

    pub fn scalar_const(&self, value: f64) -> Var {
        self.constant(Matrix::scalar(value))
    }

    pub fn value(&self, v: Var) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.to_scalar()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an operation with a caller-supplied backward rule. The rule
    /// must return one entry per parent; `None` means "no contribution".
    pub fn custom(
        &self,
        parents: &[Var],
        value: Matrix,
        backward: impl Fn(&Ctx<'_>) -> Vec<Option<Matrix>> + 'static,
    ) -> Var {
        self.push(
            value,
            parents.iter().map(|p| p.0).collect(),
            Some(Box::new(backward)),
        )
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Grads {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = vec![None; out.0 + 1];
        let shapes = nodes.iter().map(|n| n.value.shape()).collect();
        let (r, c) = nodes[out.0].value.shape();
        grads[out.0] = Some(Matrix::filled(r, c, 1.0));
        for i in (0..=out.0).rev() {
            let node = &nodes[i];
            let Some(bw) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let ctx = Ctx {
                grad: &g,
                value: &node.value,
                parents: node.parents.iter().map(|p| &*nodes[*p].value).collect(),
                needs: node
                    .parents
                    .iter()
                    .map(|p| nodes[*p].requires_grad)
                    .collect(),
            };
            let pg = bw(&ctx);
            debug_assert_eq!(pg.len(), node.parents.len());
            for (p, gp) in node.parents.iter().zip(pg) {
                let Some(gp) = gp else { continue };
                if !nodes[*p].requires_grad {
                    continue;
                }
                debug_assert_eq!(gp.shape(), nodes[*p].value.shape(), "gradient shape");
                match &mut grads[*p] {
                    Some(acc) => acc.add_assign(&gp),
                    slot @ None => *slot = Some(gp),
                }
            }
            grads[i] = Some(g);
        }
        Grads { grads, shapes }
    }

    // ----- elementwise and structural ops -----

    pub fn add(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(&self.value(b));
        self.custom(&[a, b], v, |c| vec![Some(c.grad.clone()), Some(c.grad.clone())])
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(&self.value(b));
        self.custom(&[a, b], v, |c| {
            vec![Some(c.grad.clone()), Some(c.grad.scale(-1.0))]
        })
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.custom(&[a], v, move |c| vec![Some(c.grad.scale(s))])
    }

    /// Adds a constant to every entry.
    pub fn offset(&self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.custom(&[a], v, |c| vec![Some(c.grad.clone())])
    }

    /// `s * a` for a 1x1 node `s`.
    pub fn mul_scalar(&self, a: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let v = self.value(a).scale(sv);
        self.custom(&[a, s], v, |c| {
            let s = c.parents[1].to_scalar();
            let da = c.needs[0].then(|| c.grad.scale(s));
            let ds = c.needs[1].then(|| Matrix::scalar(c.grad.hadamard(c.parents[0]).sum()));
            vec![da, ds]
        })
    }

    pub fn hadamard(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).hadamard(&self.value(b));
        self.custom(&[a, b], v, |c| {
            vec![
                c.needs[0].then(|| c.grad.hadamard(c.parents[1])),
                c.needs[1].then(|| c.grad.hadamard(c.parents[0])),
            ]
        })
    }

    pub fn transpose(&self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.custom(&[a], v, |c| vec![Some(c.grad.transpose())])
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(&self.value(b));
        self.custom(&[a, b], v, |c| {
            vec![
                c.needs[0].then(|| c.grad.matmul_nt(c.parents[1])),
                c.needs[1].then(|| c.parents[0].matmul_tn(c.grad)),
            ]
        })
    }

    /// `a^T b`.
    pub fn matmul_tn(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_tn(&self.value(b));
        self.custom(&[a, b], v, |c| {
            vec![
                c.needs[0].then(|| c.parents[1].matmul_nt(c.grad)),
                c.needs[1].then(|| c.parents[0].matmul(c.grad)),
            ]
        })
    }

    /// Sum of all entries, as 1x1.
    pub fn sum(&self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.custom(&[a], v, |c| {
            let (r, k) = c.parents[0].shape();
            vec![Some(Matrix::filled(r, k, c.grad.to_scalar()))]
        })
    }

    /// Sum of squares of all entries, as 1x1.
    pub fn sum_sq(&self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).frobenius_sq());
        self.custom(&[a], v, |c| {
            vec![Some(c.parents[0].scale(2.0 * c.grad.to_scalar()))]
        })
    }

    /// `sum(a .* b)`, as 1x1.
    pub fn dot(&self, a: Var, b: Var) -> Var {
        let v = Matrix::scalar(self.value(a).hadamard(&self.value(b)).sum());
        self.custom(&[a, b], v, |c| {
            let g = c.grad.to_scalar();
            vec![
                c.needs[0].then(|| c.parents[1].scale(g)),
                c.needs[1].then(|| c.parents[0].scale(g)),
            ]
        })
    }

    /// Column sums, as a 1 x cols row.
    pub fn col_sums(&self, a: Var) -> Var {
        let av = self.value(a);
        let v = Matrix::from_vec(1, av.cols(), av.col_sums()).expect("shape");
        self.custom(&[a], v, |c| {
            let (r, k) = c.parents[0].shape();
            vec![Some(Matrix::from_fn(r, k, |_, j| c.grad[(0, j)]))]
        })
    }

    /// Sum of squares of each column, as a 1 x cols row.
    pub fn col_sum_sq(&self, a: Var) -> Var {
        let av = self.value(a);
        let v = Matrix::from_vec(1, av.cols(), av.map(|x| x * x).col_sums()).expect("shape");
        self.custom(&[a], v, |c| {
            let a = c.parents[0];
            vec![Some(Matrix::from_fn(a.rows(), a.cols(), |i, j| {
                2.0 * a[(i, j)] * c.grad[(0, j)]
            }))]
        })
    }

    /// `a + s I` for a 1x1 node `s`.
    pub fn add_diag(&self, a: Var, s: Var) -> Var {
        let mut v = (*self.value(a)).clone();
        v.add_diag(self.scalar(s));
        self.custom(&[a, s], v, |c| {
            vec![
                c.needs[0].then(|| c.grad.clone()),
                c.needs[1].then(|| Matrix::scalar(c.grad.trace())),
            ]
        })
    }

    /// Rows `start..start+len` of `a`.
    pub fn rows(&self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        let v = Matrix::from_fn(len, av.cols(), |i, j| av[(start + i, j)]);
        self.custom(&[a], v, move |c| {
            let (r, k) = c.parents[0].shape();
            let mut g = Matrix::zeros(r, k);
            for i in 0..len {
                g.row_mut(start + i).copy_from_slice(c.grad.row(i));
            }
            vec![Some(g)]
        })
    }

    /// Reinterprets a node's values (row-major) with a new shape.
    pub fn reshape(&self, a: Var, rows: usize, cols: usize) -> Var {
        let av = self.value(a);
        let v = Matrix::from_vec(rows, cols, av.as_slice().to_vec()).expect("reshape count");
        self.custom(&[a], v, |c| {
            let (r, k) = c.parents[0].shape();
            vec![Some(
                Matrix::from_vec(r, k, c.grad.as_slice().to_vec()).expect("reshape"),
            )]
        })
    }

    pub fn tril(&self, a: Var) -> Var {
        let v = self.value(a).tril();
        self.custom(&[a], v, |c| vec![Some(c.grad.tril())])
    }

    fn unary(
        &self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let v = self.value(a).map(f);
        self.custom(&[a], v, move |c| {
            let d = c.parents[0].zip_map(c.value, &df);
            vec![Some(d.hadamard(c.grad))]
        })
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, f64::exp, |_, y| y)
    }

    pub fn ln(&self, a: Var) -> Var {
        self.unary(a, f64::ln, |x, _| 1.0 / x)
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn recip(&self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / x, |_, y| -y * y)
    }

    /// `log(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self, a: Var) -> Var {
        self.unary(a, softplus, |x, _| sigmoid(x))
    }

    // ----- factorisations and solves -----

    /// Cholesky factor under the jitter-escalation policy, starting from zero
    /// jitter. The (value-dependent) jitter is differentiated through.
    pub fn cholesky(&self, a: Var) -> Result<Var> {
        self.cholesky_with(a, 0.0)
    }

    pub fn cholesky_with(&self, a: Var, rel_jitter: f64) -> Result<Var> {
        let chol = cholesky_jittered(&self.value(a), rel_jitter)?;
        let rel = chol.rel_jitter;
        Ok(self.custom(&[a], chol.l, move |c| {
            let l = c.value;
            let n = l.rows();
            let lbar = c.grad.tril();
            let mut p = l.matmul_tn(&lbar);
            phi_in_place(&mut p);
            // L^{-T} P L^{-1}
            let x = solve_lower_t(l, &p);
            let abar = solve_lower_t(l, &x.transpose()).transpose();
            let mut abar = abar.symmetrize();
            if rel > 0.0 && n > 0 {
                let shift = rel / n as f64 * abar.trace();
                abar.add_diag(shift);
            }
            vec![Some(abar)]
        }))
    }

    /// `L^{-1} B` for lower-triangular `L`.
    pub fn solve_lower(&self, l: Var, b: Var) -> Var {
        let v = solve_lower(&self.value(l), &self.value(b));
        self.custom(&[l, b], v, |c| {
            let l = c.parents[0];
            let bbar = solve_lower_t(l, c.grad);
            let lbar = c.needs[0].then(|| bbar.matmul_nt(c.value).tril().scale(-1.0));
            vec![lbar, Some(bbar)]
        })
    }

    /// `L^{-T} B` for lower-triangular `L`.
    pub fn solve_lower_t(&self, l: Var, b: Var) -> Var {
        let v = solve_lower_t(&self.value(l), &self.value(b));
        self.custom(&[l, b], v, |c| {
            let l = c.parents[0];
            let bbar = solve_lower(l, c.grad);
            let lbar = c.needs[0].then(|| c.value.matmul_nt(&bbar).tril().scale(-1.0));
            vec![lbar, Some(bbar)]
        })
    }

    /// `sum_i log |L_ii|`, as 1x1.
    pub fn log_abs_diag_sum(&self, l: Var) -> Var {
        let v = Matrix::scalar(self.value(l).diag().iter().map(|d| d.abs().ln()).sum());
        self.custom(&[l], v, |c| {
            let l = c.parents[0];
            let g = c.grad.to_scalar();
            let mut out = Matrix::zeros(l.rows(), l.cols());
            for i in 0..l.rows().min(l.cols()) {
                out[(i, i)] = g / l[(i, i)];
            }
            vec![Some(out)]
        })
    }
}

/// Lower triangle with the diagonal halved.
fn phi_in_place(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = 0.0;
        }
        m[(i, i)] *= 0.5;
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Value and gradient of a scalar objective of a parameter vector.
///
/// `loss` receives the tape and a `P x 1` leaf holding `params`.
pub fn value_and_gradient<F>(loss: F, params: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&Tape, Var) -> Result<Var>,
{
    let tape = Tape::new();
    let p = tape.leaf(Matrix::column(params.to_vec()));
    let out = loss(&tape, p)?;
    let value = tape.scalar(out);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss(value));
    }
    let grads = tape.backward(out);
    Ok((value, grads.wrt(p).into_vec()))
}

/// Gradient of a scalar objective of a parameter vector.
pub fn gradient<F>(loss: F, params: &[f64]) -> Result<Vec<f64>>
where
    F: FnOnce(&Tape, Var) -> Result<Var>,
{
    value_and_gradient(loss, params).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::fd::{central_difference, max_relative_error};

    fn spd(n: usize, seed: u64) -> Matrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let b = Matrix::from_fn(n, n, |_, _| next());
        let mut a = b.matmul_nt(&b);
        a.add_diag(0.5);
        a
    }

    #[test]
    fn square_gradient() {
        let g = gradient(|t, p| Ok(t.sum_sq(p)), &[3.0]).unwrap();
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let g = gradient(|t, _p| Ok(t.scalar_const(4.2)), &[1.0, -2.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let r = gradient(|t, p| Ok(t.ln(t.rows(p, 0, 1))), &[-1.0]);
        assert!(matches!(r, Err(Error::NonFiniteLoss(_))));
    }

    /// log det and a quadratic form of a matrix built from the parameters,
    /// pushed through cholesky, both solves and the log-diagonal.
    fn chol_objective(t: &Tape, p: Var, n: usize, base: &Matrix) -> Result<Var> {
        let pm = t.reshape(p, n, n);
        let sym = t.add(pm, t.transpose(pm));
        let a = t.add(t.constant(base.clone()), t.scale(sym, 0.1));
        let l = t.cholesky(a)?;
        let y = t.constant(Matrix::from_fn(n, 2, |i, j| (i + 2 * j) as f64 * 0.3 - 0.4));
        let w = t.solve_lower(l, y);
        let z = t.solve_lower_t(l, w);
        let quad = t.dot(y, z);
        let ld = t.log_abs_diag_sum(l);
        let s = t.add(t.scale(quad, 0.7), t.scale(ld, 2.0));
        Ok(t.add(s, t.sum_sq(t.matmul(l, w))))
    }

    #[test]
    fn cholesky_and_solves_match_finite_differences() {
        let n = 4;
        let base = spd(n, 11);
        let params: Vec<f64> = (0..n * n).map(|i| ((i * 7) % 5) as f64 * 0.05 - 0.1).collect();
        let g = gradient(|t, p| chol_objective(t, p, n, &base), &params).unwrap();
        let fd = central_difference(
            |q| {
                let t = Tape::new();
                let p = t.constant(Matrix::column(q.to_vec()));
                Ok(t.scalar(chol_objective(&t, p, n, &base)?))
            },
            &params,
        )
        .unwrap();
        assert!(max_relative_error(&g, &fd) < 1e-6, "{g:?} vs {fd:?}");
    }

    #[test]
    fn jittered_cholesky_gradient() {
        // rank-one matrix forces jitter escalation; the jitter depends on the
        // mean diagonal and must be differentiated through.
        let f = |t: &Tape, p: Var| -> Result<Var> {
            let v = t.rows(p, 0, 2);
            let a = t.matmul(v, t.transpose(v));
            let l = t.cholesky(a)?;
            Ok(t.log_abs_diag_sum(l))
        };
        let params = [1.0, 2.0];
        let g = gradient(f, &params).unwrap();
        let fd = central_difference(
            |q| {
                let t = Tape::new();
                let p = t.constant(Matrix::column(q.to_vec()));
                Ok(t.scalar(f(&t, p)?))
            },
            &params,
        )
        .unwrap();
        assert!(max_relative_error(&g, &fd) < 1e-5, "{g:?} vs {fd:?}");
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let f = |t: &Tape, p: Var| -> Result<Var> {
            let a = t.softplus(p);
            let b = t.exp(t.scale(p, 0.3));
            let c = t.recip(t.offset(t.square(p), 1.0));
            let d = t.hadamard(a, b);
            let s = t.rows(p, 1, 1);
            let e = t.mul_scalar(c, s);
            let tot = t.add(t.sum(d), t.sum(e));
            let cs = t.col_sum_sq(t.transpose(p));
            let ln = t.ln(t.offset(t.col_sums(t.transpose(a)), 2.0));
            Ok(t.add(t.add(tot, t.sum(cs)), t.sum(ln)))
        };
        let params = [0.3, -1.2, 2.0];
        let g = gradient(f, &params).unwrap();
        let fd = central_difference(
            |q| {
                let t = Tape::new();
                let p = t.constant(Matrix::column(q.to_vec()));
                Ok(t.scalar(f(&t, p)?))
            },
            &params,
        )
        .unwrap();
        assert!(max_relative_error(&g, &fd) < 1e-7, "{g:?} vs {fd:?}");
    }

    #[test]
    fn softplus_round_trip() {
        for y in [1e-6, 0.1, 1.0, 7.5, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() <= 1e-12 * y.max(1.0));
        }
    }
}
