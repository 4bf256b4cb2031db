//! Gaussian base kernels blended by normalized input-dependent weights.

use serde::{Deserialize, Serialize};

use super::net::{backward_with, forward_with, WeightNet};
use crate::error::{Error, Result};
use crate::numkit::tape::{softplus, softplus_inv};
use crate::numkit::{Matrix, Tape, Var};

/// Guard added to the weight norm before dividing.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseKernelGrid {
    pub len_min: f64,
    pub len_max: f64,
    pub lengthscales: Vec<f64>,
}

impl BaseKernelGrid {
    pub fn new(num_base: usize, len_min: f64, len_max: f64) -> Result<Self> {
        if num_base == 0 {
            return Err(Error::Config("need at least one base kernel".into()));
        }
        if !(len_min > 0.0) || !(len_max >= len_min) || (num_base > 1 && len_max == len_min) {
            return Err(Error::Config(format!(
                "lengthscale range [{len_min}, {len_max}] with {num_base} kernels"
            )));
        }
        let lengthscales = if num_base == 1 {
            vec![len_min]
        } else {
            let step = (len_max - len_min) / (num_base - 1) as f64;
            (0..num_base)
                .map(|m| {
                    if m == num_base - 1 {
                        len_max
                    } else {
                        len_min + step * m as f64
                    }
                })
                .collect()
        };
        Ok(BaseKernelGrid {
            len_min,
            len_max,
            lengthscales,
        })
    }

    pub fn len(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengthscales.is_empty()
    }
}

/// Amplitude, lengthscale grid and weighting network.
///
/// The amplitude is stored as the unconstrained value whose softplus is
/// `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AkHyper {
    pub raw_amplitude: f64,
    pub grid: BaseKernelGrid,
    pub net: WeightNet,
}

impl AkHyper {
    pub fn new(amplitude: f64, grid: BaseKernelGrid, net: WeightNet) -> Result<Self> {
        if !(amplitude > 0.0) {
            return Err(Error::Config(format!("amplitude {amplitude} must be positive")));
        }
        if net.output_dim() != grid.len() {
            return Err(Error::Shape(format!(
                "network has {} outputs for {} base kernels",
                net.output_dim(),
                grid.len()
            )));
        }
        Ok(AkHyper {
            raw_amplitude: softplus_inv(amplitude),
            grid,
            net,
        })
    }

    pub fn amplitude(&self) -> f64 {
        softplus(self.raw_amplitude)
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }
}

pub fn base_kernel(x: &[f64], x2: &[f64], lengthscale: f64) -> f64 {
    (-sq_dist(x, x2) / (2.0 * lengthscale * lengthscale)).exp()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn normalize_rows(w: &Matrix) -> Matrix {
    let mut out = w.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in row.iter_mut() {
            *v /= n + NORM_EPS;
        }
    }
    out
}

/// Gradient wrt raw weights given the gradient wrt the normalized ones.
fn normalize_rows_backward(w: &Matrix, gbar: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(w.rows(), w.cols());
    for i in 0..w.rows() {
        let wi = w.row(i);
        let gi = gbar.row(i);
        let n = wi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c = n + NORM_EPS;
        let wg: f64 = wi.iter().zip(gi).map(|(a, b)| a * b).sum();
        let k = if n > 0.0 { wg / (n * c * c) } else { 0.0 };
        for (o, (wv, gv)) in out.row_mut(i).iter_mut().zip(wi.iter().zip(gi)) {
            *o = gv / c - wv * k;
        }
    }
    out
}

/// Unit-norm mixture weights, one row per input.
pub fn normalized_weights(net: &WeightNet, x: &Matrix) -> Matrix {
    normalize_rows(&net.forward(x))
}

fn assemble(alpha: f64, ls: &[f64], w1: &Matrix, w2: &Matrix, x1: &Matrix, x2: &Matrix) -> Matrix {
    let inv2: Vec<f64> = ls.iter().map(|l| 1.0 / (2.0 * l * l)).collect();
    let mut k = Matrix::zeros(x1.rows(), x2.rows());
    for i in 0..x1.rows() {
        let (xi, wi) = (x1.row(i), w1.row(i));
        for j in 0..x2.rows() {
            let wj = w2.row(j);
            let d2 = sq_dist(xi, x2.row(j));
            let mut s = 0.0;
            let mut t = 0.0;
            for m in 0..ls.len() {
                let p = wi[m] * wj[m];
                s += p;
                t += p * (-d2 * inv2[m]).exp();
            }
            k[(i, j)] = alpha * s * t;
        }
    }
    k
}

/// Cross-covariance matrix between the rows of `x` and `x2`.
pub fn ak_matrix(h: &AkHyper, x: &Matrix, x2: &Matrix) -> Matrix {
    let w1 = normalized_weights(&h.net, x);
    let w2 = normalized_weights(&h.net, x2);
    assemble(h.amplitude(), &h.grid.lengthscales, &w1, &w2, x, x2)
}

/// Symmetric covariance of `x` with itself.
pub fn ak_gram(h: &AkHyper, x: &Matrix) -> Matrix {
    let w = normalized_weights(&h.net, x);
    let mut k = assemble(h.amplitude(), &h.grid.lengthscales, &w, &w, x, x);
    // round-off can differ between (i,j) and (j,i) in the weight products
    for i in 0..k.rows() {
        for j in 0..i {
            let v = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `diag(ak_matrix(h, x, x))` without forming the matrix.
pub fn ak_diag(h: &AkHyper, x: &Matrix) -> Vec<f64> {
    let alpha = h.amplitude();
    let w = normalized_weights(&h.net, x);
    (0..w.rows())
        .map(|i| {
            let s: f64 = w.row(i).iter().map(|v| v * v).sum();
            alpha * s * s
        })
        .collect()
}

/// Effective lengthscale `sum_m wbar_m^2 l_m` at each input.
pub fn lengthscale_map(h: &AkHyper, x: &Matrix) -> Vec<f64> {
    let w = normalized_weights(&h.net, x);
    (0..w.rows())
        .map(|i| {
            w.row(i)
                .iter()
                .zip(&h.grid.lengthscales)
                .map(|(v, l)| v * v * l)
                .sum()
        })
        .collect()
}

/// Lazily evaluated columns of the kernel matrix over a fixed point set.
pub struct KernelColumns<'a> {
    alpha: f64,
    inv2: Vec<f64>,
    x: &'a Matrix,
    w: Matrix,
}

impl<'a> KernelColumns<'a> {
    pub fn new(h: &AkHyper, x: &'a Matrix) -> Self {
        KernelColumns {
            alpha: h.amplitude(),
            inv2: h.grid.lengthscales.iter().map(|l| 1.0 / (2.0 * l * l)).collect(),
            x,
            w: normalized_weights(&h.net, x),
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.w.rows())
            .map(|i| {
                let s: f64 = self.w.row(i).iter().map(|v| v * v).sum();
                self.alpha * s * s
            })
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let (xj, wj) = (self.x.row(j), self.w.row(j));
        (0..self.x.rows())
            .map(|i| {
                let wi = self.w.row(i);
                let d2 = sq_dist(self.x.row(i), xj);
                let mut s = 0.0;
                let mut t = 0.0;
                for m in 0..self.inv2.len() {
                    let p = wi[m] * wj[m];
                    s += p;
                    t += p * (-d2 * self.inv2[m]).exp();
                }
                self.alpha * s * t
            })
            .collect()
    }
}

/// Tape handles for the differentiable kernel parameters.
#[derive(Clone, Copy, Debug)]
pub struct AkVars {
    /// Positive amplitude, 1x1.
    pub alpha: Var,
    /// Flat network parameters, P x 1.
    pub theta: Var,
}

/// [`ak_matrix`] as a tape operation with gradients wrt the amplitude, the
/// network parameters and both input sets.
pub fn ak_matrix_var(tape: &Tape, h: &AkHyper, v: AkVars, x: Var, x2: Var) -> Var {
    let sizes = h.net.layer_sizes.clone();
    let ls = h.grid.lengthscales.clone();
    let alpha = tape.scalar(v.alpha);
    let theta = tape.value(v.theta);
    let (xv, x2v) = (tape.value(x), tape.value(x2));
    let w1 = normalize_rows(forward_with(&sizes, theta.as_slice(), &xv).output());
    let w2 = normalize_rows(forward_with(&sizes, theta.as_slice(), &x2v).output());
    let value = assemble(alpha, &ls, &w1, &w2, &xv, &x2v);
    tape.custom(&[v.alpha, v.theta, x, x2], value, move |c| {
        let alpha = c.parents[0].to_scalar();
        let theta = c.parents[1].as_slice();
        let (x1, x2) = (c.parents[2], c.parents[3]);
        let g = c.grad;
        let tr1 = forward_with(&sizes, theta, x1);
        let tr2 = forward_with(&sizes, theta, x2);
        let w1 = normalize_rows(tr1.output());
        let w2 = normalize_rows(tr2.output());
        let nm = ls.len();
        let inv2: Vec<f64> = ls.iter().map(|l| 1.0 / (2.0 * l * l)).collect();
        let inv_l2: Vec<f64> = ls.iter().map(|l| 1.0 / (l * l)).collect();
        let want_x = c.needs[2] || c.needs[3];
        let d = x1.cols();
        let mut galpha = 0.0;
        let mut gw1 = Matrix::zeros(w1.rows(), nm);
        let mut gw2 = Matrix::zeros(w2.rows(), nm);
        let mut gx1 = Matrix::zeros(x1.rows(), d);
        let mut gx2 = Matrix::zeros(x2.rows(), d);
        let mut kb = vec![0.0; nm];
        for i in 0..x1.rows() {
            let (xi, wi) = (x1.row(i), w1.row(i));
            for j in 0..x2.rows() {
                let gij = g[(i, j)];
                if gij == 0.0 {
                    continue;
                }
                let xj = x2.row(j);
                let wj = w2.row(j);
                let d2 = sq_dist(xi, xj);
                let mut s = 0.0;
                let mut t = 0.0;
                let mut q = 0.0;
                for m in 0..nm {
                    kb[m] = (-d2 * inv2[m]).exp();
                    let p = wi[m] * wj[m];
                    s += p;
                    t += p * kb[m];
                    q += p * kb[m] * inv_l2[m];
                }
                galpha += gij * s * t;
                let cij = alpha * gij;
                for m in 0..nm {
                    let coef = cij * (t + s * kb[m]);
                    gw1[(i, m)] += coef * wj[m];
                    gw2[(j, m)] += coef * wi[m];
                }
                if want_x {
                    let qq = cij * s * q;
                    for k in 0..d {
                        let diff = xi[k] - xj[k];
                        gx1[(i, k)] -= qq * diff;
                        gx2[(j, k)] += qq * diff;
                    }
                }
            }
        }
        let graw1 = normalize_rows_backward(tr1.output(), &gw1);
        let graw2 = normalize_rows_backward(tr2.output(), &gw2);
        let (gt1, gin1) = backward_with(&sizes, theta, &tr1, &graw1, c.needs[2]);
        let (gt2, gin2) = backward_with(&sizes, theta, &tr2, &graw2, c.needs[3]);
        let gtheta: Vec<f64> = gt1.iter().zip(&gt2).map(|(a, b)| a + b).collect();
        let ptheta = c.parents[1];
        vec![
            c.needs[0].then(|| Matrix::scalar(galpha)),
            c.needs[1].then(|| {
                Matrix::from_vec(ptheta.rows(), ptheta.cols(), gtheta).expect("theta shape")
            }),
            c.needs[2].then(|| gx1.add(&gin1.unwrap())),
            c.needs[3].then(|| gx2.add(&gin2.unwrap())),
        ]
    })
}

/// [`ak_diag`] as a tape operation, returned as an N x 1 column.
pub fn ak_diag_var(tape: &Tape, h: &AkHyper, v: AkVars, x: Var) -> Var {
    let sizes = h.net.layer_sizes.clone();
    let alpha = tape.scalar(v.alpha);
    let theta = tape.value(v.theta);
    let xv = tape.value(x);
    let w = normalize_rows(forward_with(&sizes, theta.as_slice(), &xv).output());
    let sq: Vec<f64> = (0..w.rows())
        .map(|i| w.row(i).iter().map(|a| a * a).sum())
        .collect();
    let value = Matrix::column(sq.iter().map(|s| alpha * s * s).collect());
    tape.custom(&[v.alpha, v.theta, x], value, move |c| {
        let alpha = c.parents[0].to_scalar();
        let theta = c.parents[1].as_slice();
        let tr = forward_with(&sizes, theta, c.parents[2]);
        let w = normalize_rows(tr.output());
        let mut galpha = 0.0;
        let mut gw = Matrix::zeros(w.rows(), w.cols());
        for i in 0..w.rows() {
            let gi = c.grad[(i, 0)];
            let s: f64 = w.row(i).iter().map(|a| a * a).sum();
            galpha += gi * s * s;
            for m in 0..w.cols() {
                gw[(i, m)] = gi * alpha * 4.0 * s * w[(i, m)];
            }
        }
        let graw = normalize_rows_backward(tr.output(), &gw);
        let (gt, gin) = backward_with(&sizes, theta, &tr, &graw, c.needs[2]);
        let pt = c.parents[1];
        vec![
            c.needs[0].then(|| Matrix::scalar(galpha)),
            c.needs[1].then(|| Matrix::from_vec(pt.rows(), pt.cols(), gt).expect("theta shape")),
            c.needs[2].then(|| gin.unwrap()),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::fd::{central_difference, max_relative_error};
    use crate::numkit::RngStream;

    fn hyper(m: usize, seed: u64) -> AkHyper {
        let grid = BaseKernelGrid::new(m, 0.05, 1.0).unwrap();
        let net = WeightNet::default_arch(2, m, &mut RngStream::new(seed, "net")).unwrap();
        AkHyper::new(1.3, grid, net).unwrap()
    }

    fn points(n: usize, seed: u64) -> Matrix {
        use rand::Rng;
        let mut r = RngStream::new(seed, "x");
        Matrix::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0))
    }

    #[test]
    fn base_kernel_values() {
        assert_eq!(base_kernel(&[0.2, 0.4], &[0.2, 0.4], 0.7), 1.0);
        let v = base_kernel(&[0.0, 0.0], &[0.6, 0.8], 1.0);
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        // distance 6 at lengthscale 2: exp(-36/8)
        let v = base_kernel(&[0.0], &[6.0], 2.0);
        assert!((v - 0.011108996538242306).abs() < 1e-15);
    }

    #[test]
    fn grid_spacing() {
        let g = BaseKernelGrid::new(5, 0.1, 0.5).unwrap();
        assert_eq!(g.lengthscales.first(), Some(&0.1));
        assert_eq!(g.lengthscales.last(), Some(&0.5));
        assert!((g.lengthscales[2] - 0.3).abs() < 1e-15);
        assert!(BaseKernelGrid::new(0, 0.1, 0.5).is_err());
    }

    #[test]
    fn zero_network_gives_uniform_weights() {
        let net = WeightNet::zeros(&[2, 10, 10, 4]);
        let w = normalized_weights(&net, &points(3, 1));
        for v in w.as_slice() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_unit_forward_by_hand() {
        // 2 -> 1 -> 2 with hand-set parameters at x = [0.5, -0.5]
        let sizes = [2, 1, 2];
        let params = vec![0.4, -0.2, 0.1, 1.5, -0.7, 0.05, 0.3];
        let net = WeightNet::with_params(&sizes, params).unwrap();
        let h = (0.4f64 * 0.5 - 0.2 * -0.5 + 0.1).tanh();
        let o1 = 1.0 / (1.0 + (-(1.5 * h + 0.05)).exp());
        let o2 = 1.0 / (1.0 + (-(-0.7 * h + 0.3)).exp());
        let n = (o1 * o1 + o2 * o2).sqrt();
        let w = normalized_weights(&net, &Matrix::from_rows(&[vec![0.5, -0.5]]));
        assert!((w[(0, 0)] - o1 / n).abs() < 1e-12);
        assert!((w[(0, 1)] - o2 / n).abs() < 1e-12);
    }

    #[test]
    fn one_base_kernel_is_a_scaled_gaussian() {
        let h = hyper(1, 3);
        let x = points(5, 2);
        let k = ak_matrix(&h, &x, &x);
        for i in 0..5 {
            for j in 0..5 {
                let e = h.amplitude() * base_kernel(x.row(i), x.row(j), 0.05);
                assert!((k[(i, j)] - e).abs() < 1e-10);
            }
        }
        assert!(lengthscale_map(&h, &x).iter().all(|l| (l - 0.05).abs() < 1e-12));
    }

    #[test]
    fn orthogonal_memberships_decorrelate() {
        // 1 -> 2 output layer without hidden units is not expressible, so
        // push the logistic into saturation with huge opposite weights.
        let sizes = [1, 1, 2];
        let params = vec![1.0, 0.0, 200.0, -200.0, 0.0, 0.0];
        let net = WeightNet::with_params(&sizes, params).unwrap();
        let h = AkHyper::new(1.0, BaseKernelGrid::new(2, 0.1, 0.2).unwrap(), net).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![-1.0]]);
        let k = ak_matrix(&h, &x, &x);
        assert!(k[(0, 1)].abs() < 1e-30);
    }

    #[test]
    fn diag_equals_amplitude() {
        let h = hyper(10, 5);
        let x = points(20, 6);
        let d = ak_diag(&h, &x);
        let k = ak_gram(&h, &x);
        for i in 0..20 {
            assert!((d[i] - h.amplitude()).abs() < 1e-10);
            assert!((d[i] - k[(i, i)]).abs() < 1e-12);
        }
        assert!(ak_diag(&h, &Matrix::zeros(0, 2)).is_empty());
    }

    #[test]
    fn zero_network_lengthscale_is_grid_mean() {
        let mut h = hyper(10, 1);
        h.net = WeightNet::zeros(&h.net.layer_sizes);
        let mean = h.grid.lengthscales.iter().sum::<f64>() / 10.0;
        for l in lengthscale_map(&h, &points(4, 3)) {
            assert!((l - mean).abs() < 1e-12);
        }
    }

    fn kernel_objective(t: &Tape, h: &AkHyper, p: Var, x: &Matrix, x2: &Matrix) -> Var {
        let np = h.net.num_params();
        let alpha = t.softplus(t.rows(p, 0, 1));
        let theta = t.rows(p, 1, np);
        let xv = t.reshape(t.rows(p, 1 + np, x.rows() * 2), x.rows(), 2);
        let x2v = t.constant(x2.clone());
        let v = AkVars { alpha, theta };
        let k = ak_matrix_var(t, h, v, xv, x2v);
        let ks = ak_matrix_var(t, h, v, xv, xv);
        let d = ak_diag_var(t, h, v, xv);
        let wts = t.constant(Matrix::from_fn(x.rows(), x2.rows(), |i, j| {
            1.0 + 0.3 * i as f64 - 0.2 * j as f64
        }));
        let a = t.dot(k, wts);
        let b = t.sum_sq(ks);
        t.add(t.add(a, b), t.sum(d))
    }

    #[test]
    fn kernel_gradients_match_finite_differences() {
        let h = hyper(4, 8);
        let x = points(4, 9);
        let x2 = points(3, 10);
        let mut params = vec![h.raw_amplitude];
        params.extend(&h.net.params);
        params.extend(x.as_slice());
        let g = crate::numkit::gradient(|t, p| Ok(kernel_objective(t, &h, p, &x, &x2)), &params)
            .unwrap();
        let fd = central_difference(
            |q| {
                let t = Tape::new();
                let p = t.constant(Matrix::column(q.to_vec()));
                Ok(t.scalar(kernel_objective(&t, &h, p, &x, &x2)))
            },
            &params,
        )
        .unwrap();
        assert!(max_relative_error(&g, &fd) < 1e-6, "{}", max_relative_error(&g, &fd));
    }
}
