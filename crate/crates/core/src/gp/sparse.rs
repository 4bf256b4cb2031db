//! Inducing-point approximations: optimal variational parameters,
//! predictions and both forms of the evidence lower bound.

use std::f64::consts::PI;

use super::types::{
    dedup_rows, Dataset, HyperVars, Hyperparams, NoiseModel, PredictiveDist, VariationalState,
    VAR_FLOOR,
};
use crate::error::Result;
use crate::kernels::{ak_diag, ak_diag_var, ak_gram, ak_matrix, ak_matrix_var, AkHyper};
use crate::numkit::{cholesky_jittered, solve_lower, Matrix, Tape, Var};

/// `m` and `S` from the sufficient statistics `a = K_uf y / s2` and
/// `B = K_uf K_fu / s2`, already divided by the noise variance:
///
/// `A = K_uu + B`, `m = K_uu A^{-1} a`, `S = K_uu A^{-1} K_uu`.
pub fn posterior_from_stats(kuu: &Matrix, a: &[f64], b: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let amat = kuu.add(b).symmetrize();
    let chol = cholesky_jittered(&amat, 0.0)?;
    let t = chol.half_solve(kuu);
    let s = t.matmul_tn(&t).symmetrize();
    let la = chol.half_solve(&Matrix::column(a.to_vec()));
    let m = t.tr_mul_vec(la.as_slice());
    Ok((m, s))
}

pub fn sgpr_optimal_variational(
    kernel: &AkHyper,
    noise: &NoiseModel,
    data: &Dataset,
    z: &Matrix,
) -> Result<VariationalState> {
    let z = dedup_rows(z);
    let kuu = ak_gram(kernel, &z);
    let s2 = noise.variance();
    let kuf = ak_matrix(kernel, &z, &data.x);
    let a: Vec<f64> = kuf.mul_vec(&data.y).iter().map(|v| v / s2).collect();
    let b = kuf.matmul_nt(&kuf).scale(1.0 / s2);
    let (m, s) = posterior_from_stats(&kuu, &a, &b)?;
    Ok(VariationalState { z, m, s })
}

/// Predictive distribution of the latent function under `q(u)`.
pub fn sgpr_predict(kernel: &AkHyper, state: &VariationalState, xstar: &Matrix) -> Result<PredictiveDist> {
    Predictor::new(kernel, state)?.predict(xstar)
}

/// Factorised `K_uu` and `K_uu^{-1} m` for repeated predictions.
pub struct Predictor<'a> {
    kernel: &'a AkHyper,
    state: &'a VariationalState,
    luu: Matrix,
    kinv_m: Vec<f64>,
}

impl<'a> Predictor<'a> {
    pub fn new(kernel: &'a AkHyper, state: &'a VariationalState) -> Result<Self> {
        let chol = cholesky_jittered(&ak_gram(kernel, &state.z), 0.0)?;
        let kinv_m = chol.solve_vec(&state.m);
        Ok(Predictor {
            kernel,
            state,
            luu: chol.l,
            kinv_m,
        })
    }

    pub fn predict(&self, xstar: &Matrix) -> Result<PredictiveDist> {
        let kus = ak_matrix(self.kernel, &self.state.z, xstar);
        let mean = kus.tr_mul_vec(&self.kinv_m);
        let a = solve_lower(&self.luu, &kus);
        let w = crate::numkit::solve_lower_t(&self.luu, &a);
        let sw = self.state.s.matmul(&w);
        let q = a.map(|v| v * v).col_sums();
        let r = w.hadamard(&sw).col_sums();
        let var = ak_diag(self.kernel, xstar)
            .iter()
            .zip(q.iter().zip(&r))
            .map(|(k, (q, r))| (k - q + r).max(VAR_FLOOR))
            .collect();
        Ok(PredictiveDist { mean, var })
    }
}

fn div_scalar(t: &Tape, a: Var, s: Var) -> Var {
    t.mul_scalar(a, t.recip(s))
}

/// Collapsed bound `log N(y | 0, Q + s2 I) - tr(K - Q) / (2 s2)`.
pub fn collapsed_elbo_var(
    t: &Tape,
    h: &Hyperparams,
    hv: HyperVars,
    data: &Dataset,
    z: Var,
) -> Result<Var> {
    let n = data.len() as f64;
    let x = t.constant(data.x.clone());
    let kuu = ak_matrix_var(t, &h.kernel, hv.ak, z, z);
    let kuf = ak_matrix_var(t, &h.kernel, hv.ak, z, x);
    let kdiag = ak_diag_var(t, &h.kernel, hv.ak, x);
    let luu = t.cholesky(kuu)?;
    let a = t.solve_lower(luu, kuf);
    let y = t.constant(Matrix::column(data.y.clone()));
    let aat = t.matmul(a, t.transpose(a));
    let bmat = t.add_diag(div_scalar(t, aat, hv.sigma2), t.scalar_const(1.0));
    let lb = t.cholesky(bmat)?;
    let c = div_scalar(t, t.solve_lower(lb, t.matmul(a, y)), hv.sigma2);
    let yy = div_scalar(t, t.sum_sq(y), hv.sigma2);
    let quad = t.scale(t.sub(yy, t.sum_sq(c)), -0.5);
    let logdet = t.add(
        t.scale(t.ln(hv.sigma2), 0.5 * n),
        t.log_abs_diag_sum(lb),
    );
    let fit = t.offset(t.sub(quad, logdet), -0.5 * n * (2.0 * PI).ln());
    let trace = t.sub(t.sum(kdiag), t.sum_sq(a));
    let penalty = t.scale(div_scalar(t, trace, hv.sigma2), -0.5);
    Ok(t.add(fit, penalty))
}

pub fn collapsed_elbo(kernel: &AkHyper, noise: &NoiseModel, data: &Dataset, z: &Matrix) -> Result<f64> {
    let h = Hyperparams {
        kernel: kernel.clone(),
        noise: *noise,
    };
    let t = Tape::new();
    let hv = h.const_vars(&t);
    let zv = t.constant(z.clone());
    Ok(t.scalar(collapsed_elbo_var(&t, &h, hv, data, zv)?))
}

/// Uncollapsed bound on a batch with the likelihood term multiplied by
/// `scale`. `ls` is a lower-triangular factor of `S`.
pub fn svgp_elbo_var(
    t: &Tape,
    h: &Hyperparams,
    hv: HyperVars,
    batch: &Dataset,
    z: Var,
    m: Var,
    ls: Var,
    scale: f64,
) -> Result<Var> {
    let nb = batch.len() as f64;
    let mdim = t.shape(z).0 as f64;
    let kuu = ak_matrix_var(t, &h.kernel, hv.ak, z, z);
    let luu = t.cholesky(kuu)?;
    // KL(q || p)
    let lm = t.solve_lower(luu, m);
    let ll = t.solve_lower(luu, ls);
    let kl_tr = t.add(t.sum_sq(ll), t.sum_sq(lm));
    let kl_ld = t.scale(t.sub(t.log_abs_diag_sum(luu), t.log_abs_diag_sum(ls)), 2.0);
    let kl = t.scale(t.offset(t.add(kl_tr, kl_ld), -mdim), 0.5);
    if batch.is_empty() {
        return Ok(t.neg(kl));
    }
    let x = t.constant(batch.x.clone());
    let kuf = ak_matrix_var(t, &h.kernel, hv.ak, z, x);
    let kdiag = ak_diag_var(t, &h.kernel, hv.ak, x);
    let a = t.solve_lower(luu, kuf);
    let w = t.solve_lower_t(luu, a);
    let mu = t.matmul_tn(a, lm);
    let lw = t.matmul_tn(ls, w);
    let nu = t.add(
        t.sub(t.sum(kdiag), t.sum_sq(a)),
        t.sum_sq(lw),
    );
    let y = t.constant(Matrix::column(batch.y.clone()));
    let resid = t.sum_sq(t.sub(y, mu));
    let inner = div_scalar(t, t.add(resid, nu), hv.sigma2);
    let ll_sum = t.add(
        t.scale(inner, -0.5),
        t.scale(t.ln(hv.sigma2), -0.5 * nb),
    );
    let ll_sum = t.offset(ll_sum, -0.5 * nb * (2.0 * PI).ln());
    Ok(t.sub(t.scale(ll_sum, scale), kl))
}

pub fn svgp_elbo(
    kernel: &AkHyper,
    noise: &NoiseModel,
    batch: &Dataset,
    state: &VariationalState,
    scale: f64,
) -> Result<f64> {
    let h = Hyperparams {
        kernel: kernel.clone(),
        noise: *noise,
    };
    let t = Tape::new();
    let hv = h.const_vars(&t);
    let z = t.constant(state.z.clone());
    let m = t.constant(Matrix::column(state.m.clone()));
    let ls = t.constant(cholesky_jittered(&state.s, 0.0)?.l);
    Ok(t.scalar(svgp_elbo_var(&t, &h, hv, batch, z, m, ls, scale)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BaseKernelGrid, WeightNet};

    fn flat_kernel(alpha: f64) -> AkHyper {
        let grid = BaseKernelGrid::new(1, 1e9, 1e9).unwrap();
        AkHyper::new(alpha, grid, WeightNet::zeros(&[2, 2, 1])).unwrap()
    }

    #[test]
    fn empty_data_gives_prior() {
        let k = flat_kernel(1.0);
        let grid = BaseKernelGrid::new(1, 0.3, 0.3).unwrap();
        let k2 = AkHyper::new(1.0, grid, k.net.clone()).unwrap();
        let z = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.1]]);
        let st = sgpr_optimal_variational(&k2, &NoiseModel::new(0.3).unwrap(), &Dataset::empty(2), &z)
            .unwrap();
        assert!(st.m.iter().all(|v| *v == 0.0));
        assert!(st.s.max_abs_diff(&ak_gram(&k2, &z)) < 1e-12);
    }

    #[test]
    fn scalar_case() {
        let (alpha, sigma, y) = (2.0, 0.5, 1.5);
        let z = Matrix::from_rows(&[vec![0.2, 0.2]]);
        let data = Dataset::new(z.clone(), vec![y]).unwrap();
        let st = sgpr_optimal_variational(&flat_kernel(alpha), &NoiseModel::new(sigma).unwrap(), &data, &z)
            .unwrap();
        let s2 = sigma * sigma;
        assert!((st.m[0] - alpha * y / (alpha + s2)).abs() < 1e-9);
        assert!((st.s[(0, 0)] - alpha * s2 / (alpha + s2)).abs() < 1e-9);
    }

    #[test]
    fn prior_state_predicts_prior() {
        let grid = BaseKernelGrid::new(2, 0.2, 0.6).unwrap();
        let k = AkHyper::new(1.4, grid, WeightNet::zeros(&[2, 3, 2])).unwrap();
        let z = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.4, -0.2], vec![-0.5, 0.3]]);
        let st = VariationalState {
            m: vec![0.0; 3],
            s: ak_gram(&k, &z),
            z,
        };
        let xs = Matrix::from_rows(&[vec![0.1, 0.1], vec![0.9, -0.9]]);
        let p = sgpr_predict(&k, &st, &xs).unwrap();
        for i in 0..2 {
            assert_eq!(p.mean[i], 0.0);
            assert!((p.var[i] - k.amplitude()).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_vanishes_at_prior() {
        let grid = BaseKernelGrid::new(2, 0.2, 0.6).unwrap();
        let k = AkHyper::new(1.4, grid, WeightNet::zeros(&[2, 3, 2])).unwrap();
        let z = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.4, -0.2]]);
        let st = VariationalState {
            m: vec![0.0; 2],
            s: ak_gram(&k, &z),
            z,
        };
        let e = svgp_elbo(&k, &NoiseModel::new(0.3).unwrap(), &Dataset::empty(2), &st, 1.0).unwrap();
        assert!(e.abs() < 1e-10);
    }
}
