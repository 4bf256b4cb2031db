//! Streaming sparse GP with PCD inducing selection. The previous posterior
//! is carried as `v = S'^{-1} m'` and `W = S'^{-1} - K'^{-1}`, which act on
//! the new frame through the cross-covariance `K_{u'u}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gp::{posterior_from_stats, Dataset, HyperVars, Hyperparams, NoiseModel, VariationalState};
use crate::kernels::{ak_diag_var, ak_gram, ak_matrix, ak_matrix_var, AkHyper};
use crate::numkit::{cholesky_jittered, Matrix, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsgpSaved {
    /// Old inducing inputs.
    pub z: Matrix,
    /// `K'_{u'u'}` at the old hyperparameters.
    pub kuu: Matrix,
    pub v: Vec<f64>,
    pub w: Matrix,
}

impl SsgpSaved {
    pub fn prior(dim: usize) -> Self {
        SsgpSaved {
            z: Matrix::zeros(0, dim),
            kuu: Matrix::zeros(0, 0),
            v: Vec::new(),
            w: Matrix::zeros(0, 0),
        }
    }

    /// From a posterior written as `m = K A^{-1} c`, `S = K A^{-1} K` with
    /// `A = K + B`: then `S^{-1} m = K^{-1} c` and
    /// `S^{-1} - K^{-1} = K^{-1} B K^{-1}` without inverting `S`.
    pub fn from_stats(z: &Matrix, kuu: &Matrix, c: &[f64], b: &Matrix) -> Result<Self> {
        if z.rows() == 0 {
            return Ok(SsgpSaved::prior(z.cols()));
        }
        let chol = cholesky_jittered(kuu, 0.0)?;
        let v = chol.solve_vec(c);
        let kb = chol.solve(b);
        let w = chol.solve(&kb.transpose()).symmetrize();
        Ok(SsgpSaved {
            z: z.clone(),
            kuu: kuu.clone(),
            v,
            w,
        })
    }

    /// Directly from `(m, S)` by the defining formulas.
    pub fn from_posterior(z: &Matrix, kuu: &Matrix, m: &[f64], s: &Matrix) -> Result<Self> {
        if z.rows() == 0 {
            return Ok(SsgpSaved::prior(z.cols()));
        }
        let cs = cholesky_jittered(s, 0.0)?;
        let ck = cholesky_jittered(kuu, 0.0)?;
        Ok(SsgpSaved {
            z: z.clone(),
            kuu: kuu.clone(),
            v: cs.solve_vec(m),
            w: cs.inverse().sub(&ck.inverse()).symmetrize(),
        })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// The saved posterior as Gaussian pseudo-observations of `u'`.
#[derive(Clone, Debug)]
pub struct PseudoData {
    pub y_hat: Vec<f64>,
    pub sigma_hat: Matrix,
}

impl PseudoData {
    /// `Sigma = W^{-1}`, `y = Sigma v`. Fails when `W` is singular, which
    /// happens whenever the old frame saw fewer informative points than
    /// inducing inputs.
    pub fn from_saved(saved: &SsgpSaved) -> Result<Self> {
        let sigma_hat = cholesky_jittered(&saved.w, 0.0)?.inverse();
        let y_hat = sigma_hat.mul_vec(&saved.v);
        Ok(PseudoData { y_hat, sigma_hat })
    }
}

/// `(c, B)` of the augmented problem in the frame `z_new`.
fn augmented_stats(
    saved: &SsgpSaved,
    kernel: &AkHyper,
    noise: &NoiseModel,
    z_new: &Matrix,
    batch: &Dataset,
) -> (Vec<f64>, Matrix) {
    let m = z_new.rows();
    let s2 = noise.variance();
    let mut c = vec![0.0; m];
    let mut b = Matrix::zeros(m, m);
    if !batch.is_empty() {
        let kuf = ak_matrix(kernel, z_new, &batch.x);
        c = kuf.mul_vec(&batch.y).iter().map(|v| v / s2).collect();
        b = kuf.matmul_nt(&kuf).scale(1.0 / s2);
    }
    if !saved.is_empty() {
        let kx = ak_matrix(kernel, &saved.z, z_new);
        for (ci, v) in c.iter_mut().zip(kx.tr_mul_vec(&saved.v)) {
            *ci += v;
        }
        b.add_assign(&kx.matmul_tn(&saved.w.matmul(&kx)));
    }
    (c, b.symmetrize())
}

pub fn ssgp_variational_update(
    saved: &SsgpSaved,
    kernel: &AkHyper,
    noise: &NoiseModel,
    z_new: &Matrix,
    batch: &Dataset,
) -> Result<(VariationalState, SsgpSaved)> {
    let kuu = ak_gram(kernel, z_new);
    let (c, b) = augmented_stats(saved, kernel, noise, z_new, batch);
    let (m, s) = posterior_from_stats(&kuu, &c, &b)?;
    let next = SsgpSaved::from_stats(z_new, &kuu, &c, &b)?;
    Ok((
        VariationalState {
            z: z_new.clone(),
            m,
            s,
        },
        next,
    ))
}

/// Online collapsed bound in information form. Terms that depend only on
/// the saved state are dropped, so with a prior saved state it equals the
/// batch collapsed bound.
pub fn ssgp_online_elbo_var(
    t: &Tape,
    h: &Hyperparams,
    hv: HyperVars,
    saved: &SsgpSaved,
    batch: &Dataset,
    z: Var,
) -> Result<Var> {
    let n = batch.len() as f64;
    let mdim = t.shape(z).0;
    let kuu = ak_matrix_var(t, &h.kernel, hv.ak, z, z);
    let luu = t.cholesky(kuu)?;
    let inv_s2 = t.recip(hv.sigma2);

    let mut bt = t.constant(Matrix::zeros(mdim, mdim));
    let mut c = t.constant(Matrix::zeros(mdim, 1));
    let mut value = t.scalar_const(0.0);
    if !batch.is_empty() {
        let x = t.constant(batch.x.clone());
        let y = t.constant(Matrix::column(batch.y.clone()));
        let kuf = ak_matrix_var(t, &h.kernel, hv.ak, z, x);
        let kdiag = ak_diag_var(t, &h.kernel, hv.ak, x);
        bt = t.mul_scalar(t.matmul(kuf, t.transpose(kuf)), inv_s2);
        c = t.mul_scalar(t.matmul(kuf, y), inv_s2);
        let yy = t.mul_scalar(t.sum_sq(y), inv_s2);
        let nls2 = t.scale(t.ln(hv.sigma2), n);
        let a = t.solve_lower(luu, kuf);
        let trace = t.mul_scalar(t.sub(t.sum(kdiag), t.sum_sq(a)), inv_s2);
        value = t.scale(t.add(t.add(yy, nls2), trace), -0.5);
        value = t.offset(value, -0.5 * n * (2.0 * PI).ln());
    }
    if !saved.is_empty() {
        let zo = t.constant(saved.z.clone());
        let w = t.constant(saved.w.clone());
        let v = t.constant(Matrix::column(saved.v.clone()));
        let kx = ak_matrix_var(t, &h.kernel, hv.ak, zo, z);
        bt = t.add(bt, t.matmul_tn(kx, t.matmul(w, kx)));
        c = t.add(c, t.matmul_tn(kx, v));
        // -1/2 tr(W (K_{u'u'} - Q_{u'u'}))
        let koo = ak_matrix_var(t, &h.kernel, hv.ak, zo, zo);
        let g = t.solve_lower(luu, t.transpose(kx));
        let tr = t.sub(t.dot(w, koo), t.dot(g, t.matmul(g, w)));
        value = t.add(value, t.scale(tr, -0.5));
    }
    let atil = t.add(kuu, bt);
    let la = t.cholesky(atil)?;
    let logdet = t.scale(t.sub(t.log_abs_diag_sum(la), t.log_abs_diag_sum(luu)), -1.0);
    let fit = t.scale(t.sum_sq(t.solve_lower(la, c)), 0.5);
    Ok(t.add(value, t.add(logdet, fit)))
}

pub fn ssgp_online_elbo(
    saved: &SsgpSaved,
    kernel: &AkHyper,
    noise: &NoiseModel,
    z_new: &Matrix,
    batch: &Dataset,
) -> Result<f64> {
    let h = Hyperparams {
        kernel: kernel.clone(),
        noise: *noise,
    };
    let t = Tape::new();
    let hv = h.const_vars(&t);
    let z = t.constant(z_new.clone());
    Ok(t.scalar(ssgp_online_elbo_var(&t, &h, hv, saved, batch, z)?))
}
