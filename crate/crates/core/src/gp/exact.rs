//! Exact GP regression. Cubic in N, so only used as a reference.

use std::f64::consts::PI;

use super::types::{Dataset, HyperVars, Hyperparams, NoiseModel, PredictiveDist, VAR_FLOOR};
use crate::error::{Error, Result};
use crate::kernels::{ak_diag, ak_gram, ak_matrix, ak_matrix_var, AkHyper};
use crate::numkit::{cholesky_jittered, gradient, Matrix, Tape, Var};

/// Largest training set accepted by the exact routines.
pub const ORACLE_LIMIT: usize = 2000;

fn check_size(n: usize) -> Result<()> {
    if n > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            n,
            limit: ORACLE_LIMIT,
        });
    }
    if n == 0 {
        return Err(Error::Shape("exact GP needs at least one training point".into()));
    }
    Ok(())
}

pub fn gpr_predict(
    kernel: &AkHyper,
    noise: &NoiseModel,
    data: &Dataset,
    xstar: &Matrix,
) -> Result<PredictiveDist> {
    check_size(data.len())?;
    let mut kyy = ak_gram(kernel, &data.x);
    kyy.add_diag(noise.variance());
    let chol = cholesky_jittered(&kyy, 0.0)?;
    let kfs = ak_matrix(kernel, &data.x, xstar);
    let alpha = chol.solve_vec(&data.y);
    let mean = kfs.tr_mul_vec(&alpha);
    let v = chol.half_solve(&kfs);
    let sq = v.map(|a| a * a).col_sums();
    let var = ak_diag(kernel, xstar)
        .iter()
        .zip(sq)
        .map(|(k, q)| (k - q).max(VAR_FLOOR))
        .collect();
    Ok(PredictiveDist { mean, var })
}

/// Log marginal likelihood as a tape expression.
pub fn gpr_log_evidence_var(
    tape: &Tape,
    h: &Hyperparams,
    hv: HyperVars,
    data: &Dataset,
) -> Result<Var> {
    check_size(data.len())?;
    let n = data.len();
    let x = tape.constant(data.x.clone());
    let kff = ak_matrix_var(tape, &h.kernel, hv.ak, x, x);
    let kyy = tape.add_diag(kff, hv.sigma2);
    let l = tape.cholesky(kyy)?;
    let y = tape.constant(Matrix::column(data.y.clone()));
    let a = tape.solve_lower(l, y);
    let quad = tape.scale(tape.sum_sq(a), -0.5);
    let logdet = tape.neg(tape.log_abs_diag_sum(l));
    Ok(tape.offset(tape.add(quad, logdet), -0.5 * n as f64 * (2.0 * PI).ln()))
}

pub fn gpr_log_evidence(kernel: &AkHyper, noise: &NoiseModel, data: &Dataset) -> Result<f64> {
    let h = Hyperparams {
        kernel: kernel.clone(),
        noise: *noise,
    };
    let tape = Tape::new();
    let hv = h.const_vars(&tape);
    let v = gpr_log_evidence_var(&tape, &h, hv, data)?;
    Ok(tape.scalar(v))
}

/// Gradient of the log evidence wrt [`Hyperparams::to_vec`].
pub fn gpr_log_evidence_grad(h: &Hyperparams, data: &Dataset) -> Result<Vec<f64>> {
    gradient(
        |t, p| {
            let hv = h.vars(t, p);
            gpr_log_evidence_var(t, h, hv, data)
        },
        &h.to_vec(),
    )
}
