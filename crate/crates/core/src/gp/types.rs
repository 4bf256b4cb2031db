use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{AkHyper, AkVars};
use crate::numkit::tape::{softplus, softplus_inv};
use crate::numkit::{Matrix, Tape, Var};

/// Inputs (one row per point) and scalar targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        Ok(Dataset { x, y })
    }

    pub fn empty(dim: usize) -> Self {
        Dataset {
            x: Matrix::zeros(0, dim),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn extend(&mut self, other: &Dataset) {
        for i in 0..other.len() {
            self.x.push_row(other.x.row(i));
        }
        self.y.extend_from_slice(&other.y);
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        self.x.push_row(x);
        self.y.push(y);
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn concat(parts: &[Dataset]) -> Dataset {
        let dim = parts.first().map_or(0, Dataset::dim);
        let mut out = Dataset::empty(dim);
        for p in parts {
            out.extend(p);
        }
        out
    }
}

/// Gaussian observation noise, stored as the unconstrained value whose
/// softplus is the standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub raw_sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("noise std {sigma} must be positive")));
        }
        Ok(NoiseModel {
            raw_sigma: softplus_inv(sigma),
        })
    }

    pub fn sigma(&self) -> f64 {
        softplus(self.raw_sigma)
    }

    pub fn variance(&self) -> f64 {
        let s = self.sigma();
        s * s
    }
}

/// Everything the M-step trains: kernel amplitude, noise and network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub kernel: AkHyper,
    pub noise: NoiseModel,
}

/// Tape handles derived from a flat hyperparameter vector.
#[derive(Clone, Copy, Debug)]
pub struct HyperVars {
    pub ak: AkVars,
    /// Noise variance, 1x1.
    pub sigma2: Var,
}

impl Hyperparams {
    /// Length of [`Hyperparams::to_vec`].
    pub fn num_params(&self) -> usize {
        2 + self.kernel.net.num_params()
    }

    /// `[raw amplitude, raw noise std, network parameters...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.push(self.kernel.raw_amplitude);
        v.push(self.noise.raw_sigma);
        v.extend_from_slice(&self.kernel.net.params);
        v
    }

    pub fn set_from_slice(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "hyperparameter vector length");
        self.kernel.raw_amplitude = p[0];
        self.noise.raw_sigma = p[1];
        self.kernel.net.params.copy_from_slice(&p[2..]);
    }

    /// Splits a `num_params x 1` node into constrained tape quantities.
    pub fn vars(&self, tape: &Tape, p: Var) -> HyperVars {
        let alpha = tape.softplus(tape.rows(p, 0, 1));
        let sigma = tape.softplus(tape.rows(p, 1, 1));
        let theta = tape.rows(p, 2, self.kernel.net.num_params());
        HyperVars {
            ak: AkVars { alpha, theta },
            sigma2: tape.square(sigma),
        }
    }

    /// Constant (non-differentiated) tape handles.
    pub fn const_vars(&self, tape: &Tape) -> HyperVars {
        let p = tape.constant(Matrix::column(self.to_vec()));
        self.vars(tape, p)
    }
}

/// Gaussian posterior over the inducing outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub z: Matrix,
    pub m: Vec<f64>,
    pub s: Matrix,
}

impl VariationalState {
    pub fn num_inducing(&self) -> usize {
        self.z.rows()
    }
}

/// Variance floor applied to every predictive variance.
pub const VAR_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDist {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl PredictiveDist {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Anything that predicts noisy observations at raw-unit inputs.
pub trait FieldPredictor {
    /// Predictive distribution of a new observation, in raw target units.
    fn predict_observed(&self, x: &Matrix) -> crate::error::Result<PredictiveDist>;
}

/// Drops exact duplicate rows, keeping first occurrences in order.
pub fn dedup_rows(z: &Matrix) -> Matrix {
    let mut keep: Vec<usize> = Vec::with_capacity(z.rows());
    for i in 0..z.rows() {
        if !keep.iter().any(|&k| z.row(k) == z.row(i)) {
            keep.push(i);
        }
    }
    if keep.len() == z.rows() {
        z.clone()
    } else {
        z.select_rows(&keep)
    }
}
