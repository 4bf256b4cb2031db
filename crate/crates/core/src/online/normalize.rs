//! Affine input scaling and target standardization, fitted once on the
//! pilot survey.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::numkit::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            x_min: vec![-1.0; dim],
            x_max: vec![1.0; dim],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    /// Inputs span `[-1, 1]` per dimension over `data`; targets get zero
    /// mean and unit (population) standard deviation.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let d = data.dim();
        let mut x_min = vec![f64::INFINITY; d];
        let mut x_max = vec![f64::NEG_INFINITY; d];
        for i in 0..data.len() {
            for (k, v) in data.x.row(i).iter().enumerate() {
                x_min[k] = x_min[k].min(*v);
                x_max[k] = x_max[k].max(*v);
            }
        }
        if data.len() < 2 || x_min.iter().zip(&x_max).any(|(a, b)| !(b > a)) {
            return Err(Error::Config(
                "pilot inputs must span a nonzero range in every dimension".into(),
            ));
        }
        let n = data.len() as f64;
        let y_mean = data.y.iter().sum::<f64>() / n;
        let var = data.y.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::ZeroVariance);
        }
        Ok(Normalizer {
            x_min,
            x_max,
            y_mean,
            y_std: var.sqrt(),
        })
    }

    /// Like [`Normalizer::fit`] but with the input box given explicitly.
    pub fn fit_with_bounds(data: &Dataset, x_min: Vec<f64>, x_max: Vec<f64>) -> Result<Self> {
        if x_min.len() != data.dim() || x_max.len() != data.dim() {
            return Err(Error::Shape("normalizer bounds do not match the input dimension".into()));
        }
        if x_min.iter().zip(&x_max).any(|(a, b)| !(b > a)) {
            return Err(Error::Config("normalizer bounds must have a nonzero range".into()));
        }
        let fitted = Normalizer::fit(data)?;
        Ok(Normalizer { x_min, x_max, ..fitted })
    }

    pub fn dim(&self) -> usize {
        self.x_min.len()
    }

    pub fn x(&self, raw: &Matrix) -> Matrix {
        Matrix::from_fn(raw.rows(), raw.cols(), |i, k| {
            2.0 * (raw[(i, k)] - self.x_min[k]) / (self.x_max[k] - self.x_min[k]) - 1.0
        })
    }

    pub fn x_inverse(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, k| {
            (x[(i, k)] + 1.0) * 0.5 * (self.x_max[k] - self.x_min[k]) + self.x_min[k]
        })
    }

    pub fn y(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|v| (v - self.y_mean) / self.y_std).collect()
    }

    pub fn y_inverse(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.y_std + self.y_mean).collect()
    }

    pub fn var_inverse(&self, var: &[f64]) -> Vec<f64> {
        let s2 = self.y_std * self.y_std;
        var.iter().map(|v| v * s2).collect()
    }

    pub fn dataset(&self, raw: &Dataset) -> Dataset {
        Dataset {
            x: self.x(&raw.x),
            y: self.y(&raw.y),
        }
    }
}
