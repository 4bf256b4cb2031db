//! Standardized error metrics and grid evaluation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gp::{FieldPredictor, PredictiveDist};
use crate::numkit::Matrix;
use crate::sim::EnvGrid;

/// Mean squared error over the population variance of `targets`.
pub fn smse(pred_mean: &[f64], targets: &[f64]) -> Result<f64> {
    if pred_mean.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred_mean.len(),
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if targets.len() < 2 || !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mse = pred_mean.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    Ok(mse / var)
}

fn neg_log_density(y: f64, mean: f64, var: f64) -> f64 {
    0.5 * (2.0 * PI * var).ln() + 0.5 * (y - mean).powi(2) / var
}

/// Mean negative log predictive density minus that of the naive Gaussian
/// `N(train_mean, train_var)`.
pub fn msll(pred_mean: &[f64], pred_var: &[f64], targets: &[f64], train_mean: f64, train_var: f64) -> Result<f64> {
    if pred_mean.len() != targets.len() || pred_var.len() != targets.len() {
        return Err(Error::Shape("msll inputs differ in length".into()));
    }
    if targets.is_empty() {
        return Err(Error::Shape("msll needs at least one target".into()));
    }
    if !(train_var > 0.0) || pred_var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveVariance);
    }
    let total: f64 = targets
        .iter()
        .zip(pred_mean.iter().zip(pred_var))
        .map(|(&y, (&m, &v))| neg_log_density(y, m, v) - neg_log_density(y, train_mean, train_var))
        .sum();
    Ok(total / targets.len() as f64)
}

/// Predicts a constant Gaussian everywhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NaiveModel {
    pub mean: f64,
    pub var: f64,
}

impl NaiveModel {
    /// Moments of the training targets (population variance).
    pub fn fit(y: &[f64]) -> Result<Self> {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if y.is_empty() || !(var > 0.0) {
            return Err(Error::ZeroVariance);
        }
        Ok(NaiveModel { mean, var })
    }
}

impl FieldPredictor for NaiveModel {
    fn predict_observed(&self, x: &Matrix) -> Result<PredictiveDist> {
        Ok(PredictiveDist {
            mean: vec![self.mean; x.rows()],
            var: vec![self.var; x.rows()],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub smse: f64,
    pub msll: f64,
}

/// SMSE and MSLL against the noiseless grid nodes taken with `stride`.
/// `naive` supplies the reference moments for MSLL.
pub fn evaluate_model(model: &dyn FieldPredictor, env: &EnvGrid, stride: usize, naive: &NaiveModel) -> Result<Scores> {
    let (x, y) = env.subsample(stride);
    let pred = model.predict_observed(&x)?;
    Ok(Scores {
        smse: smse(&pred.mean, &y)?,
        msll: msll(&pred.mean, &pred.var, &y, naive.mean, naive.var)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_smse() {
        assert_eq!(smse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(smse(&[1.0, -1.0], &[1.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_msll() {
        let v = msll(&[0.0], &[1.0], &[0.0], 0.0, 4.0).unwrap();
        assert!((v + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(smse(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::ZeroVariance)));
        assert!(matches!(msll(&[0.0], &[0.0], &[1.0], 0.0, 1.0), Err(Error::NonPositiveVariance)));
    }
}
