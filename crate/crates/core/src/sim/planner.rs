//! Waypoint selection.

use serde::{Deserialize, Serialize};

use super::env::Extent;
use super::robot::RobotState;
use crate::error::Result;
use crate::gp::FieldPredictor;
use crate::numkit::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    MaxEntropy,
    Random,
}

impl PlannerKind {
    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::MaxEntropy => "max-entropy",
            PlannerKind::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub n_candidates: usize,
    /// Weight of the normalized travel distance against normalized entropy.
    pub distance_weight: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n_candidates: 2000,
            distance_weight: 0.3,
        }
    }
}

/// Differential entropy of a Gaussian with variance `var`.
pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln()
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        v.iter().map(|x| (x - lo) / range).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Index of the best candidate under
/// `minmax(entropy) - beta * minmax(distance)`. Ties go to the lowest index.
pub fn score_candidates(variances: &[f64], distances: &[f64], beta: f64) -> usize {
    let h: Vec<f64> = variances.iter().map(|&v| gaussian_entropy(v)).collect();
    let nh = min_max(&h);
    let nd = min_max(distances);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..nh.len() {
        let s = nh[i] - beta * nd[i];
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    if beta == 0.0 && nh.iter().all(|&v| v == 0.0) {
        log::warn!("all candidate variances equal; choosing the first candidate");
    }
    best
}

/// Scores `candidates` and returns the winner.
pub fn pick_waypoint(
    model: &dyn FieldPredictor,
    s: &RobotState,
    candidates: &[[f64; 2]],
    beta: f64,
) -> Result<[f64; 2]> {
    let mut x = Matrix::zeros(0, 2);
    for c in candidates {
        x.push_row(c);
    }
    let pred = model.predict_observed(&x)?;
    let dist: Vec<f64> = candidates.iter().map(|&c| s.distance_to(c)).collect();
    Ok(candidates[score_candidates(&pred.var, &dist, beta)])
}

pub fn max_entropy_planner(
    model: &dyn FieldPredictor,
    s: &RobotState,
    extent: &Extent,
    cfg: &PlannerConfig,
    rng: &mut RngStream,
) -> Result<[f64; 2]> {
    let candidates: Vec<[f64; 2]> = (0..cfg.n_candidates.max(1)).map(|_| extent.sample(rng)).collect();
    pick_waypoint(model, s, &candidates, cfg.distance_weight)
}

pub fn random_planner(extent: &Extent, rng: &mut RngStream) -> [f64; 2] {
    extent.sample(rng)
}
