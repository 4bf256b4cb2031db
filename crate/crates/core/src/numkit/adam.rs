//! Adam, written as gradient *ascent*: parameters move along `+grad`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn dim(&self) -> usize {
        self.first_moment.len()
    }

    /// Clears the moments if the parameter dimension changed.
    pub fn fit_dim(&mut self, dim: usize) {
        if self.dim() != dim {
            *self = AdamState::new(dim, self.learning_rate);
        }
    }

    /// One bias-corrected ascent step, in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.dim(), "adam parameter dimension");
        assert_eq!(grad.len(), self.dim(), "adam gradient dimension");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.first_moment[i] / c1;
            let vhat = self.second_moment[i] / c2;
            params[i] += self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, params: &[f64], grad: &[f64]) -> (AdamState, Vec<f64>) {
    let mut s = state.clone();
    let mut p = params.to_vec();
    s.step(&mut p, grad);
    (s, p)
}
