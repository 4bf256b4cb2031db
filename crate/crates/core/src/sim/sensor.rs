//! Noisy single-beam elevation sensor.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::env::{elevation_at, EnvGrid};
use super::robot::RobotState;
use crate::error::Result;
use crate::numkit::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    /// Samples per second.
    pub rate: f64,
    pub noise_std: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            rate: 3.0,
            noise_std: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// One reading at the robot position. The noise depends only on
/// `(seed, tick)`.
pub fn sense(env: &EnvGrid, s: &RobotState, spec: &SensorSpec, seed: u64, tick: u64) -> Result<Sample> {
    let truth = elevation_at(env, s.x, s.y)?;
    let z: f64 = StandardNormal.sample(&mut RngStream::at(seed, "sensor", tick));
    Ok(Sample {
        x: s.x,
        y: s.y,
        value: truth + spec.noise_std * z,
    })
}

/// Decides on which control ticks the sensor fires so that the long-run rate
/// equals `rate` exactly.
#[derive(Clone, Debug)]
pub struct SensorClock {
    per_tick: f64,
    phase: f64,
}

impl SensorClock {
    pub fn new(rate: f64, control_hz: f64) -> Self {
        SensorClock {
            per_tick: rate / control_hz,
            phase: 0.0,
        }
    }

    /// Advances one control tick; true when a reading is due.
    pub fn tick(&mut self) -> bool {
        self.phase += self.per_tick;
        if self.phase >= 1.0 - 1e-12 {
            self.phase -= 1.0;
            true
        } else {
            false
        }
    }
}
