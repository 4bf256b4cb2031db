//! Dubins-car kinematics and a proportional heading controller.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::env::Extent;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Radians in `[-pi, pi)`.
    pub heading: f64,
    pub time: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        RobotState {
            x,
            y,
            heading: wrap_angle(heading),
            time: 0.0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, w: [f64; 2]) -> f64 {
        (w[0] - self.x).hypot(w[1] - self.y)
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Actuator limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub v_max: f64,
    pub turn_rate_max: f64,
}

impl Default for Vehicle {
    fn default() -> Self {
        Vehicle {
            v_max: 1.0,
            turn_rate_max: 1.0,
        }
    }
}

/// One forward-Euler step with clamped controls; the position is clamped to
/// the extent.
pub fn dubins_step(s: &RobotState, v: f64, omega: f64, dt: f64, vehicle: &Vehicle, extent: &Extent) -> RobotState {
    debug_assert!(dt > 0.0);
    let v = v.clamp(0.0, vehicle.v_max);
    let omega = omega.clamp(-vehicle.turn_rate_max, vehicle.turn_rate_max);
    let (x, y) = extent.clamp(s.x + v * s.heading.cos() * dt, s.y + v * s.heading.sin() * dt);
    RobotState {
        x,
        y,
        heading: wrap_angle(s.heading + omega * dt),
        time: s.time + dt,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub heading_gain: f64,
    pub arrival_radius: f64,
}

impl Default for Controller {
    fn default() -> Self {
        Controller {
            heading_gain: 2.0,
            arrival_radius: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Command {
    pub v: f64,
    pub omega: f64,
    pub arrived: bool,
}

pub fn waypoint_controller(s: &RobotState, w: [f64; 2], ctrl: &Controller, vehicle: &Vehicle) -> Command {
    if s.distance_to(w) <= ctrl.arrival_radius {
        return Command {
            v: 0.0,
            omega: 0.0,
            arrived: true,
        };
    }
    let bearing = (w[1] - s.y).atan2(w[0] - s.x);
    let err = wrap_angle(bearing - s.heading);
    let omega = (ctrl.heading_gain * err).clamp(-vehicle.turn_rate_max, vehicle.turn_rate_max);
    Command {
        v: vehicle.v_max * err.cos().max(0.0),
        omega,
        arrived: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn straight_and_spin() {
        let e = Extent::square(10.0);
        let v = Vehicle::default();
        let s = RobotState::new(5.0, 5.0, 0.0);
        let n = dubins_step(&s, 1.0, 0.0, 0.1, &v, &e);
        assert!((n.x - 5.1).abs() < 1e-12 && n.y == 5.0);
        let n = dubins_step(&s, 0.0, 0.5, 0.1, &v, &e);
        assert_eq!((n.x, n.y), (5.0, 5.0));
        assert!((n.heading - 0.05).abs() < 1e-12);
    }

    #[test]
    fn controls_are_clamped() {
        let e = Extent::square(10.0);
        let v = Vehicle::default();
        let n = dubins_step(&RobotState::new(5.0, 5.0, 0.0), 7.0, 9.0, 0.1, &v, &e);
        assert!((n.x - 5.1).abs() < 1e-12);
        assert!((n.heading - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dead_ahead_and_behind() {
        let v = Vehicle::default();
        let c = Controller::default();
        let s = RobotState::new(0.0, 0.0, 0.0);
        let ahead = waypoint_controller(&s, [5.0, 0.0], &c, &v);
        assert_eq!((ahead.v, ahead.omega), (1.0, 0.0));
        let behind = waypoint_controller(&s, [-5.0, 0.01], &c, &v);
        assert_eq!(behind.v, 0.0);
        assert_eq!(behind.omega.abs(), v.turn_rate_max);
    }
}
