//! Active-mapping simulator: terrain, robot, sensor, planners and the
//! mission loop.

mod env;
mod mission;
mod pilot;
mod planner;
mod robot;
mod sensor;

pub use env::{elevation_at, is_rough, synth_env, EnvGrid, EnvKind, Extent, SynthSpec};
pub use mission::{run_mission, EpochRecord, MissionConfig, MissionLog, MissionOutcome, PilotSpec};
pub use pilot::{bezier_pilot, bezier_points, de_casteljau, random_pilot, zigzag_controls};
pub use planner::{
    gaussian_entropy, max_entropy_planner, pick_waypoint, random_planner, score_candidates, PlannerConfig,
    PlannerKind,
};
pub use robot::{dubins_step, waypoint_controller, wrap_angle, Command, Controller, RobotState, Vehicle};
pub use sensor::{sense, Sample, SensorClock, SensorSpec};
