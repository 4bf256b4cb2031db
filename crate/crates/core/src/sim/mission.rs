//! The plan, drive, sample and update loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::env::EnvGrid;
use super::pilot::{bezier_pilot, random_pilot};
use super::planner::{max_entropy_planner, random_planner, PlannerConfig, PlannerKind};
use super::robot::{dubins_step, waypoint_controller, Controller, RobotState, Vehicle};
use super::sensor::{sense, SensorClock, SensorSpec};
use crate::bench::{evaluate_model, NaiveModel};
use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::numkit::{take_jitter_escalations, RngStream};
use crate::online::{EmConfig, KernelConfig, Method, Normalizer, OnlineModel};

/// Points on the pilot Bezier curve used as intermediate waypoints.
const PILOT_WAYPOINTS: usize = 50;
/// Consecutive epochs without a new sample before the mission is abandoned.
const MAX_EMPTY_EPOCHS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PilotSpec {
    /// Drive along a Bezier curve until `samples` readings are collected.
    Bezier { control_points: usize, samples: usize },
    /// Read at `points` uniformly random locations.
    Random { points: usize },
}

impl PilotSpec {
    pub fn samples(&self) -> usize {
        match *self {
            PilotSpec::Bezier { samples, .. } => samples,
            PilotSpec::Random { points } => points,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PilotSpec::Bezier { .. } => "bezier",
            PilotSpec::Random { .. } => "random",
        }
    }
}

impl Default for PilotSpec {
    fn default() -> Self {
        PilotSpec::Bezier {
            control_points: 15,
            samples: 150,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    pub method: Method,
    pub seed: u64,
    /// Total number of sensor readings, pilot included.
    pub budget: usize,
    pub pilot: PilotSpec,
    pub planner: PlannerKind,
    pub n_candidates: usize,
    pub distance_weight: f64,
    pub control_hz: f64,
    pub v_max: f64,
    pub turn_rate_max: f64,
    pub heading_gain: f64,
    pub arrival_radius: f64,
    pub sensor: SensorSpec,
    pub em: EmConfig,
    pub kernel: KernelConfig,
    pub eval_stride: usize,
    /// Wall-clock timings make logs run-dependent, so they are opt-in.
    pub record_timings: bool,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            method: Method::Poam,
            seed: 0,
            budget: 1200,
            pilot: PilotSpec::default(),
            planner: PlannerKind::MaxEntropy,
            n_candidates: 2000,
            distance_weight: 0.3,
            control_hz: 10.0,
            v_max: 1.0,
            turn_rate_max: 1.0,
            heading_gain: 2.0,
            arrival_radius: 0.5,
            sensor: SensorSpec::default(),
            em: EmConfig::default(),
            kernel: KernelConfig::default(),
            eval_stride: 2,
            record_timings: false,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.pilot.samples() < 2 {
            return bad("the pilot survey needs at least two samples");
        }
        if self.budget < self.pilot.samples() {
            return bad("budget is smaller than the pilot survey");
        }
        if let PilotSpec::Bezier { control_points, .. } = self.pilot {
            if control_points < 2 {
                return bad("a Bezier pilot needs at least two control points");
            }
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if !(self.distance_weight >= 0.0) {
            return bad("distance_weight must be nonnegative");
        }
        for (name, v) in [
            ("control_hz", self.control_hz),
            ("v_max", self.v_max),
            ("turn_rate_max", self.turn_rate_max),
            ("heading_gain", self.heading_gain),
            ("arrival_radius", self.arrival_radius),
            ("sensor.rate", self.sensor.rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.sensor.noise_std >= 0.0) {
            return bad("sensor.noise_std must be nonnegative");
        }
        if self.eval_stride == 0 {
            return bad("eval_stride must be at least 1");
        }
        self.em.validate()
    }

    pub fn vehicle(&self) -> Vehicle {
        Vehicle {
            v_max: self.v_max,
            turn_rate_max: self.turn_rate_max,
        }
    }

    pub fn controller(&self) -> Controller {
        Controller {
            heading_gain: self.heading_gain,
            arrival_radius: self.arrival_radius,
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            n_candidates: self.n_candidates,
            distance_weight: self.distance_weight,
        }
    }
}

/// One line of the mission log. Epoch 0 is the pilot survey.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub waypoint: Option<[f64; 2]>,
    /// `[x, y, heading]` at the end of the epoch.
    pub pose: [f64; 3],
    pub time: f64,
    pub samples_added: usize,
    pub samples_total: usize,
    pub smse: Option<f64>,
    pub msll: Option<f64>,
    pub esec: Option<f64>,
    pub msec: Option<f64>,
    pub inducing: usize,
    pub jitter: u64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MissionLog {
    pub records: Vec<EpochRecord>,
}

impl MissionLog {
    /// Newline-delimited JSON, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("records serialize"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        Ok(MissionLog { records })
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn total_samples(&self) -> usize {
        self.records.last().map_or(0, |r| r.samples_total)
    }
}

pub struct MissionOutcome {
    pub log: MissionLog,
    pub model: OnlineModel,
    /// Raw readings per log record: the pilot survey, then one batch per
    /// epoch.
    pub batches: Vec<Dataset>,
}

/// Robot, sensor clock and tick counter shared by the pilot and the epochs.
struct Rover<'a> {
    env: &'a EnvGrid,
    cfg: &'a MissionConfig,
    state: RobotState,
    clock: SensorClock,
    tick: u64,
}

impl Rover<'_> {
    fn read(&mut self, out: &mut Dataset) -> Result<()> {
        let s = sense(self.env, &self.state, &self.cfg.sensor, self.cfg.seed, self.tick)?;
        out.push(&[s.x, s.y], s.value);
        Ok(())
    }

    /// Drives towards `w` until arrival, until `out` holds `limit` samples,
    /// or until a generous time bound elapses. Returns true on arrival.
    fn drive_to(&mut self, w: [f64; 2], out: &mut Dataset, limit: usize) -> Result<bool> {
        let vehicle = self.cfg.vehicle();
        let ctrl = self.cfg.controller();
        let dt = 1.0 / self.cfg.control_hz;
        let bound = 3.0 * self.state.distance_to(w) / vehicle.v_max
            + 2.0 * std::f64::consts::PI / vehicle.turn_rate_max
            + 1.0;
        let start = self.state.time;
        while out.len() < limit {
            let cmd = waypoint_controller(&self.state, w, &ctrl, &vehicle);
            if cmd.arrived {
                return Ok(true);
            }
            if self.state.time - start > bound {
                log::warn!("waypoint ({:.2}, {:.2}) not reached in {bound:.1} s", w[0], w[1]);
                return Ok(false);
            }
            self.state = dubins_step(&self.state, cmd.v, cmd.omega, dt, &vehicle, self.env.extent());
            self.tick += 1;
            if self.clock.tick() {
                self.read(out)?;
            }
        }
        Ok(false)
    }
}

fn pilot_survey(rover: &mut Rover<'_>, rng: &mut RngStream) -> Result<Dataset> {
    let extent = *rover.env.extent();
    let n = rover.cfg.pilot.samples();
    let mut data = Dataset::empty(2);
    match rover.cfg.pilot {
        PilotSpec::Random { points } => {
            for p in random_pilot(&extent, points, rng) {
                rover.state = RobotState { x: p[0], y: p[1], ..rover.state };
                rover.tick += 1;
                rover.read(&mut data)?;
            }
        }
        PilotSpec::Bezier { control_points, .. } => {
            let mut path = bezier_pilot(control_points, &extent, PILOT_WAYPOINTS);
            let heading = (path[1][1] - path[0][1]).atan2(path[1][0] - path[0][0]);
            rover.state = RobotState::new(path[0][0], path[0][1], heading);
            // retrace the curve back and forth until enough readings exist
            let mut last_len = usize::MAX;
            while data.len() < n {
                for &w in &path {
                    rover.drive_to(w, &mut data, n)?;
                    if data.len() >= n {
                        break;
                    }
                }
                if data.len() == last_len {
                    return Err(Error::Config("pilot path yields no sensor readings".into()));
                }
                last_len = data.len();
                path.reverse();
            }
        }
    }
    Ok(data)
}

/// Runs one full mission. Model failures inside an epoch are logged and the
/// previous model state is kept; failures of the pilot fit are returned.
pub fn run_mission(cfg: &MissionConfig, env: &EnvGrid) -> Result<MissionOutcome> {
    cfg.validate()?;
    let extent = *env.extent();
    let mut model = OnlineModel::from_config(cfg.method, cfg.em.clone(), &cfg.kernel, 2, cfg.seed)?;
    take_jitter_escalations();
    let mut plan_rng = RngStream::new(cfg.seed, "planner");
    let mut pilot_rng = RngStream::new(cfg.seed, "pilot");
    let mut rover = Rover {
        env,
        cfg,
        state: RobotState::new(extent.center()[0], extent.center()[1], 0.0),
        clock: SensorClock::new(cfg.sensor.rate, cfg.control_hz),
        tick: 0,
    };
    let clock = |on: bool| on.then(Instant::now);
    let elapsed = |t: Option<Instant>| t.map(|t| t.elapsed().as_secs_f64());

    let pilot = pilot_survey(&mut rover, &mut pilot_rng)?;
    let normalizer = Normalizer::fit_with_bounds(
        &pilot,
        vec![extent.x_min, extent.y_min],
        vec![extent.x_max, extent.y_max],
    )?;
    let naive = NaiveModel {
        mean: normalizer.y_mean,
        var: normalizer.y_std * normalizer.y_std,
    };
    let t = clock(cfg.record_timings);
    model.pilot_with(&pilot, normalizer)?;
    let pilot_secs = elapsed(t);

    let mut log = MissionLog::default();
    let mut total = pilot.len();
    let mut record = |epoch: usize,
                      waypoint: Option<[f64; 2]>,
                      rover: &Rover<'_>,
                      model: &OnlineModel,
                      added: usize,
                      total: usize,
                      esec: Option<f64>,
                      msec: Option<f64>,
                      mut error: Option<String>| {
        let scores = match evaluate_model(model, env, cfg.eval_stride, &naive) {
            Ok(s) => Some(s),
            Err(e) => {
                error.get_or_insert_with(|| format!("evaluation: {e}"));
                None
            }
        };
        let s = &rover.state;
        log.records.push(EpochRecord {
            epoch,
            waypoint,
            pose: [s.x, s.y, s.heading],
            time: s.time,
            samples_added: added,
            samples_total: total,
            smse: scores.map(|s| s.smse),
            msll: scores.map(|s| s.msll),
            esec,
            msec,
            inducing: model.num_inducing(),
            jitter: take_jitter_escalations(),
            error,
        });
    };
    record(0, None, &rover, &model, pilot.len(), total, pilot_secs, None, None);
    let mut batches = vec![pilot];

    let mut epoch = 0;
    let mut empty_run = 0;
    while total < cfg.budget {
        epoch += 1;
        let mut error = None;
        let waypoint = match cfg.planner {
            PlannerKind::Random => random_planner(&extent, &mut plan_rng),
            PlannerKind::MaxEntropy => {
                match max_entropy_planner(&model, &rover.state, &extent, &cfg.planner_config(), &mut plan_rng) {
                    Ok(w) => w,
                    Err(e) => {
                        error = Some(format!("planner: {e}"));
                        random_planner(&extent, &mut plan_rng)
                    }
                }
            }
        };
        let mut batch = Dataset::empty(2);
        rover.drive_to(waypoint, &mut batch, cfg.budget - total)?;
        total += batch.len();
        let (mut esec, mut msec) = (None, None);
        if batch.is_empty() {
            empty_run += 1;
            if empty_run >= MAX_EMPTY_EPOCHS {
                return Err(Error::Config(format!(
                    "no readings gathered in {MAX_EMPTY_EPOCHS} consecutive epochs"
                )));
            }
        } else {
            empty_run = 0;
            let normalized = model.normalizer.dataset(&batch);
            let t = clock(cfg.record_timings);
            match model.e_step(&normalized) {
                Ok(()) => {
                    esec = elapsed(t);
                    let t = clock(cfg.record_timings);
                    if let Err(e) = model.m_step() {
                        error = Some(format!("m-step: {e}"));
                    }
                    msec = elapsed(t);
                }
                Err(e) => error = Some(format!("e-step: {e}")),
            }
        }
        if let Some(e) = &error {
            log::warn!("epoch {epoch}: {e}");
        }
        record(epoch, Some(waypoint), &rover, &model, batch.len(), total, esec, msec, error);
        batches.push(batch);
    }
    Ok(MissionOutcome { log, model, batches })
}
