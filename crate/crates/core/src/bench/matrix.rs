//! Runs every (method, environment, seed) mission of a matrix and writes
//! logs and CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::online::{EmConfig, KernelConfig, Method};
use crate::sim::{run_mission, synth_env, EnvGrid, EnvKind, MissionConfig, MissionLog, PilotSpec, PlannerKind, SynthSpec};

/// Either a synthetic environment or a grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    #[serde(default)]
    pub kind: Option<EnvKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_roughness")]
    pub roughness: f64,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_roughness() -> f64 {
    1.0
}

impl EnvSpec {
    pub fn synthetic(kind: EnvKind, seed: u64) -> Self {
        EnvSpec {
            kind: Some(kind),
            seed,
            roughness: 1.0,
            file: None,
        }
    }

    /// Label used in file names and tables.
    pub fn label(&self) -> String {
        match (&self.kind, &self.file) {
            (_, Some(f)) => f
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "grid".into()),
            (Some(k), None) => format!("{k}-{}", self.seed),
            (None, None) => "unset".into(),
        }
    }

    /// Relative file paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<EnvGrid> {
        match (&self.kind, &self.file) {
            (Some(kind), None) => synth_env(
                &SynthSpec {
                    kind: *kind,
                    roughness: self.roughness,
                    ..SynthSpec::default()
                },
                self.seed,
            ),
            (None, Some(f)) => EnvGrid::load(&base.join(f)),
            _ => Err(Error::Config("environment needs exactly one of `kind` or `file`".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMatrix {
    pub methods: Vec<Method>,
    pub envs: Vec<EnvSpec>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_planner")]
    pub planner: PlannerKind,
    #[serde(default)]
    pub pilot: PilotSpec,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_candidates")]
    pub n_candidates: usize,
    #[serde(default = "default_distance_weight")]
    pub distance_weight: f64,
    /// Worker threads; `None` uses every core.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_planner() -> PlannerKind {
    PlannerKind::MaxEntropy
}
fn default_budget() -> usize {
    1200
}
fn default_candidates() -> usize {
    2000
}
fn default_distance_weight() -> f64 {
    0.3
}

impl ExperimentMatrix {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.envs.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("methods, envs and seeds must all be nonempty".into()));
        }
        for e in &self.envs {
            if e.kind.is_some() == e.file.is_some() {
                return Err(Error::Config("environment needs exactly one of `kind` or `file`".into()));
            }
        }
        self.mission(Method::Poam, 0).validate()
    }

    pub fn mission(&self, method: Method, seed: u64) -> MissionConfig {
        MissionConfig {
            method,
            seed,
            budget: self.budget,
            pilot: self.pilot,
            planner: self.planner,
            n_candidates: self.n_candidates,
            distance_weight: self.distance_weight,
            em: self.em.clone(),
            kernel: self.kernel.clone(),
            ..MissionConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: ExperimentMatrix = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub env: String,
    pub seed: u64,
    pub epoch: usize,
    pub samples: usize,
    pub smse: Option<f64>,
    pub msll: Option<f64>,
    pub esec: Option<f64>,
    pub msec: Option<f64>,
}

impl MetricRow {
    fn key(&self) -> (&str, &str, u64, usize) {
        (&self.method, &self.env, self.seed, self.epoch)
    }
}

/// One row of `summary.csv`: across-seed mean and population standard
/// deviation of the per-run epoch averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub env: String,
    pub runs: usize,
    pub smse_mean: f64,
    pub smse_std: f64,
    pub msll_mean: f64,
    pub msll_std: f64,
    pub time_mean: Option<f64>,
    pub time_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub method: String,
    pub env: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatrixResult {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<RunFailure>,
}

pub fn log_rows(method: &str, env: &str, seed: u64, log: &MissionLog) -> Vec<MetricRow> {
    log.records
        .iter()
        .map(|r| MetricRow {
            method: method.to_string(),
            env: env.to_string(),
            seed,
            epoch: r.epoch,
            samples: r.samples_total,
            smse: r.smse,
            msll: r.msll,
            esec: r.esec,
            msec: r.msec,
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Aggregates sorted metric rows per (method, env).
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    // (method, env) -> seed -> rows
    let mut groups: BTreeMap<(&str, &str), BTreeMap<u64, Vec<&MetricRow>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((&r.method, &r.env))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for ((method, env), runs) in groups {
        let mut smse = Vec::new();
        let mut msll = Vec::new();
        let mut time = Vec::new();
        for rs in runs.values() {
            if let Some(v) = mean_of(rs.iter().filter_map(|r| r.smse)) {
                smse.push(v);
            }
            if let Some(v) = mean_of(rs.iter().filter_map(|r| r.msll)) {
                msll.push(v);
            }
            let epoch_time = rs.iter().filter_map(|r| match (r.esec, r.msec) {
                (Some(e), Some(m)) => Some(e + m),
                (Some(e), None) => Some(e),
                _ => None,
            });
            if let Some(v) = mean_of(epoch_time) {
                time.push(v);
            }
        }
        let (smse_mean, smse_std) = mean_std(&smse);
        let (msll_mean, msll_std) = mean_std(&msll);
        let (time_mean, time_std) = if time.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&time);
            (Some(m), Some(s))
        };
        out.push(SummaryRow {
            method: method.to_string(),
            env: env.to_string(),
            runs: runs.len(),
            smse_mean,
            smse_std,
            msll_mean,
            msll_std,
            time_mean,
            time_std,
        });
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    if rows.is_empty() {
        w.write_record(header).map_err(|e| Error::io(path, e.into()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(io)
}

pub const METRICS_HEADER: [&str; 9] = ["method", "env", "seed", "epoch", "samples", "smse", "msll", "esec", "msec"];
const SUMMARY_HEADER: [&str; 9] = [
    "method", "env", "runs", "smse_mean", "smse_std", "msll_mean", "msll_std", "time_mean", "time_std",
];
const FAILURE_HEADER: [&str; 4] = ["method", "env", "seed", "error"];

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_csv(path, rows, &METRICS_HEADER)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
        .collect()
}

/// Runs the matrix, writing `logs/<method>_<env>_<seed>.jsonl`,
/// `metrics.csv`, `summary.csv` and `failures.csv` into `out_dir`.
/// `base` resolves relative grid paths.
pub fn run_matrix(matrix: &ExperimentMatrix, base: &Path, out_dir: &Path) -> Result<MatrixResult> {
    matrix.validate()?;
    let logs = out_dir.join("logs");
    fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
    let envs: Vec<(String, EnvGrid)> = matrix
        .envs
        .iter()
        .map(|e| Ok((e.label(), e.build(base)?)))
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for &method in &matrix.methods {
        for (ei, _) in envs.iter().enumerate() {
            for &seed in &matrix.seeds {
                jobs.push((method, ei, seed));
            }
        }
    }
    let run = |&(method, ei, seed): &(Method, usize, u64)| -> (Method, usize, u64, Result<MissionLog>) {
        let (label, env) = &envs[ei];
        let cfg = matrix.mission(method, seed);
        let result = run_mission(&cfg, env).and_then(|out| {
            let path = logs.join(format!("{}_{label}_{seed}.jsonl", method.name()));
            fs::write(&path, out.log.to_jsonl()).map_err(|e| Error::io(&path, e))?;
            Ok(out.log)
        });
        (method, ei, seed, result)
    };
    let results: Vec<_> = match matrix.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect()),
        None => jobs.par_iter().map(run).collect(),
    };

    let mut out = MatrixResult::default();
    for (method, ei, seed, result) in results {
        let label = &envs[ei].0;
        match result {
            Ok(log) => out.rows.extend(log_rows(method.name(), label, seed, &log)),
            Err(e) => {
                log::error!("{} on {label} seed {seed}: {e}", method.name());
                out.failures.push(RunFailure {
                    method: method.name().into(),
                    env: label.clone(),
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    out.rows.sort_by(|a, b| a.key().cmp(&b.key()));
    out.failures
        .sort_by(|a, b| (&a.method, &a.env, a.seed).cmp(&(&b.method, &b.env, b.seed)));
    out.summary = summarize(&out.rows);
    write_metrics_csv(&out_dir.join("metrics.csv"), &out.rows)?;
    write_csv(&out_dir.join("summary.csv"), &out.summary, &SUMMARY_HEADER)?;
    write_csv(&out_dir.join("failures.csv"), &out.failures, &FAILURE_HEADER)?;
    Ok(out)
}
