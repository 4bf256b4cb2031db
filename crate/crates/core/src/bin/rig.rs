use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use poam::bench::{log_rows, run_matrix, run_verify, write_metrics_csv, ExperimentMatrix};
use poam::online::Method;
use poam::sim::{run_mission, synth_env, EnvGrid, EnvKind, MissionConfig, PilotSpec, PlannerKind, SynthSpec};
use poam::{Error, Result};

const EXIT_FAILURE: u8 = 1;
const EXIT_USER_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "rig", version, about = "Online sparse GP mapping simulator and benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PilotArg {
    Bezier,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    MaxEntropy,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic elevation grid.
    SynthEnv {
        #[arg(long, default_value = "piecewise")]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        roughness: f64,
        /// Nodes per side.
        #[arg(long)]
        nodes: Option<usize>,
        /// Side length in meters.
        #[arg(long)]
        side: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one mission and write its log.
    Run {
        #[arg(long)]
        env: PathBuf,
        /// JSON mission config; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long, value_enum)]
        planner: Option<PlannerArg>,
        #[arg(long, value_enum)]
        pilot: Option<PilotArg>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Record wall-clock step times in the log.
        #[arg(long)]
        timings: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-epoch metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Save the final model checkpoint.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Run an experiment matrix.
    Bench {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in self-checks.
    Verify,
}

fn read_config(path: &Path) -> Result<MissionConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn synth(kind: &str, seed: u64, roughness: f64, nodes: Option<usize>, side: Option<f64>, out: &Path) -> Result<()> {
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        kind: EnvKind::parse(kind)?,
        roughness,
        nodes: nodes.unwrap_or(defaults.nodes),
        side: side.unwrap_or(defaults.side),
        ..defaults
    };
    synth_env(&spec, seed)?.save(out)
}

#[allow(clippy::too_many_arguments)]
fn run(
    env: &Path,
    config: Option<&Path>,
    method: Option<&str>,
    planner: Option<PlannerArg>,
    pilot: Option<PilotArg>,
    budget: Option<usize>,
    seed: Option<u64>,
    timings: bool,
    out: &Path,
    csv: Option<&Path>,
    save_model: Option<&Path>,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => read_config(p)?,
        None => MissionConfig::default(),
    };
    if let Some(m) = method {
        cfg.method = Method::parse(m)?;
    }
    if let Some(p) = planner {
        cfg.planner = match p {
            PlannerArg::MaxEntropy => PlannerKind::MaxEntropy,
            PlannerArg::Random => PlannerKind::Random,
        };
    }
    if let Some(p) = pilot {
        let n = cfg.pilot.samples();
        cfg.pilot = match (p, cfg.pilot) {
            (PilotArg::Bezier, b @ PilotSpec::Bezier { .. }) => b,
            (PilotArg::Bezier, _) => PilotSpec::Bezier {
                control_points: 15,
                samples: n,
            },
            (PilotArg::Random, _) => PilotSpec::Random { points: n },
        };
    }
    if let Some(b) = budget {
        cfg.budget = b;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.record_timings |= timings;
    let grid = EnvGrid::load(env)?;
    let outcome = run_mission(&cfg, &grid)?;
    fs::write(out, outcome.log.to_jsonl()).map_err(|e| Error::io(out, e))?;
    if let Some(path) = csv {
        let label = env
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        write_metrics_csv(path, &log_rows(cfg.method.name(), &label, cfg.seed, &outcome.log))?;
    }
    if let Some(path) = save_model {
        outcome.model.save(path)?;
    }
    if let Some(r) = outcome.log.final_record() {
        println!(
            "{} epochs, {} samples, final smse {}, msll {}",
            r.epoch,
            r.samples_total,
            r.smse.map_or("n/a".into(), |v| format!("{v:.4}")),
            r.msll.map_or("n/a".into(), |v| format!("{v:.4}")),
        );
    }
    Ok(())
}

fn bench(matrix: &Path, out: &Path) -> Result<()> {
    let m = ExperimentMatrix::load(matrix)?;
    let base = matrix.parent().unwrap_or(Path::new("."));
    let result = run_matrix(&m, base, out)?;
    for s in &result.summary {
        println!(
            "{:<18} {:<16} runs {:>2}  smse {:.4} ± {:.4}  msll {:.4} ± {:.4}",
            s.method, s.env, s.runs, s.smse_mean, s.smse_std, s.msll_mean, s.msll_std
        );
    }
    for f in &result.failures {
        eprintln!("failed: {} {} seed {}: {}", f.method, f.env, f.seed, f.error);
    }
    Ok(())
}

fn verify() -> bool {
    let results = run_verify();
    for r in &results {
        println!("[{}] {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    failed == 0
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthEnv {
            kind,
            seed,
            roughness,
            nodes,
            side,
            out,
        } => synth(&kind, seed, roughness, nodes, side, &out),
        Command::Run {
            env,
            config,
            method,
            planner,
            pilot,
            budget,
            seed,
            timings,
            out,
            csv,
            save_model,
        } => run(
            &env,
            config.as_deref(),
            method.as_deref(),
            planner,
            pilot,
            budget,
            seed,
            timings,
            &out,
            csv.as_deref(),
            save_model.as_deref(),
        ),
        Command::Bench { matrix, out } => bench(&matrix, &out),
        Command::Verify => {
            return if verify() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_input() { EXIT_USER_ERROR } else { EXIT_FAILURE })
        }
    }
}
