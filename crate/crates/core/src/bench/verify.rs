//! Fast self-checks behind `rig verify`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::metrics::{msll, smse, NaiveModel};
use crate::error::Result;
use crate::gp::{
    collapsed_elbo, collapsed_elbo_var, gpr_log_evidence, gpr_predict, sgpr_optimal_variational, sgpr_predict,
    Dataset, Hyperparams,
};
use crate::kernels::{ak_gram, KernelColumns};
use crate::numkit::fd::{central_difference, max_relative_error};
use crate::numkit::{gradient, pivoted_cholesky, Matrix, RngStream, Tape};
use crate::online::{EmConfig, KernelConfig, Method, Normalizer, OnlineModel};
use crate::sim::{run_mission, synth_env, EnvGrid, MissionConfig, PilotSpec, SynthSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn hyper(seed: u64) -> Hyperparams {
    let cfg = KernelConfig {
        noise: 0.3,
        ..KernelConfig::default()
    };
    cfg.build(2, seed).expect("default kernel config is valid")
}

fn data(n: usize, seed: u64) -> Dataset {
    let mut r = RngStream::new(seed, "verify-data");
    let x = Matrix::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0));
    let y = (0..n)
        .map(|i| {
            let p = x.row(i);
            (2.0 * p[0]).sin() + (6.0 * p[1]).cos() * p[0].max(0.0) + 0.1 * r.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Dataset::new(x, y).expect("shapes agree")
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn sparse_matches_exact() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let h = hyper(seed);
        let d = data(40, seed);
        let state = sgpr_optimal_variational(&h.kernel, &h.noise, &d, &d.x)?;
        let test = data(10, seed + 100).x;
        let a = sgpr_predict(&h.kernel, &state, &test)?;
        let b = gpr_predict(&h.kernel, &h.noise, &d, &test)?;
        worst = worst.max(max_diff(&a.mean, &b.mean)).max(max_diff(&a.var, &b.var));
    }
    Ok((worst <= 1e-6, format!("max abs error {worst:.2e}")))
}

fn streaming_matches_batch() -> Result<(bool, String)> {
    let h = hyper(3);
    let parts: Vec<Dataset> = (0..5).map(|i| data(12, 10 + i)).collect();
    let all = Dataset::concat(&parts);
    let z = data(15, 20).x;
    let reference = sgpr_optimal_variational(&h.kernel, &h.noise, &all, &z)?;
    let cfg = EmConfig {
        num_inducing: z.rows(),
        grad_steps: 0,
        ..EmConfig::default()
    };
    let mut worst: f64 = 0.0;
    for method in [Method::Poam, Method::SsgpPlusPlus, Method::OvcPlusPlus] {
        let mut m = OnlineModel::new(method, cfg.clone(), h.clone(), 1)?;
        m.fixed_inducing = Some(z.clone());
        for p in &parts {
            m.e_step(p)?;
        }
        worst = worst
            .max(max_diff(&m.var.m, &reference.m))
            .max(m.var.s.max_abs_diff(&reference.s));
    }
    Ok((worst <= 1e-6, format!("max abs error {worst:.2e}")))
}

fn bound_below_evidence() -> Result<(bool, String)> {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..10 {
        let h = hyper(seed);
        let d = data(30, seed + 50);
        let z = data(5 + seed as usize, seed + 60).x;
        let gap = collapsed_elbo(&h.kernel, &h.noise, &d, &z)? - gpr_log_evidence(&h.kernel, &h.noise, &d)?;
        worst = worst.max(gap);
    }
    Ok((worst <= 1e-9, format!("largest bound minus evidence {worst:.2e}")))
}

fn gradient_matches_differences() -> Result<(bool, String)> {
    let h = hyper(4);
    let d = data(20, 70);
    let z = data(6, 71).x;
    let p0 = h.to_vec();
    let objective = |t: &Tape, p| {
        let zv = t.constant(z.clone());
        collapsed_elbo_var(t, &h, h.vars(t, p), &d, zv)
    };
    let g = gradient(objective, &p0)?;
    let fd = central_difference(
        |q| {
            let t = Tape::new();
            let p = t.constant(Matrix::column(q.to_vec()));
            Ok(t.scalar(objective(&t, p)?))
        },
        &p0,
    )?;
    let err = max_relative_error(&g, &fd);
    Ok((err <= 1e-4, format!("max relative error {err:.2e}")))
}

fn pivoted_cholesky_properties() -> Result<(bool, String)> {
    let h = hyper(5);
    let x = data(12, 80).x;
    let cols = KernelColumns::new(&h.kernel, &x);
    let full = pivoted_cholesky(&cols.diag(), |j| cols.column(j), 12, 0.0)?;
    let k = ak_gram(&h.kernel, &x);
    let recon = full.factor.matmul_nt(&full.factor).max_abs_diff(&k);
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for r in 0..=12 {
        let t = pivoted_cholesky(&cols.diag(), |j| cols.column(j), r, 0.0)?.trace_error;
        monotone &= t <= prev + 1e-12;
        prev = t;
    }
    Ok((
        monotone && recon <= 1e-8,
        format!("reconstruction {recon:.2e}, monotone trace error {monotone}"),
    ))
}

fn metric_definitions() -> Result<(bool, String)> {
    let y: Vec<f64> = data(50, 90).y;
    let naive = NaiveModel::fit(&y)?;
    let s = smse(&vec![naive.mean; y.len()], &y)?;
    let l = msll(&vec![naive.mean; y.len()], &vec![naive.var; y.len()], &y, naive.mean, naive.var)?;
    Ok((s == 1.0 && l == 0.0, format!("mean-predictor smse {s}, naive msll {l}")))
}

fn normalizer_round_trip() -> Result<(bool, String)> {
    let d = data(30, 91);
    let n = Normalizer::fit(&d)?;
    let x = n.x_inverse(&n.x(&d.x)).max_abs_diff(&d.x);
    let y = max_diff(&n.y_inverse(&n.y(&d.y)), &d.y);
    let err = x.max(y);
    Ok((err <= 1e-12, format!("round-trip error {err:.2e}")))
}

fn grid_round_trip() -> Result<(bool, String)> {
    let env = synth_env(&SynthSpec::default(), 3)?;
    let back = EnvGrid::parse(&env.to_text())?;
    Ok((back == env, "text format reproduces the grid".into()))
}

fn mission_is_deterministic() -> Result<(bool, String)> {
    let env = synth_env(
        &SynthSpec {
            nodes: 15,
            side: 10.0,
            ..SynthSpec::default()
        },
        1,
    )?;
    let cfg = MissionConfig {
        seed: 5,
        budget: 120,
        pilot: PilotSpec::Bezier {
            control_points: 15,
            samples: 40,
        },
        n_candidates: 100,
        em: EmConfig {
            num_inducing: 24,
            batch_size: 32,
            ..EmConfig::default()
        },
        ..MissionConfig::default()
    };
    let a = run_mission(&cfg, &env)?.log.to_jsonl();
    let b = run_mission(&cfg, &env)?.log.to_jsonl();
    Ok((a == b, format!("{} log bytes", a.len())))
}

/// Runs every check. Never panics; failures are reported in the results.
pub fn run_verify() -> Vec<CheckResult> {
    vec![
        check("sparse posterior at Z = X equals exact GP", sparse_matches_exact),
        check("streaming updates equal batch posterior", streaming_matches_batch),
        check("collapsed bound below log evidence", bound_below_evidence),
        check("bound gradient matches finite differences", gradient_matches_differences),
        check("pivoted Cholesky properties", pivoted_cholesky_properties),
        check("metric reference values", metric_definitions),
        check("normalizer round trip", normalizer_round_trip),
        check("grid file round trip", grid_round_trip),
        check("mission determinism", mission_is_deterministic),
    ]
}
