//! Variational EM over a stream of batches.
//!
//! Every method shares the same loop: the E-step picks inducing inputs and
//! updates `q(u)` with hyperparameters fixed, and the M-step takes Adam
//! steps on the hyperparameters with `q(u)` fixed. Methods differ only in
//! the three strategies returned by [`Method::strategies`].

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cache::{projection_matrix, refresh_variational, update_cache, StatsCache};
use super::inducing::{random_inducing, update_inducing};
use super::normalize::Normalizer;
use crate::baselines::{full_update, ssgp_online_elbo_var, ssgp_variational_update, SsgpSaved};
use crate::error::{Error, Result};
use crate::gp::{
    sgpr_optimal_variational, svgp_elbo_var, Dataset, FieldPredictor, Hyperparams, NoiseModel, PredictiveDist,
    Predictor, VariationalState,
};
use crate::kernels::{ak_gram, AkHyper, BaseKernelGrid, WeightNet};
use crate::numkit::{cholesky_jittered, AdamState, Matrix, RngStream, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmConfig {
    pub num_inducing: usize,
    pub grad_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Recompute `q(u)` after the M-step as well as in the E-step.
    pub refresh_after_mstep: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            num_inducing: 128,
            grad_steps: 10,
            batch_size: 256,
            learning_rate: 1e-2,
            refresh_after_mstep: false,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_inducing == 0 || self.batch_size == 0 || !(self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("invalid EM settings {self:?}")));
        }
        Ok(())
    }

    /// Parses and validates a JSON object; missing fields take defaults.
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: EmConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Initial kernel and noise settings, in normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub num_base: usize,
    pub len_min: f64,
    pub len_max: f64,
    pub hidden: Vec<usize>,
    pub amplitude: f64,
    pub noise: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            num_base: 10,
            len_min: 0.05,
            len_max: 1.0,
            hidden: vec![10, 10],
            amplitude: 1.0,
            noise: 0.5,
        }
    }
}

impl KernelConfig {
    pub fn build(&self, input_dim: usize, seed: u64) -> Result<Hyperparams> {
        let grid = BaseKernelGrid::new(self.num_base, self.len_min, self.len_max)?;
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.num_base);
        let net = WeightNet::init(&sizes, &mut RngStream::new(seed, "weight-net"))?;
        Ok(Hyperparams {
            kernel: AkHyper::new(self.amplitude, grid, net)?,
            noise: NoiseModel::new(self.noise)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InducingStrategy {
    /// PCD over `[Z_old; X_new]` each epoch.
    Pcd,
    /// PCD, then gradient steps on `Z` in the M-step.
    PcdThenOptimize,
    /// PCD only while `|Z| < M`; afterwards `Z` moves by gradients alone.
    FillThenOptimize,
    /// Uniform subset of `[Z_old; X_new]`.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariationalStrategy {
    /// Projected statistics, noise applied at refresh time.
    PoamCache,
    /// Projected statistics with the noise precision baked in.
    OvcCache,
    /// Saved natural parameters of the previous posterior.
    Ssgp,
    /// Batch SGPR over all data.
    Full,
    /// Carried over between frames, then trained by Adam with the
    /// hyperparameters.
    Gradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HyperStrategy {
    /// Uncollapsed bound on minibatches drawn from all data.
    MiniBatchElbo,
    /// Online collapsed bound on the newest batch.
    OnlineElbo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "poam")]
    Poam,
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "ovc")]
    Ovc,
    #[serde(rename = "ovc++")]
    OvcPlusPlus,
    #[serde(rename = "ssgp++")]
    SsgpPlusPlus,
    #[serde(rename = "poam-z-opt")]
    PoamZOpt,
    #[serde(rename = "poam-z-rand")]
    PoamZRand,
    #[serde(rename = "poam-var-opt")]
    PoamVarOpt,
    #[serde(rename = "poam-var-ssgp")]
    PoamVarSsgp,
    #[serde(rename = "poam-online-elbo")]
    PoamOnlineElbo,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Poam,
        Method::Full,
        Method::Ovc,
        Method::OvcPlusPlus,
        Method::SsgpPlusPlus,
        Method::PoamZOpt,
        Method::PoamZRand,
        Method::PoamVarOpt,
        Method::PoamVarSsgp,
        Method::PoamOnlineElbo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Poam => "poam",
            Method::Full => "full",
            Method::Ovc => "ovc",
            Method::OvcPlusPlus => "ovc++",
            Method::SsgpPlusPlus => "ssgp++",
            Method::PoamZOpt => "poam-z-opt",
            Method::PoamZRand => "poam-z-rand",
            Method::PoamVarOpt => "poam-var-opt",
            Method::PoamVarSsgp => "poam-var-ssgp",
            Method::PoamOnlineElbo => "poam-online-elbo",
        }
    }

    /// Case-insensitive; `_` and `-` are interchangeable.
    pub fn parse(s: &str) -> Result<Method> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }

    pub fn is_ablation(self) -> bool {
        matches!(
            self,
            Method::PoamZOpt
                | Method::PoamZRand
                | Method::PoamVarOpt
                | Method::PoamVarSsgp
                | Method::PoamOnlineElbo
        )
    }

    pub fn strategies(self) -> (InducingStrategy, VariationalStrategy, HyperStrategy) {
        use HyperStrategy::*;
        use InducingStrategy::*;
        use VariationalStrategy::*;
        match self {
            Method::Poam => (Pcd, PoamCache, MiniBatchElbo),
            Method::Full => (Pcd, Full, MiniBatchElbo),
            Method::Ovc => (PcdThenOptimize, OvcCache, MiniBatchElbo),
            Method::OvcPlusPlus => (Pcd, OvcCache, MiniBatchElbo),
            Method::SsgpPlusPlus => (Pcd, Ssgp, OnlineElbo),
            Method::PoamZOpt => (FillThenOptimize, PoamCache, MiniBatchElbo),
            Method::PoamZRand => (Random, PoamCache, MiniBatchElbo),
            Method::PoamVarOpt => (Pcd, Gradient, MiniBatchElbo),
            Method::PoamVarSsgp => (Pcd, Ssgp, MiniBatchElbo),
            Method::PoamOnlineElbo => (Pcd, PoamCache, OnlineElbo),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What the online-bound M-step needs from the preceding E-step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub saved: SsgpSaved,
    pub batch: Dataset,
    pub z: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineModel {
    pub method: Method,
    pub cfg: EmConfig,
    pub hyper: Hyperparams,
    pub var: VariationalState,
    /// Statistics for the cache-based strategies.
    pub stats: StatsCache,
    /// Saved posterior for the SSGP strategy.
    pub ssgp: SsgpSaved,
    /// Lower factor of `S` for the gradient strategy.
    pub ls: Option<Matrix>,
    /// `K_uu` of `var.z` at the hyperparameters of the last E-step.
    pub frame_kuu: Matrix,
    /// Noise variance used by the last cache refresh.
    pub last_s2: f64,
    pub all_data: Dataset,
    pub normalizer: Normalizer,
    pub hyper_opt: AdamState,
    pub z_opt: AdamState,
    pub var_opt: AdamState,
    /// Completed E-steps.
    pub epoch: u64,
    pub seed: u64,
    /// Overrides inducing selection when set.
    pub fixed_inducing: Option<Matrix>,
    pub pending: Option<PendingBatch>,
}

const CHECKPOINT_FORMAT: &str = "poam-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: OnlineModel,
}

impl OnlineModel {
    pub fn new(method: Method, cfg: EmConfig, hyper: Hyperparams, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let dim = hyper.kernel.input_dim();
        let (_, variational, _) = method.strategies();
        let np = hyper.num_params();
        Ok(OnlineModel {
            method,
            hyper_opt: AdamState::new(np, cfg.learning_rate),
            z_opt: AdamState::new(0, cfg.learning_rate),
            var_opt: AdamState::new(0, cfg.learning_rate),
            cfg,
            hyper,
            var: VariationalState {
                z: Matrix::zeros(0, dim),
                m: Vec::new(),
                s: Matrix::zeros(0, 0),
            },
            stats: StatsCache::empty(dim, variational == VariationalStrategy::OvcCache),
            ssgp: SsgpSaved::prior(dim),
            ls: None,
            frame_kuu: Matrix::zeros(0, 0),
            last_s2: 1.0,
            all_data: Dataset::empty(dim),
            normalizer: Normalizer::identity(dim),
            epoch: 0,
            seed,
            fixed_inducing: None,
            pending: None,
        })
    }

    pub fn from_config(method: Method, cfg: EmConfig, kernel: &KernelConfig, input_dim: usize, seed: u64) -> Result<Self> {
        let hyper = kernel.build(input_dim, seed)?;
        OnlineModel::new(method, cfg, hyper, seed)
    }

    /// Same hyperparameters and seed, fresh state, different method.
    pub fn with_method(&self, method: Method, cfg: EmConfig) -> OnlineModel {
        let mut m = OnlineModel::new(method, cfg, self.hyper.clone(), self.seed)
            .expect("configuration already validated");
        m.fixed_inducing = self.fixed_inducing.clone();
        m
    }

    pub fn input_dim(&self) -> usize {
        self.hyper.kernel.input_dim()
    }

    pub fn num_inducing(&self) -> usize {
        self.var.z.rows()
    }

    fn rng(&self, label: &str) -> RngStream {
        RngStream::new(self.seed, &format!("{label}/{}", self.epoch))
    }

    fn select_z(&self, batch: &Dataset) -> Result<Matrix> {
        if let Some(z) = &self.fixed_inducing {
            return Ok(z.clone());
        }
        let (inducing, _, _) = self.method.strategies();
        let kernel = &self.hyper.kernel;
        let m = self.cfg.num_inducing;
        match inducing {
            InducingStrategy::Pcd | InducingStrategy::PcdThenOptimize => {
                update_inducing(kernel, &self.var.z, &batch.x, m)
            }
            InducingStrategy::FillThenOptimize => {
                if self.var.z.rows() < m {
                    update_inducing(kernel, &self.var.z, &batch.x, m)
                } else {
                    Ok(self.var.z.clone())
                }
            }
            InducingStrategy::Random => {
                Ok(random_inducing(&self.var.z, &batch.x, m, &mut self.rng("inducing")))
            }
        }
    }

    /// The current posterior as saved natural parameters.
    fn saved_posterior(&self) -> Result<SsgpSaved> {
        let (_, variational, _) = self.method.strategies();
        match variational {
            VariationalStrategy::Ssgp => Ok(self.ssgp.clone()),
            VariationalStrategy::PoamCache | VariationalStrategy::OvcCache => {
                let w = if self.stats.noise_baked { 1.0 } else { 1.0 / self.last_s2 };
                let a: Vec<f64> = self.stats.a.iter().map(|v| v * w).collect();
                SsgpSaved::from_stats(&self.stats.z, &self.stats.kuu, &a, &self.stats.b.scale(w))
            }
            _ => SsgpSaved::from_posterior(&self.var.z, &self.frame_kuu, &self.var.m, &self.var.s),
        }
    }

    /// Inducing update, `q(u)` update and data append for one batch in
    /// normalized units. On error the model is left unchanged.
    pub fn e_step(&mut self, batch: &Dataset) -> Result<()> {
        let (_, variational, hyper_strategy) = self.method.strategies();
        let kernel = &self.hyper.kernel;
        let noise = &self.hyper.noise;
        let pending_saved = match hyper_strategy {
            HyperStrategy::OnlineElbo => Some(self.saved_posterior()?),
            HyperStrategy::MiniBatchElbo => None,
        };
        let z_new = self.select_z(batch)?;

        let mut stats = None;
        let mut ssgp = None;
        let mut ls = None;
        let var = match variational {
            VariationalStrategy::PoamCache | VariationalStrategy::OvcCache => {
                let p = projection_matrix(kernel, &self.stats.z, &self.stats.kuu, &z_new)?;
                let next = update_cache(&self.stats, &p, kernel, noise, &z_new, batch);
                let v = refresh_variational(kernel, noise, &next)?;
                stats = Some(next);
                v
            }
            VariationalStrategy::Ssgp => {
                let (v, saved) = ssgp_variational_update(&self.ssgp, kernel, noise, &z_new, batch)?;
                ssgp = Some(saved);
                v
            }
            VariationalStrategy::Full => {
                let mut all = self.all_data.clone();
                all.extend(batch);
                full_update(&all, kernel, noise, &z_new)?
            }
            VariationalStrategy::Gradient => {
                let v = if self.var.z.rows() == 0 {
                    sgpr_optimal_variational(kernel, noise, batch, &z_new)?
                } else {
                    carry_over(kernel, &self.var, &z_new)?
                };
                ls = Some(cholesky_jittered(&v.s, 0.0)?.l);
                v
            }
        };

        let frame_kuu = ak_gram(kernel, &var.z);
        if let Some(s) = stats {
            self.stats = s;
            self.last_s2 = noise.variance();
        }
        if let Some(s) = ssgp {
            self.ssgp = s;
        }
        self.ls = ls;
        self.pending = pending_saved.map(|saved| PendingBatch {
            saved,
            batch: batch.clone(),
            z: var.z.clone(),
        });
        self.var = var;
        self.frame_kuu = frame_kuu;
        self.all_data.extend(batch);
        self.epoch += 1;
        Ok(())
    }

    /// `grad_steps` Adam ascent steps. On error the model is left
    /// unchanged.
    pub fn m_step(&mut self) -> Result<()> {
        if self.cfg.grad_steps == 0 || self.all_data.is_empty() {
            return Ok(());
        }
        let (_, variational, hyper_strategy) = self.method.strategies();
        match hyper_strategy {
            HyperStrategy::MiniBatchElbo => self.minibatch_m_step()?,
            HyperStrategy::OnlineElbo => self.online_m_step()?,
        }
        if variational == VariationalStrategy::Ssgp && hyper_strategy == HyperStrategy::OnlineElbo {
            // the online bound is tight at the posterior for the new
            // hyperparameters, so recompute it from the same saved state
            if let Some(p) = &self.pending {
                let (v, saved) =
                    ssgp_variational_update(&p.saved, &self.hyper.kernel, &self.hyper.noise, &p.z, &p.batch)?;
                self.frame_kuu = ak_gram(&self.hyper.kernel, &v.z);
                self.var = v;
                self.ssgp = saved;
            }
        } else if self.cfg.refresh_after_mstep {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes `q(u)` from the cached statistics at the current
    /// hyperparameters.
    pub fn refresh(&mut self) -> Result<()> {
        let (_, variational, _) = self.method.strategies();
        let (k, n) = (&self.hyper.kernel, &self.hyper.noise);
        match variational {
            VariationalStrategy::PoamCache | VariationalStrategy::OvcCache => {
                self.var = refresh_variational(k, n, &self.stats)?;
                self.last_s2 = n.variance();
            }
            VariationalStrategy::Full => {
                self.var = full_update(&self.all_data, k, n, &self.var.z)?;
            }
            _ => {}
        }
        Ok(())
    }

    fn minibatch_m_step(&mut self) -> Result<()> {
        let (inducing, variational, _) = self.method.strategies();
        let opt_z = self.fixed_inducing.is_none()
            && matches!(
                inducing,
                InducingStrategy::PcdThenOptimize | InducingStrategy::FillThenOptimize
            );
        let opt_var = variational == VariationalStrategy::Gradient;
        let mdim = self.var.z.rows();
        let dim = self.input_dim();

        let mut hyper = self.hyper.clone();
        let mut hp = hyper.to_vec();
        let mut zp = self.var.z.as_slice().to_vec();
        let ls0 = match &self.ls {
            Some(l) if opt_var => l.clone(),
            _ => cholesky_jittered(&self.var.s, 0.0)?.l,
        };
        let mut vp: Vec<f64> = self.var.m.iter().chain(ls0.as_slice()).copied().collect();

        let lr = self.cfg.learning_rate;
        let mut hopt = self.hyper_opt.clone();
        hopt.fit_dim(hp.len());
        hopt.learning_rate = lr;
        let mut zopt = self.z_opt.clone();
        zopt.fit_dim(if opt_z { zp.len() } else { 0 });
        zopt.learning_rate = lr;
        let mut vopt = self.var_opt.clone();
        vopt.fit_dim(if opt_var { vp.len() } else { 0 });
        vopt.learning_rate = lr;

        let n = self.all_data.len();
        let b = self.cfg.batch_size;
        let scale = n as f64 / b as f64;
        let mut rng = self.rng("m-step");
        for _ in 0..self.cfg.grad_steps {
            let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
            let batch = self.all_data.select(&idx);
            let t = Tape::new();
            let pv = t.leaf(Matrix::column(hp.clone()));
            let zm = Matrix::from_vec(mdim, dim, zp.clone())?;
            let zv = if opt_z { t.leaf(zm) } else { t.constant(zm) };
            let vv = if opt_var {
                t.leaf(Matrix::column(vp.clone()))
            } else {
                t.constant(Matrix::column(vp.clone()))
            };
            let m = t.rows(vv, 0, mdim);
            let ls = t.tril(t.reshape(t.rows(vv, mdim, mdim * mdim), mdim, mdim));
            let hv = hyper.vars(&t, pv);
            let out = svgp_elbo_var(&t, &hyper, hv, &batch, zv, m, ls, scale)?;
            let value = t.scalar(out);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss(value));
            }
            let g = t.backward(out);
            hopt.step(&mut hp, g.wrt(pv).as_slice());
            hyper.set_from_slice(&hp);
            if opt_z {
                zopt.step(&mut zp, g.wrt(zv).as_slice());
            }
            if opt_var {
                vopt.step(&mut vp, g.wrt(vv).as_slice());
            }
        }
        if hp.iter().chain(&zp).chain(&vp).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss(f64::NAN));
        }

        self.hyper = hyper;
        self.hyper_opt = hopt;
        self.z_opt = zopt;
        self.var_opt = vopt;
        if opt_z {
            self.var.z = Matrix::from_vec(mdim, dim, zp)?;
        }
        if opt_var {
            let l = Matrix::from_vec(mdim, mdim, vp[mdim..].to_vec())?.tril();
            self.var.m = vp[..mdim].to_vec();
            self.var.s = l.matmul_nt(&l);
            self.ls = Some(l);
        }
        Ok(())
    }

    fn online_m_step(&mut self) -> Result<()> {
        let Some(p) = &self.pending else {
            return Ok(());
        };
        let mut hyper = self.hyper.clone();
        let mut hp = hyper.to_vec();
        let mut hopt = self.hyper_opt.clone();
        hopt.fit_dim(hp.len());
        hopt.learning_rate = self.cfg.learning_rate;
        for _ in 0..self.cfg.grad_steps {
            let t = Tape::new();
            let pv = t.leaf(Matrix::column(hp.clone()));
            let hv = hyper.vars(&t, pv);
            let z = t.constant(p.z.clone());
            let out = ssgp_online_elbo_var(&t, &hyper, hv, &p.saved, &p.batch, z)?;
            let value = t.scalar(out);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss(value));
            }
            let g = t.backward(out);
            hopt.step(&mut hp, g.wrt(pv).as_slice());
            hyper.set_from_slice(&hp);
        }
        if hp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss(f64::NAN));
        }
        self.hyper = hyper;
        self.hyper_opt = hopt;
        Ok(())
    }

    /// E-step then M-step on a normalized batch.
    pub fn step(&mut self, batch: &Dataset) -> Result<()> {
        self.e_step(batch)?;
        self.m_step()
    }

    /// Fits the normalizer on the raw pilot data and runs the first epoch.
    pub fn pilot(&mut self, raw: &Dataset) -> Result<()> {
        self.pilot_with(raw, Normalizer::fit(raw)?)
    }

    /// Runs the first epoch on raw pilot data under a given normalizer.
    pub fn pilot_with(&mut self, raw: &Dataset, normalizer: Normalizer) -> Result<()> {
        let batch = normalizer.dataset(raw);
        let saved = self.normalizer.clone();
        self.normalizer = normalizer;
        if let Err(e) = self.step(&batch) {
            self.normalizer = saved;
            return Err(e);
        }
        Ok(())
    }

    /// One epoch on raw-unit data.
    pub fn update(&mut self, raw: &Dataset) -> Result<()> {
        let batch = self.normalizer.dataset(raw);
        self.step(&batch)
    }

    pub fn predictor(&self) -> Result<Predictor<'_>> {
        Predictor::new(&self.hyper.kernel, &self.var)
    }

    /// Latent predictive distribution at normalized inputs.
    pub fn predict(&self, x: &Matrix) -> Result<PredictiveDist> {
        if self.var.z.rows() == 0 {
            let a = self.hyper.kernel.amplitude();
            return Ok(PredictiveDist {
                mean: vec![0.0; x.rows()],
                var: vec![a; x.rows()],
            });
        }
        self.predictor()?.predict(x)
    }

    /// Latent predictive distribution at raw inputs, in raw target units.
    pub fn predict_raw(&self, x: &Matrix) -> Result<PredictiveDist> {
        let p = self.predict(&self.normalizer.x(x))?;
        Ok(PredictiveDist {
            mean: self.normalizer.y_inverse(&p.mean),
            var: self.normalizer.var_inverse(&p.var),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let c = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&c)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        Ok(c.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        OnlineModel::from_json(&s)
    }
}

impl FieldPredictor for OnlineModel {
    fn predict_observed(&self, x: &Matrix) -> Result<PredictiveDist> {
        let mut p = self.predict(&self.normalizer.x(x))?;
        let s2 = self.hyper.noise.variance();
        for v in &mut p.var {
            *v += s2;
        }
        Ok(PredictiveDist {
            mean: self.normalizer.y_inverse(&p.mean),
            var: self.normalizer.var_inverse(&p.var),
        })
    }
}

/// Moves `q(u')` onto a new frame through the prior conditional
/// `p(u | u')` under the current kernel: `m = P^T m'`, `S = K_uu - P^T K' P + P^T S' P`.
fn carry_over(kernel: &AkHyper, old: &VariationalState, z_new: &Matrix) -> Result<VariationalState> {
    let kuu_old = &ak_gram(kernel, &old.z);
    let p = projection_matrix(kernel, &old.z, kuu_old, z_new)?;
    let kuu = ak_gram(kernel, z_new);
    let m = p.tr_mul_vec(&old.m);
    let s = kuu
        .sub(&p.matmul_tn(&kuu_old.matmul(&p)))
        .add(&p.matmul_tn(&old.s.matmul(&p)))
        .symmetrize();
    Ok(VariationalState {
        z: z_new.clone(),
        m,
        s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert_eq!(Method::parse("POAM_Z_OPT").unwrap(), Method::PoamZOpt);
        assert!(matches!(Method::parse("poam-z-bogus"), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let r: std::result::Result<EmConfig, _> = serde_json::from_str(r#"{"num_inducing": 4, "bogus": 1}"#);
        assert!(r.is_err());
        let c: EmConfig = serde_json::from_str(r#"{"num_inducing": 4}"#).unwrap();
        assert_eq!(c.grad_steps, 10);
    }
}
