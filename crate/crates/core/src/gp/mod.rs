//! Exact and sparse variational GP regression.

mod exact;
mod sparse;
mod types;

pub use exact::{gpr_log_evidence, gpr_log_evidence_grad, gpr_log_evidence_var, gpr_predict, ORACLE_LIMIT};
pub use sparse::{
    collapsed_elbo, collapsed_elbo_var, posterior_from_stats, sgpr_optimal_variational,
    sgpr_predict, svgp_elbo, svgp_elbo_var, Predictor,
};
pub use types::{
    dedup_rows, Dataset, FieldPredictor, HyperVars, Hyperparams, NoiseModel, PredictiveDist, VariationalState,
    VAR_FLOOR,
};
