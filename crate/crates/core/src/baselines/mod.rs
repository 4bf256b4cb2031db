//! Comparison methods and ablations built on the shared online machinery.

mod ovc;
mod ssgp;

pub use ovc::{ovc_update, OvcSaved};
pub use ssgp::{ssgp_online_elbo, ssgp_online_elbo_var, ssgp_variational_update, PseudoData, SsgpSaved};

use crate::error::Result;
use crate::gp::{sgpr_optimal_variational, Dataset, NoiseModel, VariationalState};
use crate::kernels::AkHyper;
use crate::numkit::Matrix;
use crate::online::{EmConfig, Method, OnlineModel};

/// Batch SGPR over every point seen so far; cost grows with N.
pub fn full_update(all_data: &Dataset, kernel: &AkHyper, noise: &NoiseModel, z_new: &Matrix) -> Result<VariationalState> {
    sgpr_optimal_variational(kernel, noise, all_data, z_new)
}

/// Model for one of the ablation variants, by name.
pub fn ablation_variant(name: &str, base: &OnlineModel, cfg: &EmConfig) -> Result<OnlineModel> {
    let method = Method::parse(name)?;
    if !method.is_ablation() {
        return Err(crate::Error::UnknownVariant(name.to_string()));
    }
    Ok(base.with_method(method, cfg.clone()))
}
