//! Cached-statistics update with the noise precision folded in when each
//! batch arrives.

use crate::error::Result;
use crate::gp::{Dataset, NoiseModel, VariationalState};
use crate::kernels::AkHyper;
use crate::online::{projection_matrix, refresh_variational, update_cache, StatsCache};

/// `c` and `C` already contain `1/s2` from the time of each update.
pub type OvcSaved = StatsCache;

pub fn ovc_update(
    saved: &OvcSaved,
    kernel: &AkHyper,
    noise: &NoiseModel,
    z_new: &crate::numkit::Matrix,
    batch: &Dataset,
) -> Result<(VariationalState, OvcSaved)> {
    debug_assert!(saved.noise_baked);
    let p = projection_matrix(kernel, &saved.z, &saved.kuu, z_new)?;
    let next = update_cache(saved, &p, kernel, noise, z_new, batch);
    let var = refresh_variational(kernel, noise, &next)?;
    Ok((var, next))
}
