//! Data-dependent sufficient statistics carried between inducing frames.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gp::{posterior_from_stats, Dataset, NoiseModel, VariationalState};
use crate::kernels::{ak_gram, ak_matrix, AkHyper};
use crate::numkit::{cholesky_jittered, Matrix};

/// `a = sum K_uf y` and `B = sum K_uf K_fu` expressed in the inducing frame
/// `z`, together with `K_uu` at the hyperparameters used for that frame.
///
/// With `noise_baked` the statistics already include the `1/s2` factor
/// applied when each batch was added.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsCache {
    pub a: Vec<f64>,
    pub b: Matrix,
    pub z: Matrix,
    pub kuu: Matrix,
    pub noise_baked: bool,
}

pub type PoamCache = StatsCache;

impl StatsCache {
    pub fn empty(dim: usize, noise_baked: bool) -> Self {
        StatsCache {
            a: Vec::new(),
            b: Matrix::zeros(0, 0),
            z: Matrix::zeros(0, dim),
            kuu: Matrix::zeros(0, 0),
            noise_baked,
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// `P = K'_{u'u'}^{-1} K_{u'u}`: `kuu_old` belongs to the cached frame, the
/// cross-covariance uses the current kernel.
pub fn projection_matrix(kernel: &AkHyper, z_old: &Matrix, kuu_old: &Matrix, z_new: &Matrix) -> Result<Matrix> {
    if z_old.rows() == 0 {
        return Ok(Matrix::zeros(0, z_new.rows()));
    }
    let k_cross = ak_matrix(kernel, z_old, z_new);
    Ok(cholesky_jittered(kuu_old, 0.0)?.solve(&k_cross))
}

/// Projects the cache into the frame `z_new` with `p` and adds the batch.
pub fn update_cache(
    cache: &StatsCache,
    p: &Matrix,
    kernel: &AkHyper,
    noise: &NoiseModel,
    z_new: &Matrix,
    batch: &Dataset,
) -> StatsCache {
    let mut a = p.tr_mul_vec(&cache.a);
    let mut b = p.matmul_tn(&cache.b.matmul(p));
    if !batch.is_empty() {
        let w = if cache.noise_baked {
            1.0 / noise.variance()
        } else {
            1.0
        };
        let kuf = ak_matrix(kernel, z_new, &batch.x);
        for (ai, v) in a.iter_mut().zip(kuf.mul_vec(&batch.y)) {
            *ai += w * v;
        }
        b.add_assign(&kuf.matmul_nt(&kuf).scale(w));
    }
    StatsCache {
        a,
        b: b.symmetrize(),
        z: z_new.clone(),
        kuu: ak_gram(kernel, z_new),
        noise_baked: cache.noise_baked,
    }
}

/// Optimal `q(u)` from the cache; unbaked statistics are scaled by the
/// current noise variance.
pub fn refresh_variational(kernel: &AkHyper, noise: &NoiseModel, cache: &StatsCache) -> Result<VariationalState> {
    let kuu = ak_gram(kernel, &cache.z);
    let w = if cache.noise_baked {
        1.0
    } else {
        1.0 / noise.variance()
    };
    let a: Vec<f64> = cache.a.iter().map(|v| v * w).collect();
    let (m, s) = posterior_from_stats(&kuu, &a, &cache.b.scale(w))?;
    Ok(VariationalState {
        z: cache.z.clone(),
        m,
        s,
    })
}
