//! The attentive kernel and its weighting network.

mod ak;
pub mod net;

pub use ak::{
    ak_diag, ak_diag_var, ak_gram, ak_matrix, ak_matrix_var, base_kernel, lengthscale_map,
    normalized_weights, AkHyper, AkVars, BaseKernelGrid, KernelColumns, NORM_EPS,
};
pub use net::WeightNet;
