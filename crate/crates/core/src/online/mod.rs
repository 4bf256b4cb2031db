//! Online sparse GP: inducing selection, cached statistics and variational
//! EM.

mod cache;
mod inducing;
mod model;
mod normalize;

pub use cache::{projection_matrix, refresh_variational, update_cache, PoamCache, StatsCache};
pub use inducing::{random_inducing, select_inducing, update_inducing, PIVOT_FLOOR};
pub use model::{
    EmConfig, HyperStrategy, InducingStrategy, KernelConfig, Method, OnlineModel, PendingBatch,
    VariationalStrategy,
};
pub use normalize::Normalizer;
