//! Dense linear algebra, reverse-mode differentiation, Adam and seeded
//! random streams.

pub mod adam;
pub mod fd;
pub mod linalg;
pub mod matrix;
pub mod pcd;
pub mod rng;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use linalg::{
    cholesky, cholesky_jittered, jitter_escalations, solve_lower, solve_lower_t, take_jitter_escalations, Cholesky,
};
pub use matrix::Matrix;
pub use pcd::{pivoted_cholesky, pivoted_cholesky_floor, PcdResult};
pub use rng::RngStream;
pub use tape::{gradient, value_and_gradient, Tape, Var};
