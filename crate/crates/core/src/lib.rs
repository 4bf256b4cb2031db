//! Online sparse Gaussian-process mapping with the attentive kernel, an
//! active-sensing simulator and a benchmark harness.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod baselines;
pub mod bench;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod numkit;
pub mod online;
pub mod sim;

pub use error::{Error, Result};
