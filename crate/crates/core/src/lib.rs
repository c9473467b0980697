// NaN-rejecting checks are written as `!(x >= lo)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod jets;
pub mod metrics;
pub mod net;
pub mod perf;
pub mod problems;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
