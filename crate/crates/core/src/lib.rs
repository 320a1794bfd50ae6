// `!(x > 0.0)` is used on purpose so NaN fails validation; index loops
// read better than zipped iterators in the matrix code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod dpd;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod signal;
pub mod volterra;

pub use error::{Error, Result};
