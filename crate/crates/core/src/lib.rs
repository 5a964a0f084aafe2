//! Cavity optomechanics with coherent feedback on the cavity output.

// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cooling;
pub mod error;
pub mod feedback;
pub mod ingest;
pub mod langevin;
pub mod model;
pub mod numeric;
pub mod optimize;
pub mod par;
pub mod units;

pub use error::{Error, Result};
