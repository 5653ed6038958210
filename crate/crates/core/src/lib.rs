//! Numerical laboratory for null controllability of cascade systems of
//! wave, heat and Schrödinger type.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod hum;
pub mod linalg;
pub mod operators;

pub use error::{Error, Result};
