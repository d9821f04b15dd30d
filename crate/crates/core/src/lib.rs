//! Numerical solvers and diagnostics for partial integro-differential
//! equations driven by Lévy jump measures, with option-pricing front ends.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bessel;
pub mod error;
pub mod grid;
pub mod levy;
pub mod operator;
pub mod pricing;
pub mod quadrature;
pub mod shift;
pub mod solver;
pub mod special;
pub mod spectral;

pub use error::{PideError, Result};
