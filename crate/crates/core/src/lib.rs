// NaN-rejecting checks are written as `!(x <= tol)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod lagrangian;
pub mod linalg;
pub mod thermo;

pub use error::{DiracError, Result};
