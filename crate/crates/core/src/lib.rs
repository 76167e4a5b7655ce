//! Viscous incompressible fluid in Lagrangian coordinates coupled to a nonlinear
//! elastic shell with membrane tension and Willmore bending.
//!
//! The shell is a graph `z = h(y)` over a periodic reference chart in tubular
//! coordinates. The fluid fills the slab below it and is advanced by a penalized,
//! mollified linearization inside an outer Picard loop.

// index loops mirror the tensor notation; negated comparisons also reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod field_io;
pub mod fluid;
pub mod geometry;
pub mod grid;
pub mod interp;
pub mod jet;
pub mod kinematics;
pub mod mat;
pub mod random;
pub mod regularization;
pub mod shell;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
