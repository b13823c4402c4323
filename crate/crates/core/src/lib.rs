//! Equilibrium morphologies of diblock copolymer thin films on chemically
//! patterned substrates, and adjoint-based placement of the guideposts that
//! form the pattern.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod commands;
pub mod config;
pub mod energy;
pub mod error;
pub mod fem;
pub mod guidepost;
pub mod io;
pub mod optimizer;
pub mod random_field;
pub mod robustness;
pub mod state;
pub mod target;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
