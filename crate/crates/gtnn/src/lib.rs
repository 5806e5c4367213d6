//! Graph-tuple neural networks.
//!
//! Non-commutative polynomial filters over tuples of shift operators,
//! computable perturbation bounds, stability-constrained training, and a
//! graphon toolkit for checking transferability at desk scale.

pub mod data;
pub mod error;
pub mod experiments;
pub mod graphon;
pub mod io;
pub mod linop;
pub mod ncpoly;
pub mod network;
pub mod stability;

pub use error::{Error, Result};
