//! Numerical laboratory for Harnack-type inequalities of stable-driven
//! Ornstein–Uhlenbeck processes.

pub mod density;
pub mod error;
pub mod harnack_lab;
pub mod levy_core;
pub mod linalg;
pub mod ou_semigroup;
pub mod quadrature;
pub mod sampling;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
