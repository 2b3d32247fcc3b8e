//! Pseudodifferential calculus on noncommutative n-tori.
//!
//! Elements of A_theta are finite Fourier series, symbols are expression trees over
//! A_theta-valued leaves, and operators are realized as matrices on the Fourier box
//! |k|_inf <= N.

pub mod algebra;
pub mod calculus;
pub mod error;
pub mod gauss;
pub mod geometry;
pub mod lattice;
pub mod linalg;
pub mod power;
pub mod quant;
pub mod resolvent;
pub mod symbol;

pub use algebra::{NcElement, ThetaMatrix};
pub use error::{Error, Result};

/// Crate version, embedded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
