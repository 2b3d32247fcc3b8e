//! The noncommutative torus A_theta on finite Fourier series.

mod element;
mod theta;

pub use element::{CoefficientRecord, ElementRecord, NcElement, DEFAULT_PRUNE, MAX_CONDITION};
pub(crate) use element::same_theta;
pub use theta::ThetaMatrix;
