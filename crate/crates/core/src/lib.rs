//! Spectral diagnostics and surgery for fine-tuned transformer checkpoints.
//!
//! The numerical modules are generic over [`Scalar`] (`f32`/`f64`); the aliases at the crate
//! root fix the working precision to `f64`.

pub mod advantage;
pub mod error;
pub mod penalty;
pub mod scalar;
pub mod spectral;
pub mod surgery;
pub mod tensor_store;
pub mod tolerances;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

/// Working-precision matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
pub type SvdTriple = spectral::SvdTriple<f64>;
pub type DeltaSpectrum = spectral::DeltaSpectrum<f64>;
pub type AngleSpectrum = spectral::AngleSpectrum<f64>;
pub type PenaltyRef = penalty::PenaltyRef<f64>;
pub type TrajectoryTrace = advantage::TrajectoryTrace<f64>;
pub type GaeParams = advantage::GaeParams<f64>;
