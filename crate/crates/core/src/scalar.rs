//! Scalar abstraction shared by the numerical modules.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};

/// Real floating-point type the spectral, surgery, penalty and GAE code is generic over.
///
/// Implemented for `f32` and `f64`. Analysis defaults to `f64`; `f32` is useful for
/// quick looks at very large matrices where the looser tolerances are acceptable.
pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + FloatConst
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Orthonormality tolerance accepted on caller-supplied bases (Frobenius norm of `QᵀQ - I`).
    const ORTHO_ACCEPT: f64;
    /// Orthonormality tolerance the SVD must meet on its own output.
    const ORTHO_BUILD: f64;
    /// Relative reconstruction tolerance for the SVD.
    const RECON_REL: f64;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    fn is_finite_val(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f64 {
    const ORTHO_ACCEPT: f64 = crate::tolerances::ORTHO_ACCEPT;
    const ORTHO_BUILD: f64 = crate::tolerances::ORTHO_BUILD;
    const RECON_REL: f64 = crate::tolerances::SVD_RECON_REL;
}

impl Scalar for f32 {
    const ORTHO_ACCEPT: f64 = 1e-4;
    const ORTHO_BUILD: f64 = 1e-3;
    const RECON_REL: f64 = 1e-3;
}
