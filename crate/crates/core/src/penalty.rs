//! Rotation-preservation penalty against frozen reference subspaces.
//!
//! `R(W) = ‖(I − P_U)·W·P_V‖² + ‖P_U·W·(I − P_V)‖²` with `P_U = U_r·U_rᵀ`, `P_V = V_r·V_rᵀ`.
//! Only the two off-diagonal blocks of `W` in the reference split are penalized, so changing
//! singular values (or anything inside either block) costs nothing.
//!
//! Neither projector is formed: with `B = W·V_r`, `A = U_rᵀ·W` and `C = U_rᵀ·W·V_r`,
//! the first term is `‖B − U_r·C‖²` and the second `‖A − C·V_rᵀ‖²`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::svd;
use crate::tolerances::DEGENERATE_GAP_REL;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyRef<T: Scalar> {
    u_r: DMatrix<T>,
    v_r: DMatrix<T>,
    /// `σ_r − σ_{r+1}` of the reference, with `σ_{r+1} = 0` at full thin rank.
    pub boundary_gap: T,
    /// Leading singular value of the reference.
    pub sigma_1: T,
}

impl<T: Scalar> PenaltyRef<T> {
    pub fn rank(&self) -> usize {
        self.u_r.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u_r.nrows(), self.v_r.nrows())
    }

    pub fn u_r(&self) -> &DMatrix<T> {
        &self.u_r
    }

    pub fn v_r(&self) -> &DMatrix<T> {
        &self.v_r
    }

    /// The top-`r` subspaces are not well defined when the gap is below `1e-6·σ₁`; the
    /// penalty is still computed against the chosen basis.
    pub fn degenerate(&self) -> bool {
        self.boundary_gap < T::lit(DEGENERATE_GAP_REL) * self.sigma_1
    }
}

pub fn fit_reference<T: Scalar>(w_ref: &DMatrix<T>, r: usize) -> Result<PenaltyRef<T>> {
    let thin = w_ref.nrows().min(w_ref.ncols());
    if r == 0 || r > thin {
        return Err(Error::RankOutOfRange {
            index: r,
            rank: thin,
        });
    }
    let t = svd(w_ref)?;
    let next = if r < thin { t.sigma[r] } else { T::zero() };
    Ok(PenaltyRef {
        u_r: t.u.columns(0, r).into_owned(),
        v_r: t.v.columns(0, r).into_owned(),
        boundary_gap: t.sigma[r - 1] - next,
        sigma_1: t.sigma[0],
    })
}

/// The two cross blocks `(B − U_r·C)` (m×r) and `(A − C·V_rᵀ)` (r×n).
fn cross_blocks<T: Scalar>(w: &DMatrix<T>, p: &PenaltyRef<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if w.shape() != p.shape() {
        return Err(Error::ShapeMismatch {
            what: "penalty input".into(),
            expected: vec![p.shape().0, p.shape().1],
            found: vec![w.nrows(), w.ncols()],
        });
    }
    let b = w * &p.v_r;
    let a = p.u_r.transpose() * w;
    let c = &a * &p.v_r;
    let left = b - &p.u_r * &c;
    let right = a - c * p.v_r.transpose();
    Ok((left, right))
}

pub fn penalty_value<T: Scalar>(w: &DMatrix<T>, p: &PenaltyRef<T>) -> Result<T> {
    let (left, right) = cross_blocks(w, p)?;
    Ok(left.norm_squared() + right.norm_squared())
}

/// `∇R = 2·(I − P_U)·W·P_V + 2·P_U·W·(I − P_V)`.
pub fn penalty_grad<T: Scalar>(w: &DMatrix<T>, p: &PenaltyRef<T>) -> Result<DMatrix<T>> {
    let (left, right) = cross_blocks(w, p)?;
    let two = T::lit(2.0);
    Ok((left * p.v_r.transpose() + &p.u_r * right) * two)
}
