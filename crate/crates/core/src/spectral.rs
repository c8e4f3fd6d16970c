//! Thin SVD, truncated reconstruction, singular-value drift, principal angles between
//! subspaces, and orthogonal Procrustes alignment.

use faer::Mat;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Thin SVD `W = U·diag(σ)·Vᵀ` with `r = min(m, n)` triplets, σ descending, signs canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple<T: Scalar> {
    /// `m × r`, left singular vectors as columns.
    pub u: DMatrix<T>,
    pub sigma: DVector<T>,
    /// `n × r`, right singular vectors as columns.
    pub v: DMatrix<T>,
}

impl<T: Scalar> SvdTriple<T> {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    /// Flips each pair `(u_i, v_i)` so that the largest-magnitude entry of `u_i` is positive
    /// (ties resolved towards the lowest row index). Idempotent; `U·diag(σ)·Vᵀ` is unchanged.
    pub fn canonicalize(&mut self) {
        for i in 0..self.rank() {
            let col = self.u.column(i);
            let mut best = 0;
            let mut best_abs = T::zero();
            for (row, &x) in col.iter().enumerate() {
                if x.abs() > best_abs {
                    best_abs = x.abs();
                    best = row;
                }
            }
            if col[best] < T::zero() {
                self.u.column_mut(i).neg_mut();
                self.v.column_mut(i).neg_mut();
            }
        }
    }

    /// `Σ_{i ∈ keep} σ_i·u_i·v_iᵀ`.
    pub fn reconstruct(&self, keep: Range<usize>) -> Result<DMatrix<T>> {
        if keep.start > keep.end || keep.end > self.rank() {
            return Err(Error::RankOutOfRange {
                index: keep.end.max(keep.start),
                rank: self.rank(),
            });
        }
        self.reconstruct_indices(keep)
    }

    /// Reconstruction restricted to an arbitrary set of ranks.
    pub fn reconstruct_indices(&self, keep: impl IntoIterator<Item = usize>) -> Result<DMatrix<T>> {
        let mut out = DMatrix::zeros(self.rows(), self.cols());
        for i in keep {
            if i >= self.rank() {
                return Err(Error::RankOutOfRange {
                    index: i,
                    rank: self.rank(),
                });
            }
            out.ger(
                self.sigma[i],
                &self.u.column(i),
                &self.v.column(i),
                T::one(),
            );
        }
        Ok(out)
    }

    pub fn to_matrix(&self) -> DMatrix<T> {
        let mut us = self.u.clone();
        for (i, mut col) in us.column_iter_mut().enumerate() {
            col *= self.sigma[i];
        }
        us * self.v.transpose()
    }

    /// Boundary gap `σ_{k-1} − σ_k` between the first `k` ranks and the rest; `None` at the ends.
    pub fn boundary_gap(&self, k: usize) -> Option<T> {
        (k > 0 && k < self.rank()).then(|| self.sigma[k - 1] - self.sigma[k])
    }
}

/// The factorization itself runs in `f64` through faer; `f32` inputs are widened.
fn to_faer<T: Scalar>(w: &DMatrix<T>) -> Mat<f64> {
    Mat::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)].as_f64())
}

fn from_faer<T: Scalar>(m: faer::MatRef<'_, f64>) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| T::lit(m[(i, j)]))
}

/// Thin, sign-canonical SVD of a finite, non-empty matrix.
///
/// Orthonormality and reconstruction are verified before returning; a violation or a
/// failed QR sweep is reported as an error rather than returning a degraded result.
pub fn svd<T: Scalar>(w: &DMatrix<T>) -> Result<SvdTriple<T>> {
    let (m, n) = w.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("SVD of an empty matrix".into()));
    }
    if w.iter().any(|x| !x.is_finite_val()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let dec = to_faer(w)
        .thin_svd()
        .map_err(|_| Error::NonConvergence { rows: m, cols: n })?;
    let sigma = dec.S().column_vector();
    let mut triple = SvdTriple {
        u: from_faer(dec.U()),
        sigma: DVector::from_fn(m.min(n), |i, _| T::lit(sigma[i])),
        v: from_faer(dec.V()),
    };
    sort_descending(&mut triple);
    triple.canonicalize();
    verify(&triple, w)?;
    Ok(triple)
}

/// Singular values only, descending.
pub fn singular_values<T: Scalar>(w: &DMatrix<T>) -> Result<DVector<T>> {
    let (m, n) = w.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("SVD of an empty matrix".into()));
    }
    if w.iter().any(|x| !x.is_finite_val()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let mut s: Vec<T> = to_faer(w)
        .singular_values()
        .map_err(|_| Error::NonConvergence { rows: m, cols: n })?
        .into_iter()
        .map(T::lit)
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    Ok(DVector::from_vec(s))
}

fn sort_descending<T: Scalar>(t: &mut SvdTriple<T>) {
    let r = t.rank();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        t.sigma[b]
            .partial_cmp(&t.sigma[a])
            .expect("finite singular values")
    });
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return;
    }
    let u = DMatrix::from_fn(t.u.nrows(), r, |i, j| t.u[(i, order[j])]);
    let v = DMatrix::from_fn(t.v.nrows(), r, |i, j| t.v[(i, order[j])]);
    let s = DVector::from_fn(r, |i, _| t.sigma[order[i]]);
    *t = SvdTriple { u, sigma: s, v };
}

/// `‖QᵀQ − I‖_F`.
pub fn orthonormality_error<T: Scalar>(q: &DMatrix<T>) -> T {
    let mut g = q.transpose() * q;
    for i in 0..g.nrows() {
        g[(i, i)] -= T::one();
    }
    g.norm()
}

fn verify<T: Scalar>(t: &SvdTriple<T>, w: &DMatrix<T>) -> Result<()> {
    let ortho_tol = T::ORTHO_BUILD;
    for (what, q) in [("UᵀU = I", &t.u), ("VᵀV = I", &t.v)] {
        let dev = orthonormality_error(q).as_f64();
        if dev > ortho_tol {
            return Err(Error::SvdInvariant {
                what,
                deviation: dev,
            });
        }
    }
    let resid = (t.to_matrix() - w).norm().as_f64();
    let bound = T::RECON_REL * (1.0 + w.norm().as_f64());
    if resid > bound {
        return Err(Error::SvdInvariant {
            what: "UΣVᵀ = W",
            deviation: resid,
        });
    }
    Ok(())
}

/// Per-rank singular-value change `σ_i(B) − σ_i(A)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaSpectrum<T: Scalar> {
    pub sigma_a: Vec<T>,
    pub sigma_b: Vec<T>,
    pub delta: Vec<T>,
    pub max_abs: T,
    pub mean: T,
    /// `max|Δσ| / σ_1(A)`; zero when `A` is the zero matrix.
    pub relative_drift: T,
}

pub fn delta_sigma<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DeltaSpectrum<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            what: "delta_sigma operands".into(),
            expected: vec![a.nrows(), a.ncols()],
            found: vec![b.nrows(), b.ncols()],
        });
    }
    let sa = singular_values(a)?;
    let sb = singular_values(b)?;
    Ok(delta_from_spectra(sa.as_slice(), sb.as_slice()))
}

pub fn delta_from_spectra<T: Scalar>(sa: &[T], sb: &[T]) -> DeltaSpectrum<T> {
    let r = sa.len().min(sb.len());
    let delta: Vec<T> = (0..r).map(|i| sb[i] - sa[i]).collect();
    let max_abs = delta.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let mean = if r == 0 {
        T::zero()
    } else {
        delta.iter().fold(T::zero(), |s, &d| s + d) / T::lit(r as f64)
    };
    let top = sa.first().copied().unwrap_or_else(T::zero);
    let relative_drift = if top > T::zero() {
        max_abs / top
    } else {
        T::zero()
    };
    DeltaSpectrum {
        sigma_a: sa[..r].to_vec(),
        sigma_b: sb[..r].to_vec(),
        delta,
        max_abs,
        mean,
        relative_drift,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Principal angles between two column spaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleSpectrum<T: Scalar> {
    /// Canonical cosines, descending, in `[0, 1]`.
    pub cosines: Vec<T>,
    /// Angles in radians, ascending, in `[0, π/2]`.
    pub angles: Vec<T>,
    pub side: Option<Side>,
    pub rank: usize,
}

impl<T: Scalar> AngleSpectrum<T> {
    pub fn degrees(&self) -> Vec<f64> {
        self.angles
            .iter()
            .map(|a| a.as_f64().to_degrees())
            .collect()
    }

    pub fn max_angle(&self) -> T {
        self.angles.last().copied().unwrap_or_else(T::zero)
    }

    pub fn min_angle(&self) -> T {
        self.angles.first().copied().unwrap_or_else(T::zero)
    }
}

fn check_orthonormal<T: Scalar>(q: &DMatrix<T>) -> Result<()> {
    let dev = orthonormality_error(q).as_f64();
    if dev > T::ORTHO_ACCEPT || !dev.is_finite() {
        return Err(Error::NotOrthonormal { deviation: dev });
    }
    Ok(())
}

/// Principal angles between `span(ua)` and `span(ub)` (Björck–Golub).
///
/// Cosines are the singular values of `uaᵀ·ub`. Angles whose cosine exceeds `1/√2` are taken
/// from the sines (singular values of the component of the smaller basis orthogonal to the
/// larger one), since `arccos` is ill-conditioned near 1; the rest use `arccos` on the
/// clamped cosines. With `p, q` columns the spectrum has `min(p, q)` angles.
pub fn principal_angles<T: Scalar>(ua: &DMatrix<T>, ub: &DMatrix<T>) -> Result<AngleSpectrum<T>> {
    if ua.nrows() != ub.nrows() {
        return Err(Error::ShapeMismatch {
            what: "principal_angles bases (ambient dimension)".into(),
            expected: vec![ua.nrows(), ua.ncols()],
            found: vec![ub.nrows(), ub.ncols()],
        });
    }
    if ua.ncols() == 0 || ub.ncols() == 0 {
        return Err(Error::InvalidArgument("empty subspace basis".into()));
    }
    check_orthonormal(ua)?;
    check_orthonormal(ub)?;
    let (wide, narrow) = if ua.ncols() >= ub.ncols() {
        (ua, ub)
    } else {
        (ub, ua)
    };
    let q = narrow.ncols();
    let cross = wide.transpose() * narrow;
    let cosines: Vec<T> = singular_values(&cross)?
        .iter()
        .map(|&s| s.max(-T::one()).min(T::one()).abs())
        .collect();

    let half = T::lit(0.5);
    let needs_sines = cosines.iter().any(|&c| c * c > half);
    let sines: Vec<T> = if needs_sines {
        let residual = narrow - wide * &cross;
        let mut s: Vec<T> = singular_values(&residual)?.iter().copied().collect();
        s.reverse();
        s.truncate(q);
        s
    } else {
        Vec::new()
    };

    let mut angles: Vec<T> = cosines
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if c * c > half {
                sines[i].min(T::one()).asin()
            } else {
                c.acos()
            }
        })
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    Ok(AngleSpectrum {
        cosines,
        angles,
        side: None,
        rank: q,
    })
}

/// Angles between the leading `rank` (default: all) singular subspaces of two matrices.
pub fn singular_subspace_angles<T: Scalar>(
    a: &SvdTriple<T>,
    b: &SvdTriple<T>,
    side: Side,
    rank: Option<usize>,
) -> Result<AngleSpectrum<T>> {
    let (ba, bb) = match side {
        Side::Left => (&a.u, &b.u),
        Side::Right => (&a.v, &b.v),
    };
    let k = rank.unwrap_or(usize::MAX).min(ba.ncols()).min(bb.ncols());
    let mut spec = principal_angles(
        &ba.columns(0, k).into_owned(),
        &bb.columns(0, k).into_owned(),
    )?;
    spec.side = Some(side);
    Ok(spec)
}

/// Orthogonal `R` minimising `‖A·R − B‖_F`: with `AᵀB = P·S·Qᵀ`, `R = P·Qᵀ`.
pub fn procrustes<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            what: "procrustes operands".into(),
            expected: vec![a.nrows(), a.ncols()],
            found: vec![b.nrows(), b.ncols()],
        });
    }
    let t = svd(&(a.transpose() * b))?;
    Ok(&t.u * t.v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot2(deg: f64) -> DMatrix<f64> {
        let (s, c) = deg.to_radians().sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let t = svd(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!(t.sigma.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_matrix_canonical() {
        let w = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let t = svd(&w).unwrap();
        assert_eq!(t.sigma.as_slice(), &[3.0, 1.0]);
        assert!((&t.u - DMatrix::identity(2, 2)).norm() < 1e-15);
        assert!((&t.v - DMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn ascending_diagonal_is_reordered() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let t = svd(&w).unwrap();
        assert_eq!(t.sigma.as_slice(), &[3.0, 1.0]);
        // u_0 = e_2 canonically positive, so v_0 = -e_2.
        assert!(t.u[(1, 0)] > 0.0 && t.v[(1, 0)] < 0.0);
        assert!((t.to_matrix() - w).norm() < 1e-15);
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let w = DMatrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.7);
        let t = svd(&w).unwrap();
        let mut again = t.clone();
        again.canonicalize();
        assert_eq!(again, t);
    }

    #[test]
    fn rank_deficient_still_orthonormal() {
        let w = DMatrix::from_fn(6, 4, |i, _| i as f64);
        let t = svd(&w).unwrap();
        assert!(orthonormality_error(&t.u) < 1e-12);
        assert!(orthonormality_error(&t.v) < 1e-12);
        assert!(t.sigma[1] < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let t = svd(&DMatrix::<f64>::zeros(3, 5)).unwrap();
        assert!(t.sigma.iter().all(|&s| s == 0.0));
        assert!(orthonormality_error(&t.u) < 1e-12);
    }

    #[test]
    fn svd_rejects_empty_and_non_finite() {
        assert!(svd(&DMatrix::<f64>::zeros(0, 3)).is_err());
        let mut w = DMatrix::<f64>::identity(2, 2);
        w[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&w), Err(Error::NonFinite(_))));
    }

    #[test]
    fn f32_svd_works() {
        let w = DMatrix::<f32>::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0]);
        let t = svd(&w).unwrap();
        assert!((t.to_matrix() - w).norm() < 1e-5);
    }

    #[test]
    fn reconstruct_ranges() {
        let w = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let t = svd(&w).unwrap();
        assert!((t.reconstruct(0..2).unwrap() - &w).norm() < 1e-14);
        assert_eq!(t.reconstruct(0..0).unwrap(), DMatrix::zeros(2, 2));
        let top = t.reconstruct(0..1).unwrap();
        assert!((top - DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0])).norm() < 1e-15);
        assert!(matches!(
            t.reconstruct(1..3),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn delta_sigma_basics() {
        let a = DMatrix::from_fn(4, 3, |i, j| {
            (i as f64 + 1.0) * (j as f64 - 0.5) + (i * j) as f64
        });
        let zero = delta_sigma(&a, &a).unwrap();
        assert!(zero.delta.iter().all(|&d| d == 0.0));
        let doubled = delta_sigma(&a, &(&a * 2.0)).unwrap();
        for (d, s) in doubled.delta.iter().zip(&doubled.sigma_a) {
            assert!((d - s).abs() < 1e-12);
        }
        assert!(delta_sigma(&a, &DMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn orthogonal_lines_in_plane() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let a = principal_angles(&e1, &e2).unwrap();
        assert!((a.angles[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let same = principal_angles(&e1, &e1).unwrap();
        assert_eq!(same.angles, vec![0.0]);
    }

    #[test]
    fn rotated_line_gives_rotation_angle() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let rotated = rot2(10.0) * &e1;
        let a = principal_angles(&e1, &rotated).unwrap();
        assert!((a.angles[0] - 10f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn non_orthonormal_rejected() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(
            principal_angles(&a, &a),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn unequal_subspace_dimensions() {
        let a = DMatrix::<f64>::identity(3, 2);
        let b = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let s = principal_angles(&a, &b).unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.angles[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn procrustes_identity() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let r = procrustes(&a, &a).unwrap();
        assert!((r - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
