#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut StdRng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

/// Random matrix with orthonormal columns (QR of a Gaussian matrix).
pub fn orthonormal(rng: &mut StdRng, m: usize, k: usize) -> DMatrix<f64> {
    let q = gaussian(rng, m, k).qr().q();
    q.columns(0, k).into_owned()
}

pub fn skew(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    let g = gaussian(rng, n, n);
    (&g - g.transpose()) * 0.5
}

/// `U·diag(sigma)·Vᵀ` with random orthonormal factors.
pub fn with_spectrum(rng: &mut StdRng, m: usize, n: usize, sigma: &[f64]) -> DMatrix<f64> {
    let r = sigma.len();
    let u = orthonormal(rng, m, r);
    let v = orthonormal(rng, n, r);
    &u * DMatrix::from_diagonal(&DVector::from_column_slice(sigma)) * v.transpose()
}

pub fn rot2(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// One-sided Jacobi (Hestenes) SVD, written independently of the library path.
/// Returns `(u, sigma, v)` thin, with sigma descending.
pub fn jacobi_svd(w: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    if w.nrows() < w.ncols() {
        let (u, s, v) = jacobi_svd(&w.transpose());
        return (v, s, u);
    }
    let (m, n) = w.shape();
    let mut a = w.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..80 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = a.column(p).norm_squared();
                let beta: f64 = a.column(q).norm_squared();
                let gamma: f64 = a.column(p).dot(&a.column(q));
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * x - s * y;
                    a[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        s.push(norms[j]);
        if norms[j] > 0.0 {
            u.set_column(k, &(a.column(j) / norms[j]));
        }
        vs.set_column(k, &v.column(j));
    }
    (u, s, vs)
}

pub fn ortho_err(q: &DMatrix<f64>) -> f64 {
    (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).norm()
}

/// Log-log least-squares slope.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
