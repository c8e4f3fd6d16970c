//! Numerical tolerances used across the toolkit (working precision `f64`).
//!
//! | constant            | value  | used for                                                  |
//! |---------------------|--------|-----------------------------------------------------------|
//! | `ORTHO_BUILD`       | 1e-10  | `‖UᵀU − I‖_F` the SVD guarantees on its own output         |
//! | `ORTHO_ACCEPT`      | 1e-8   | `‖QᵀQ − I‖_F` accepted on bases handed to angle routines    |
//! | `SVD_RECON_REL`     | 1e-10  | `‖UΣVᵀ − W‖_F ≤ tol·(1 + ‖W‖_F)`                            |
//! | `DEGENERATE_GAP_REL`| 1e-6   | boundary gap `σ_k − σ_{k+1} < tol·σ_1` is flagged           |
//! | `KL_FLOOR`          | -1e-9  | smallest KL value accepted before it is treated as an error|

pub const ORTHO_BUILD: f64 = 1e-10;
pub const ORTHO_ACCEPT: f64 = 1e-8;
pub const SVD_RECON_REL: f64 = 1e-10;
pub const DEGENERATE_GAP_REL: f64 = 1e-6;
pub const KL_FLOOR: f64 = -1e-9;
