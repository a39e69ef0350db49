//! Seeded random matrices and the linear-algebra primitives shared by the
//! rest of the crate.
//!
//! Singular values are computed from a Jacobi eigen-decomposition of the
//! smaller Gram matrix, which is accurate enough for the desk-scale
//! dimensions (a few hundred) used by the simulator.

mod linalg;
mod mat;
mod rng;

pub use linalg::{
    least_squares, matrix_rank, max_singular_value, min_singular_value, singular_values, solve,
    sym_eigen, Qr, SymEigen,
};
pub use mat::{dot, norm1, norm2, sq_dist, sq_norm, sub_vec, Mat};
pub use rng::Seed;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};

/// Matrix with i.i.d. `N(0, stddev²)` entries.
pub fn gaussian_matrix(rows: usize, cols: usize, stddev: f64, seed: Seed) -> Result<Mat> {
    ensure!(
        rows >= 1 && cols >= 1,
        "gaussian_matrix: zero dimension {rows}x{cols}"
    );
    ensure!(
        stddev > 0.0 && stddev.is_finite(),
        "gaussian_matrix: stddev must be positive, got {stddev}"
    );
    let mut rng = seed.rng();
    let data = (0..rows * cols)
        .map(|_| stddev * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Mat::from_vec(rows, cols, data)
}

/// Matrix with i.i.d. entries uniform on `{-1, +1}`.
pub fn rademacher_matrix(rows: usize, cols: usize, seed: Seed) -> Result<Mat> {
    ensure!(
        rows >= 1 && cols >= 1,
        "rademacher_matrix: zero dimension {rows}x{cols}"
    );
    let mut rng = seed.rng();
    let data = (0..rows * cols)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    Mat::from_vec(rows, cols, data)
}

/// `sign(v) · max(|v| − t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian draw with the
/// sign of R's diagonal folded into Q).
pub fn random_orthonormal(dim: usize, seed: Seed) -> Result<Mat> {
    let g = gaussian_matrix(dim, dim, 1.0, seed)?;
    let qr = Qr::new(&g)?;
    let signs: Vec<f64> = qr
        .r_diag()
        .iter()
        .map(|&r| if r < 0.0 { -1.0 } else { 1.0 })
        .collect();
    Ok(qr.thin_q().scale_columns(&signs))
}
