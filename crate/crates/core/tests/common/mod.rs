//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls the crate's solvers or linear algebra.
#![allow(dead_code)]

use csnc::Mat;
use nalgebra::DMatrix;

pub fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Numerical rank from nalgebra's SVD, relative tolerance `rtol`.
pub fn svd_rank(m: &Mat, rtol: f64) -> usize {
    let sv = to_na(m).singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rtol * top).count()
}

pub fn lasso_objective(g: &Mat, z: &[f64], xi: f64, beta: &[f64]) -> f64 {
    let q = g.rows();
    let mut r = 0.0;
    for i in 0..q {
        let gi: f64 = g.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        r += (z[i] - gi).powi(2);
    }
    r / (2.0 * q as f64) + xi * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Accelerated projected gradient on the split form `β = u − v`, `u, v ≥ 0`:
/// minimize `(1/2q)‖z − G(u − v)‖² + ξ 1ᵀ(u + v)` over the nonnegative
/// orthant. Restarts momentum whenever the objective rises.
pub fn projected_gradient_lasso(g: &Mat, z: &[f64], xi: f64, iters: usize) -> Vec<f64> {
    let (q, p) = (g.rows(), g.cols());
    let gn = to_na(g);
    let zn = nalgebra::DVector::from_column_slice(z);
    let qf = q as f64;
    // Lipschitz constant of the split objective's gradient: 2 λmax(GᵀG)/q.
    let gram = gn.transpose() * &gn;
    let lmax = gram.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
    let step = 1.0 / (2.0 * lmax / qf).max(1e-300);
    let mut u = vec![0.0; p];
    let mut v = vec![0.0; p];
    let (mut yu, mut yv) = (u.clone(), v.clone());
    let mut t = 1.0f64;
    let obj = |u: &[f64], v: &[f64]| {
        let b: Vec<f64> = u.iter().zip(v).map(|(a, c)| a - c).collect();
        lasso_objective(g, z, xi, &b)
    };
    let mut f_prev = obj(&u, &v);
    for _ in 0..iters {
        let b = nalgebra::DVector::from_iterator(p, yu.iter().zip(&yv).map(|(a, c)| a - c));
        let grad = gn.transpose() * (&gn * b - &zn) / qf;
        let nu: Vec<f64> = (0..p).map(|j| (yu[j] - step * (grad[j] + xi)).max(0.0)).collect();
        let nv: Vec<f64> = (0..p).map(|j| (yv[j] - step * (-grad[j] + xi)).max(0.0)).collect();
        let f = obj(&nu, &nv);
        if f > f_prev {
            t = 1.0;
            yu = u.clone();
            yv = v.clone();
            continue;
        }
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / nt;
        yu = (0..p).map(|j| nu[j] + w * (nu[j] - u[j])).collect();
        yv = (0..p).map(|j| nv[j] + w * (nv[j] - v[j])).collect();
        u = nu;
        v = nv;
        t = nt;
        f_prev = f;
    }
    u.iter().zip(&v).map(|(a, c)| a - c).collect()
}

pub fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Closed-form LASSO for `GᵀG = q I`: `β_j = soft(g_jᵀ z / q, ξ)`.
pub fn orthogonal_design_solution(g: &Mat, z: &[f64], xi: f64) -> Vec<f64> {
    let q = g.rows() as f64;
    (0..g.cols())
        .map(|j| {
            let c: f64 = (0..g.rows()).map(|i| g.row(i)[j] * z[i]).sum();
            soft(c / q, xi)
        })
        .collect()
}

/// Random q × p design with `GᵀG = q I` (q ≥ p), from nalgebra's QR.
pub fn orthogonal_design(q: usize, p: usize, entries: &[f64]) -> Mat {
    let a = DMatrix::from_row_slice(q, p, &entries[..q * p]);
    let qm = a.qr().q();
    let s = (q as f64).sqrt();
    Mat::from_fn(q, p, |i, j| s * qm[(i, j)])
}

/// Least squares through nalgebra's SVD.
pub fn lstsq(a: &Mat, b: &[f64]) -> Vec<f64> {
    let svd = to_na(a).svd(true, true);
    let x = svd
        .solve(&nalgebra::DVector::from_column_slice(b), 1e-12)
        .expect("svd solve");
    x.iter().cloned().collect()
}
