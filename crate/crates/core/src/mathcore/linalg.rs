//! Small dense factorizations: cyclic Jacobi for symmetric eigenproblems and
//! Householder QR for least squares.

use super::mat::{dot, Mat};
use crate::error::{ensure, invalid, Result};

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Mat,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigen-decomposition. Only the upper triangle symmetry is assumed,
/// the input is symmetrized as `(A + Aᵀ)/2` first.
pub fn sym_eigen(a: &Mat) -> Result<SymEigen> {
    ensure!(a.rows() == a.cols(), "sym_eigen needs a square matrix");
    ensure!(a.is_finite(), "sym_eigen: non-finite entries");
    let n = a.rows();
    let mut m: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            0.5 * (a[(i, j)] + a[(j, i)])
        })
        .collect();
    let mut v = Mat::identity(n);
    let vs = v.as_mut_slice();

    let total: f64 = m.iter().map(|x| x * x).sum();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off <= f64::EPSILON * f64::EPSILON * total * 1e-4 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = vs[k * n + p];
                    let vkq = vs[k * n + q];
                    vs[k * n + p] = c * vkp - s * vkq;
                    vs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[x * n + x].total_cmp(&m[y * n + y]));
    let values = order.iter().map(|&k| m[k * n + k]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}

/// Singular values in descending order (`min(rows, cols)` of them), computed
/// from the eigenvalues of the smaller Gram matrix.
pub fn singular_values(m: &Mat) -> Result<Vec<f64>> {
    ensure!(!m.is_empty(), "singular values of an empty matrix");
    ensure!(m.is_finite(), "singular values: non-finite entries");
    let gram = if m.rows() >= m.cols() {
        m.gram()
    } else {
        m.outer_gram()
    };
    let eig = sym_eigen(&gram)?;
    Ok(eig.values.iter().rev().map(|&l| l.max(0.0).sqrt()).collect())
}

pub fn min_singular_value(m: &Mat) -> Result<f64> {
    Ok(*singular_values(m)?.last().expect("nonempty"))
}

pub fn max_singular_value(m: &Mat) -> Result<f64> {
    Ok(singular_values(m)?[0])
}

/// Number of singular values above `tol * σ_max`.
pub fn matrix_rank(m: &Mat, tol: f64) -> Result<usize> {
    ensure!(tol > 0.0, "rank tolerance must be positive");
    let sv = singular_values(m)?;
    let cutoff = tol * sv[0];
    if sv[0] == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

/// Householder QR of a tall (or square) matrix.
#[derive(Debug, Clone)]
pub struct Qr {
    rows: usize,
    cols: usize,
    /// Column-major: `packed[j]` holds column `j`; R is above the diagonal,
    /// the Householder vector below it (with the leading 1 implicit).
    packed: Vec<Vec<f64>>,
    betas: Vec<f64>,
    rdiag: Vec<f64>,
}

impl Qr {
    pub fn new(a: &Mat) -> Result<Qr> {
        let (rows, cols) = a.shape();
        ensure!(rows >= cols && cols >= 1, "QR needs rows >= cols >= 1");
        let mut packed: Vec<Vec<f64>> = (0..cols).map(|j| a.col(j)).collect();
        let mut betas = vec![0.0; cols];
        let mut rdiag = vec![0.0; cols];
        for k in 0..cols {
            let x = &packed[k][k..];
            let alpha = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if alpha == 0.0 {
                betas[k] = 0.0;
                rdiag[k] = 0.0;
                continue;
            }
            let x0 = x[0];
            let r = if x0 > 0.0 { -alpha } else { alpha };
            // v = x - r e1, normalized so v[0] = 1.
            let v0 = x0 - r;
            let col = &mut packed[k];
            for i in (k + 1)..rows {
                col[i] /= v0;
            }
            let beta = -v0 / r;
            betas[k] = beta;
            rdiag[k] = r;
            col[k] = r;
            let (head, tail) = packed.split_at_mut(k + 1);
            let v = &head[k];
            for c in tail.iter_mut() {
                let mut s = c[k];
                for i in (k + 1)..rows {
                    s += v[i] * c[i];
                }
                s *= beta;
                c[k] -= s;
                for i in (k + 1)..rows {
                    c[i] -= s * v[i];
                }
            }
        }
        Ok(Qr {
            rows,
            cols,
            packed,
            betas,
            rdiag,
        })
    }

    /// In-place `Qᵀ b`.
    fn apply_qt(&self, b: &mut [f64]) {
        for k in 0..self.cols {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let v = &self.packed[k];
            let mut s = b[k];
            for i in (k + 1)..self.rows {
                s += v[i] * b[i];
            }
            s *= beta;
            b[k] -= s;
            for i in (k + 1)..self.rows {
                b[i] -= s * v[i];
            }
        }
    }

    /// In-place `Q b`.
    fn apply_q(&self, b: &mut [f64]) {
        for k in (0..self.cols).rev() {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let v = &self.packed[k];
            let mut s = b[k];
            for i in (k + 1)..self.rows {
                s += v[i] * b[i];
            }
            s *= beta;
            b[k] -= s;
            for i in (k + 1)..self.rows {
                b[i] -= s * v[i];
            }
        }
    }

    /// Smallest |R_kk| relative to the largest; zero means rank deficient.
    pub fn diag_ratio(&self) -> f64 {
        let max = self.rdiag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return 0.0;
        }
        self.rdiag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())) / max
    }

    /// Least-squares solution of `min ‖A x − b‖`.
    pub fn solve_least_squares(&self, b: &[f64]) -> Result<Vec<f64>> {
        ensure!(b.len() == self.rows, "least squares rhs length mismatch");
        if self.diag_ratio() < 1e-13 {
            return invalid("least squares: matrix is numerically rank deficient");
        }
        let mut y = b.to_vec();
        self.apply_qt(&mut y);
        let mut x = vec![0.0; self.cols];
        for k in (0..self.cols).rev() {
            let mut s = y[k];
            for j in (k + 1)..self.cols {
                s -= self.packed[j][k] * x[j];
            }
            x[k] = s / self.rdiag[k];
        }
        Ok(x)
    }

    /// `(RᵀR)⁻¹ = (AᵀA)⁻¹`, the unscaled covariance of the least-squares fit.
    pub fn inverse_gram(&self) -> Result<Mat> {
        if self.diag_ratio() < 1e-13 {
            return invalid("inverse gram: matrix is numerically rank deficient");
        }
        let n = self.cols;
        // Rinv upper triangular.
        let mut rinv = Mat::zeros(n, n);
        for j in 0..n {
            rinv[(j, j)] = 1.0 / self.rdiag[j];
            for i in (0..j).rev() {
                let mut s = 0.0;
                for k in (i + 1)..=j {
                    s += self.packed[k][i] * rinv[(k, j)];
                }
                rinv[(i, j)] = -s / self.rdiag[i];
            }
        }
        rinv.matmul(&rinv.transpose())
    }

    /// The thin orthonormal factor (rows × cols).
    pub fn thin_q(&self) -> Mat {
        let mut q = Mat::zeros(self.rows, self.cols);
        let mut e = vec![0.0; self.rows];
        for j in 0..self.cols {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.apply_q(&mut e);
            q.set_col(j, &e);
        }
        q
    }

    /// Signs of the R diagonal (used to make random orthonormal draws Haar).
    pub fn r_diag(&self) -> &[f64] {
        &self.rdiag
    }
}

/// Least-squares fit `min ‖A x − b‖` for tall `A`.
pub fn least_squares(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    Qr::new(a)?.solve_least_squares(b)
}

/// Solves the square system `A x = b`.
pub fn solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    ensure!(a.rows() == a.cols(), "solve needs a square matrix");
    let qr = Qr::new(a)?;
    let x = qr.solve_least_squares(b)?;
    // Square Householder QR is exact up to rounding; fail loudly on singular input.
    let r = a.matvec(&x)?;
    let res = r
        .iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt();
    let scale = dot(b, b).sqrt().max(1.0);
    ensure!(
        res <= 1e-6 * scale,
        "solve: residual {res:e} indicates a singular matrix"
    );
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn diagonal_singular_values() {
        let d = Mat::diag(&[1.0, 2.0, 3.0]);
        assert!(approx(min_singular_value(&d).unwrap(), 1.0, 1e-12));
        assert!(approx(max_singular_value(&d).unwrap(), 3.0, 1e-12));
        for n in [1, 4, 9] {
            let i = Mat::identity(n);
            assert!(approx(min_singular_value(&i).unwrap(), 1.0, 1e-12));
            assert!(approx(max_singular_value(&i).unwrap(), 1.0, 1e-12));
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(matrix_rank(&Mat::identity(4), 1e-10).unwrap(), 4);
        let ones = Mat::from_fn(3, 3, |_, _| 1.0);
        assert_eq!(matrix_rank(&ones, 1e-10).unwrap(), 1);
        assert_eq!(matrix_rank(&Mat::zeros(2, 3), 1e-10).unwrap(), 0);
        assert!(matrix_rank(&ones, 0.0).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = Mat::identity(2);
        m.as_mut_slice()[1] = f64::INFINITY;
        assert!(min_singular_value(&m).is_err());
    }

    #[test]
    fn eigenvectors_reconstruct() {
        let a = Mat::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 3.0, 0.5],
            vec![-2.0, 0.5, 1.0],
        ])
        .unwrap();
        let e = sym_eigen(&a).unwrap();
        for j in 0..3 {
            let v = e.vectors.col(j);
            let av = a.matvec(&v).unwrap();
            for i in 0..3 {
                assert!((av[i] - e.values[j] * v[i]).abs() < 1e-12);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn least_squares_exact_for_consistent_system() {
        let a = Mat::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, -1.0],
            vec![0.5, 0.5],
            vec![2.0, 2.0],
        ])
        .unwrap();
        let x = [0.7, -1.3];
        let b = a.matvec(&x).unwrap();
        let got = least_squares(&a, &b).unwrap();
        assert!((got[0] - x[0]).abs() < 1e-12 && (got[1] - x[1]).abs() < 1e-12);
        let q = Qr::new(&a).unwrap().thin_q();
        let qtq = q.gram();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_gram_inverts() {
        let a = Mat::from_rows(&[vec![2.0, 0.0], vec![1.0, 1.0], vec![0.0, 3.0]]).unwrap();
        let inv = Qr::new(&a).unwrap().inverse_gram().unwrap();
        let prod = a.gram().matmul(&inv).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_solve_fails() {
        let a = Mat::from_fn(3, 3, |_, _| 1.0);
        assert!(solve(&a, &[1.0, 2.0, 3.0]).is_err());
    }
}
