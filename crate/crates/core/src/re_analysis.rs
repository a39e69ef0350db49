//! Empirical restricted-eigenvalue (RE) analysis.
//!
//! The RE constant of a q × p matrix `G` over the cone
//! `C(S; α) = { y : ‖y_{Sᶜ}‖₁ ≤ α ‖y_S‖₁ }` is
//! `min_{y ∈ C} (1/q)‖G y‖² / ‖y‖²`. It cannot be computed exactly, so
//! `estimate_re` reports a minimum over a finite set of cone members: an
//! UPPER estimate of the true constant. Per support it includes the exact
//! on-support minimum, the smallest eigenvalue of `(1/q) G_Sᵀ G_S`.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::io::fmt_f64;
use crate::mathcore::{min_singular_value, random_orthonormal, sq_norm, sym_eigen, Mat, Seed};

/// `C(S; α)` in `dim` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSpec {
    pub dim: usize,
    /// Sorted, nonempty.
    pub support: Vec<usize>,
    pub alpha: f64,
}

impl ConeSpec {
    pub fn new(dim: usize, mut support: Vec<usize>, alpha: f64) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        ensure!(!support.is_empty(), "cone support must be nonempty");
        ensure!(
            *support.last().unwrap() < dim,
            "cone support index {} out of range for dim {dim}",
            support.last().unwrap()
        );
        ensure!(alpha >= 1.0 && alpha.is_finite(), "cone alpha must be >= 1, got {alpha}");
        Ok(ConeSpec { dim, support, alpha })
    }

    fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.dim];
        for &j in &self.support {
            m[j] = true;
        }
        m
    }

    /// `(‖y_S‖₁, ‖y_{Sᶜ}‖₁)`
    pub fn l1_split(&self, y: &[f64]) -> (f64, f64) {
        let mask = self.mask();
        let mut on = 0.0;
        let mut off = 0.0;
        for (v, &m) in y.iter().zip(&mask) {
            if m {
                on += v.abs();
            } else {
                off += v.abs();
            }
        }
        (on, off)
    }

    /// `‖y_{Sᶜ}‖₁ ≤ α‖y_S‖₁ (1 + tol)` and `y ≠ 0`.
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        let (on, off) = self.l1_split(y);
        on > 0.0 && off <= self.alpha * on * (1.0 + tol)
    }
}

/// Unit-norm member of the cone with a uniform random slack factor.
pub fn sample_cone_vector(spec: &ConeSpec, seed: Seed) -> Vec<f64> {
    let slack = seed.derive(0x51ac).rng().random::<f64>();
    sample_cone_vector_with_slack(spec, slack, seed)
}

/// Off-support block rescaled to `‖y_{Sᶜ}‖₁ = slack · α ‖y_S‖₁`.
pub fn sample_cone_vector_with_slack(spec: &ConeSpec, slack: f64, seed: Seed) -> Vec<f64> {
    let slack = slack.clamp(0.0, 1.0);
    let mask = spec.mask();
    let mut rng = seed.rng();
    let mut y: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
    let (on, off) = spec.l1_split(&y);
    let target = slack * spec.alpha * on;
    // One ulp of headroom keeps the inequality exact after rounding.
    let factor = if off > 0.0 { target / off * (1.0 - 4.0 * f64::EPSILON) } else { 0.0 };
    for (v, &m) in y.iter_mut().zip(&mask) {
        if !m {
            *v *= factor;
        }
    }
    let norm = sq_norm(&y).sqrt();
    if norm > 0.0 {
        y.iter_mut().for_each(|v| *v /= norm);
    }
    y
}

/// `(1/q)‖G y‖² / ‖y‖²`
pub fn re_ratio(g: &Mat, y: &[f64]) -> Result<f64> {
    let gy = g.matvec(y)?;
    Ok(sq_norm(&gy) / g.rows() as f64 / sq_norm(y))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportEstimate {
    pub support: Vec<usize>,
    /// Smallest eigenvalue of `(1/q) G_Sᵀ G_S`.
    pub exact_on_support: f64,
    /// Minimum over sampled cone vectors (`+∞` when none were drawn).
    pub sampled: f64,
    /// Vector attaining `min(exact_on_support, sampled)`.
    pub argmin: Vec<f64>,
}

impl SupportEstimate {
    pub fn gamma(&self) -> f64 {
        self.exact_on_support.min(self.sampled)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct REEstimate {
    /// Upper estimate of the RE constant.
    pub gamma_hat: f64,
    pub alpha: f64,
    pub sparsity: usize,
    /// Cone vectors evaluated, counting one per exact on-support minimum.
    pub samples_used: usize,
    pub argmin_vector: Vec<f64>,
    pub argmin_support: Vec<usize>,
    pub exhaustive: bool,
    pub per_support: Vec<SupportEstimate>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn all_supports(p: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < p - k + i {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in (i + 1)..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

const EXHAUSTIVE_MAX_DIM: usize = 20;

fn estimate_support(g: &Mat, support: Vec<usize>, alpha: f64, vectors: usize, seed: Seed) -> Result<SupportEstimate> {
    let p = g.cols();
    let q = g.rows() as f64;
    let gs = g.select_columns(&support);
    let eig = sym_eigen(&gs.gram())?;
    let exact = (eig.values[0] / q).max(0.0);
    let mut argmin = vec![0.0; p];
    for (k, &j) in support.iter().enumerate() {
        argmin[j] = eig.vectors[(k, 0)];
    }
    let spec = ConeSpec::new(p, support.clone(), alpha)?;
    let mut sampled = f64::INFINITY;
    let mut sampled_arg = None;
    for v in 0..vectors {
        let y = sample_cone_vector(&spec, seed.derive(v as u64));
        let r = re_ratio(g, &y)?;
        if r < sampled {
            sampled = r;
            sampled_arg = Some(y);
        }
    }
    if sampled < exact {
        argmin = sampled_arg.expect("finite sampled minimum has a vector");
    }
    Ok(SupportEstimate {
        support,
        exact_on_support: exact,
        sampled,
        argmin,
    })
}

pub fn estimate_re(
    g: &Mat,
    sparsity: usize,
    alpha: f64,
    num_supports: usize,
    vectors_per_support: usize,
    seed: Seed,
) -> Result<REEstimate> {
    let p = g.cols();
    ensure!(sparsity >= 1, "estimate_re: sparsity must be >= 1");
    ensure!(sparsity <= p, "estimate_re: sparsity {sparsity} exceeds p={p}");
    ensure!(num_supports >= 1, "estimate_re: need at least one support");
    ensure!(alpha >= 1.0, "estimate_re: alpha must be >= 1");
    let exhaustive = p <= EXHAUSTIVE_MAX_DIM && num_supports as f64 >= binomial(p, sparsity);
    // Seeds follow the support index; the extra weakest-column support has a
    // fixed tag so that raising `num_supports` only adds supports.
    let supports: Vec<(Vec<usize>, Seed)> = if exhaustive {
        all_supports(p, sparsity)
            .into_iter()
            .enumerate()
            .map(|(k, s)| (s, seed.derive(k as u64).derive(0x7u64)))
            .collect()
    } else {
        let mut s: Vec<(Vec<usize>, Seed)> = (0..num_supports)
            .map(|k| {
                let mut rng = seed.derive(k as u64).derive(0x5u64).rng();
                let mut v = index::sample(&mut rng, p, sparsity).into_vec();
                v.sort_unstable();
                (v, seed.derive(k as u64).derive(0x7u64))
            })
            .collect();
        // The weakest column `j` puts `e_j` in every cone whose support holds it.
        let norms = g.column_sq_norms();
        let weakest = (0..p).fold(0, |b, j| if norms[j] < norms[b] { j } else { b });
        let mut extra = vec![weakest];
        extra.extend((0..p).filter(|&j| j != weakest).take(sparsity - 1));
        extra.sort_unstable();
        s.push((extra, seed.derive(0xeeee)));
        s
    };
    let per_support: Vec<SupportEstimate> = supports
        .into_par_iter()
        .map(|(s, sd)| estimate_support(g, s, alpha, vectors_per_support, sd))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, e) in per_support.iter().enumerate() {
        if e.gamma() < per_support[best].gamma() {
            best = k;
        }
    }
    Ok(REEstimate {
        gamma_hat: per_support[best].gamma(),
        alpha,
        sparsity,
        samples_used: per_support.len() * (vectors_per_support + 1),
        argmin_vector: per_support[best].argmin.clone(),
        argmin_support: per_support[best].support.clone(),
        exhaustive,
        per_support,
    })
}

/// RE of a square matrix read as the minimum over its row-submatrices with
/// `sparsity` rows.
pub fn estimate_re_square(
    m: &Mat,
    sparsity: usize,
    alpha: f64,
    num_row_sets: usize,
    num_supports: usize,
    vectors_per_support: usize,
    seed: Seed,
) -> Result<REEstimate> {
    ensure!(m.rows() == m.cols(), "estimate_re_square needs a square matrix");
    ensure!(sparsity >= 1 && sparsity <= m.rows(), "estimate_re_square: bad sparsity {sparsity}");
    ensure!(num_row_sets >= 1, "estimate_re_square: need at least one row set");
    let mut best: Option<REEstimate> = None;
    for r in 0..num_row_sets {
        let mut rng = seed.derive(0x2000 + r as u64).rng();
        let mut rows = index::sample(&mut rng, m.rows(), sparsity).into_vec();
        rows.sort_unstable();
        let est = estimate_re(
            &m.select_rows(&rows),
            sparsity,
            alpha,
            num_supports,
            vectors_per_support,
            seed.derive(r as u64),
        )?;
        if best.as_ref().is_none_or(|b| est.gamma_hat < b.gamma_hat) {
            best = Some(est);
        }
    }
    Ok(best.expect("at least one row set"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeReport {
    pub violations_left: usize,
    pub violations_right: usize,
    /// RIGHT samples whose image `C2 y` stayed in the cone.
    pub right_tested: usize,
    /// RIGHT draws skipped because no resample landed in the cone.
    pub right_skipped: usize,
    /// Smallest relative margin `(lhs − rhs) / rhs` seen, over both tests.
    pub worst_margin: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Exact on-support RE minimum of `G` for the cone support.
    pub gamma_s: f64,
    /// `γ_S` lowered to the RE ratio of every tested image `C2 y`; the RIGHT
    /// test runs against this value.
    pub gamma_cone: f64,
    /// Tested RIGHT samples that fall below `γ_S λ2² ‖y‖²` (audit only:
    /// off-support cone members may undercut `γ_S`).
    pub right_below_on_support: usize,
}

/// Relative margin under which an inequality counts as violated.
pub const CASCADE_TOL: f64 = 1e-10;
/// Draws per RIGHT sample before it is skipped.
pub const RIGHT_RESAMPLES: usize = 20;

/// Pointwise check of the two cascade inequalities:
/// LEFT `(1/q)‖C1 G y‖² ≥ λ1² (1/q)‖G y‖²` on cone samples, and
/// RIGHT `(1/q)‖G C2 y‖² ≥ γ λ2² ‖y‖²` on samples whose `C2 y` is a cone
/// member, with `γ` the cone estimate `gamma_cone`.
pub fn cascade_check(
    g: &Mat,
    c1: &Mat,
    c2: &Mat,
    spec: &ConeSpec,
    num_vectors: usize,
    seed: Seed,
) -> Result<CascadeReport> {
    let (q, p) = g.shape();
    ensure!(c1.shape() == (q, q), "cascade_check: C1 must be {q}x{q}, got {:?}", c1.shape());
    ensure!(c2.shape() == (p, p), "cascade_check: C2 must be {p}x{p}, got {:?}", c2.shape());
    ensure!(spec.dim == p, "cascade_check: cone dim {} for p={p}", spec.dim);
    let lambda1 = min_singular_value(c1)?;
    let lambda2 = min_singular_value(c2)?;
    let gs = g.select_columns(&spec.support);
    let gamma_s = (sym_eigen(&gs.gram())?.values[0] / q as f64).max(0.0);
    let qf = q as f64;

    let mut gamma_cone = gamma_s;
    let mut members = Vec::new();
    let mut report = CascadeReport {
        gamma_cone: gamma_s,
        right_below_on_support: 0,
        violations_left: 0,
        violations_right: 0,
        right_tested: 0,
        right_skipped: 0,
        worst_margin: f64::INFINITY,
        lambda1,
        lambda2,
        gamma_s,
    };
    let rel = |lhs: f64, rhs: f64| {
        if rhs > 0.0 {
            (lhs - rhs) / rhs
        } else if lhs >= 0.0 {
            0.0
        } else {
            -1.0
        }
    };
    for v in 0..num_vectors {
        let y = sample_cone_vector(spec, seed.derive(v as u64));
        let gy = g.matvec(&y)?;
        let lhs = sq_norm(&c1.matvec(&gy)?) / qf;
        let rhs = lambda1 * lambda1 * sq_norm(&gy) / qf;
        let m = rel(lhs, rhs);
        report.worst_margin = report.worst_margin.min(m);
        if m < -CASCADE_TOL {
            report.violations_left += 1;
        }

        let mut member = None;
        for r in 0..RIGHT_RESAMPLES {
            let y = sample_cone_vector(spec, seed.derive(v as u64).derive(0x100 + r as u64));
            let w = c2.matvec(&y)?;
            if spec.contains(&w, 1e-12) {
                member = Some((y, w));
                break;
            }
        }
        match member {
            None => report.right_skipped += 1,
            Some((y, w)) => {
                let gw = sq_norm(&g.matvec(&w)?) / qf;
                let ww = sq_norm(&w);
                if ww > 0.0 {
                    gamma_cone = gamma_cone.min(gw / ww);
                }
                members.push((gw, sq_norm(&y)));
            }
        }
    }
    report.gamma_cone = gamma_cone;
    report.right_tested = members.len();
    for (lhs, yy) in members {
        let l2 = lambda2 * lambda2;
        let m = rel(lhs, gamma_cone * l2 * yy);
        report.worst_margin = report.worst_margin.min(m);
        if m < -CASCADE_TOL {
            report.violations_right += 1;
        }
        if rel(lhs, gamma_s * l2 * yy) < -CASCADE_TOL {
            report.right_below_on_support += 1;
        }
    }
    Ok(report)
}

/// `(δ/γ²) σ² k ln(p) / q`
/// One random input to `cascade_check`.
#[derive(Clone, Debug)]
pub struct CascadeInstance {
    pub g: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub spec: ConeSpec,
}

fn random_spd(dim: usize, lo: f64, hi: f64, seed: Seed) -> Result<Mat> {
    let q = random_orthonormal(dim, seed.derive(0))?;
    let mut rng = seed.derive(1).rng();
    let eig: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
    q.scale_columns(&eig).matmul(&q.transpose())
}

/// Gaussian q × p `G`, SPD `C1` with spectrum in [0.2, 2], and a `C2` that
/// is either a positive diagonal with entries in [0.8, 1.25] (images often
/// stay in the cone) or a dense SPD matrix with spectrum in [0.5, 2].
pub fn random_cascade_instance(q: usize, p: usize, k: usize, alpha: f64, seed: Seed) -> Result<CascadeInstance> {
    ensure!(q >= 1 && k >= 1 && k <= p, "cascade instance: need q >= 1 and 1 <= k <= p");
    let g = crate::mathcore::gaussian_matrix(q, p, 1.0, seed.derive(1))?;
    let c1 = random_spd(q, 0.2, 2.0, seed.derive(2))?;
    let mut rng = seed.derive(3).rng();
    let c2 = if rng.random::<bool>() {
        Mat::diag(&(0..p).map(|_| rng.random_range(0.8..1.25)).collect::<Vec<_>>())
    } else {
        random_spd(p, 0.5, 2.0, seed.derive(4))?
    };
    let mut support = index::sample(&mut rng, p, k).into_vec();
    support.sort_unstable();
    let spec = ConeSpec::new(p, support, alpha)?;
    Ok(CascadeInstance { g, c1, c2, spec })
}

pub fn error_bound(delta: f64, gamma: f64, sigma: f64, k: usize, p: usize, q: usize) -> Result<f64> {
    ensure!(gamma > 0.0, "error_bound: RE condition failed (gamma = {gamma})");
    ensure!(q >= 1, "error_bound: q must be >= 1");
    ensure!(p >= 2, "error_bound: p must be >= 2");
    Ok(delta / (gamma * gamma) * sigma * sigma * k as f64 * (p as f64).ln() / q as f64)
}

/// `c = δ (λ3 λ4)² / ((γ1 γ2)² (λ1 λ2)⁴)`
pub fn constant_c(delta: f64, gamma1: f64, gamma2: f64, lam1: f64, lam2: f64, lam3: f64, lam4: f64) -> Result<f64> {
    for (name, v) in [
        ("delta", delta),
        ("gamma1", gamma1),
        ("gamma2", gamma2),
        ("lambda1", lam1),
        ("lambda2", lam2),
        ("lambda3", lam3),
        ("lambda4", lam4),
    ] {
        ensure!(v > 0.0 && v.is_finite(), "constant_c: {name} must be > 0, got {v}");
    }
    let l12 = lam1 * lam2;
    Ok(delta * (lam3 * lam4).powi(2) / ((gamma1 * gamma2).powi(2) * l12.powi(4)))
}

/// One row per support: indices, the per-support minimum, its two parts and
/// the l1 split of the attaining vector.
pub fn write_re_report(path: &Path, est: &REEstimate) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "support",
        "gamma_support",
        "gamma_exact_on_support",
        "gamma_sampled_cone",
        "argmin_l1_on_support",
        "argmin_l1_off_support",
    ])?;
    for e in &est.per_support {
        let spec = ConeSpec::new(e.argmin.len(), e.support.clone(), est.alpha)?;
        let (on, off) = spec.l1_split(&e.argmin);
        let support = e
            .support
            .iter()
            .map(|j| j.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            support,
            fmt_f64(e.gamma()),
            fmt_f64(e.exact_on_support),
            fmt_f64(e.sampled),
            fmt_f64(on),
            fmt_f64(off),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{gaussian_matrix, random_orthonormal};

    #[test]
    fn cone_samples_are_members() {
        let spec = ConeSpec::new(30, vec![3, 7, 11], 1.0).unwrap();
        for s in 0..200 {
            let y = sample_cone_vector(&spec, Seed::new(1, s));
            let (on, off) = spec.l1_split(&y);
            assert!(off <= spec.alpha * on * (1.0 + 1e-12));
            assert!((sq_norm(&y) - 1.0).abs() < 1e-12);
        }
        let full = ConeSpec::new(4, vec![0, 1, 2, 3], 1.0).unwrap();
        assert!(full.contains(&sample_cone_vector(&full, Seed::new(2, 2)), 0.0));
        let tight = sample_cone_vector_with_slack(&spec, 0.0, Seed::new(3, 3));
        assert_eq!(spec.l1_split(&tight).1, 0.0);
        assert!(ConeSpec::new(5, vec![], 1.0).is_err());
        assert!(ConeSpec::new(5, vec![5], 1.0).is_err());
        assert!(ConeSpec::new(5, vec![1], 0.5).is_err());
    }

    #[test]
    fn enumerates_supports() {
        let s = all_supports(5, 2);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0], vec![0, 1]);
        assert_eq!(s[9], vec![3, 4]);
        assert_eq!(all_supports(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(all_supports(4, 1).len(), 4);
    }

    #[test]
    fn identity_design() {
        let est = estimate_re(&Mat::identity(6), 2, 1.0, 100, 10, Seed::new(1, 1)).unwrap();
        assert!(est.exhaustive);
        assert!((est.gamma_hat - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_column_gives_zero() {
        let mut g = gaussian_matrix(20, 40, 1.0, Seed::new(2, 2)).unwrap();
        for i in 0..20 {
            g[(i, 17)] = 0.0;
        }
        let est = estimate_re(&g, 3, 1.0, 5, 5, Seed::new(3, 3)).unwrap();
        assert!(est.gamma_hat.abs() < 1e-12);
        assert!(est.argmin_support.contains(&17));
    }

    #[test]
    fn argmin_is_a_cone_member_attaining_gamma() {
        let g = gaussian_matrix(15, 40, 1.0, Seed::new(4, 4)).unwrap();
        let est = estimate_re(&g, 4, 1.0, 30, 30, Seed::new(5, 5)).unwrap();
        let spec = ConeSpec::new(40, est.argmin_support.clone(), 1.0).unwrap();
        assert!(spec.contains(&est.argmin_vector, 1e-12));
        assert!((re_ratio(&g, &est.argmin_vector).unwrap() - est.gamma_hat).abs() < 1e-10);
    }

    #[test]
    fn more_samples_never_raise_gamma() {
        let g = gaussian_matrix(25, 80, 1.0, Seed::new(6, 6)).unwrap();
        let a = estimate_re(&g, 4, 1.0, 10, 10, Seed::new(7, 7)).unwrap();
        let b = estimate_re(&g, 4, 1.0, 20, 10, Seed::new(7, 7)).unwrap();
        let c = estimate_re(&g, 4, 1.0, 20, 40, Seed::new(7, 7)).unwrap();
        assert!(b.gamma_hat <= a.gamma_hat);
        assert!(c.gamma_hat <= b.gamma_hat);
    }

    #[test]
    fn orthonormal_rows_bounded_by_one() {
        let q = 6;
        let p = 10;
        let o = random_orthonormal(p, Seed::new(8, 8)).unwrap();
        let g = o.select_rows(&(0..q).collect::<Vec<_>>()).scale((q as f64).sqrt());
        let est = estimate_re(&g, 2, 1.0, 1000, 20, Seed::new(9, 9)).unwrap();
        assert!(est.exhaustive);
        assert!(est.gamma_hat <= 1.0 + 1e-9);
        let min_exact = est
            .per_support
            .iter()
            .map(|e| e.exact_on_support)
            .fold(f64::INFINITY, f64::min);
        // Off-support cone samples may undercut every on-support minimum.
        assert!(est.gamma_hat <= min_exact);
        eprintln!("gamma_hat {} min exact on-support {}", est.gamma_hat, min_exact);
    }

    #[test]
    fn gaussian_design_is_re() {
        let mut ok = 0;
        for s in 0..20 {
            let g = gaussian_matrix(60, 200, 1.0, Seed::new(10, s)).unwrap();
            let est = estimate_re(&g, 5, 1.0, 20, 10, Seed::new(11, s)).unwrap();
            if est.gamma_hat > 0.1 {
                ok += 1;
            }
        }
        assert!(ok >= 19, "{ok}/20");
    }

    #[test]
    fn square_variant_uses_row_blocks() {
        let m = random_orthonormal(8, Seed::new(1, 9)).unwrap();
        let est = estimate_re_square(&m, 3, 1.0, 4, 100, 5, Seed::new(2, 9)).unwrap();
        assert!(est.gamma_hat >= 0.0 && est.gamma_hat <= 1.0 / 3.0 + 1e-12);
        assert!(estimate_re_square(&gaussian_matrix(3, 4, 1.0, Seed::default()).unwrap(), 2, 1.0, 1, 1, 1, Seed::default()).is_err());
    }

    #[test]
    fn cascade_scalar_left_and_identity() {
        let g = gaussian_matrix(10, 20, 1.0, Seed::new(3, 1)).unwrap();
        let spec = ConeSpec::new(20, vec![1, 5, 9], 1.0).unwrap();
        let two_i = Mat::identity(10).scale(2.0);
        let r = cascade_check(&g, &two_i, &Mat::identity(20), &spec, 50, Seed::new(4, 1)).unwrap();
        assert!((r.lambda1 - 2.0).abs() < 1e-12);
        assert_eq!(r.violations_left, 0);
        assert!(r.worst_margin.abs() < 1e-9 || r.worst_margin > 0.0);
        let id = cascade_check(&g, &Mat::identity(10), &Mat::identity(20), &spec, 50, Seed::new(5, 1)).unwrap();
        assert_eq!(id.violations_left, 0);
        assert_eq!(id.violations_right, 0);
        assert_eq!(id.right_tested, 50);
        assert!(cascade_check(&g, &Mat::identity(9), &Mat::identity(20), &spec, 1, Seed::default()).is_err());
    }

    #[test]
    fn formulas() {
        assert_eq!(error_bound(1.0, 0.5, 0.0, 5, 1000, 100).unwrap(), 0.0);
        let b = error_bound(1.0, 0.5, 1.0, 5, 1000, 100).unwrap();
        assert!((b - 4.0 * 5.0 * 1000f64.ln() / 100.0).abs() < 1e-12);
        assert!((b - 1.3816).abs() < 1e-4);
        let h = error_bound(1.0, 0.5, 1.0, 5, 1000, 200).unwrap();
        assert!((b / h - 2.0).abs() < 1e-12);
        assert!(error_bound(1.0, 0.0, 1.0, 5, 1000, 100).is_err());

        assert_eq!(constant_c(3.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap(), 3.5);
        let base = constant_c(2.0, 0.7, 0.9, 0.6, 0.8, 1.3, 1.1).unwrap();
        let dbl = constant_c(2.0, 0.7, 0.9, 1.2, 0.8, 1.3, 1.1).unwrap();
        assert!((base / dbl - 16.0).abs() < 1e-10);
        let c = constant_c(1.0, 0.5, 0.5, 0.8, 0.8, 1.25, 1.25).unwrap();
        // Second ordering: numerator and denominator factor by factor.
        let alt = 1.25f64.powi(4) / (0.5f64.powi(4) * 0.8f64.powi(8));
        assert!((c - alt).abs() < 1e-9 * alt);
        assert!((c - 232.83).abs() < 0.01, "{c}");
        assert!(constant_c(1.0, 0.5, 0.5, 0.0, 0.8, 1.25, 1.25).is_err());
    }
}
