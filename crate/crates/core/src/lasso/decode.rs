//! Two-stage decoding at one receiver.
//!
//! Stage 1 (per time index t, q = m2): recover the spatial coefficients `μ_t`
//! from `Z_t = G B_t Ψ μ_t + W_t`, giving `ŷ_t = Ψ μ̂_t`.
//! Stage 2 (per source i, q = m1): recover `θ_i` from the column `Ỹ_i` of the
//! stage-1 output, `Ỹ_i ≈ A_i Φ θ_i`, giving `X̃_i = Φ θ̂_i`.
//!
//! Small ξ is floored at a fixed fraction of the null threshold: below it the
//! solution is indistinguishable from basis pursuit and coordinate descent only
//! gets slower.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    debias, default_xi, null_threshold, solve_lasso_with, support_of, LassoOptions, LassoProblem,
    DEFAULT_KKT_TOL, DEFAULT_MAX_ITER, DEFAULT_TOL, DEFAULT_XI_SCALE,
};
use crate::error::{ensure, Result};
use crate::mathcore::{sq_dist, Mat, Qr};
use crate::netsim::TransferMatrix;
use crate::precoder::{OnOffPattern, ProjectionOperator};
use crate::sources::DictionaryPair;

/// Floor on ξ relative to the null threshold `max_j |(1/q) D_jᵀ z|`.
pub const XI_NULL_FRACTION: f64 = 1e-4;

/// How a decoder stage picks ξ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum XiRule {
    Fixed(f64),
    /// `default_xi` with the given scale and the stage's noise level
    /// (channel σ at stage 1, estimated stage-1 error at stage 2).
    Noise(f64),
}

impl Default for XiRule {
    fn default() -> Self {
        XiRule::Noise(DEFAULT_XI_SCALE)
    }
}

impl XiRule {
    fn resolve(self, sigma: f64, q: usize, p: usize) -> Result<f64> {
        match self {
            XiRule::Fixed(v) => {
                ensure!(v > 0.0 && v.is_finite(), "fixed xi must be finite and > 0, got {v}");
                Ok(v)
            }
            XiRule::Noise(scale) => default_xi(sigma, q, p.max(2), scale),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub kkt_tol: f64,
    /// Least-squares refit on the recovered support.
    pub debias: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            kkt_tol: DEFAULT_KKT_TOL,
            debias: true,
        }
    }
}

impl DecodeOptions {
    fn solver(&self) -> LassoOptions {
        LassoOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            kkt_tol: self.kkt_tol,
            ..LassoOptions::default()
        }
    }
}

struct Solved {
    coef: Vec<f64>,
    xi: f64,
    converged: bool,
    kkt: f64,
    iterations: usize,
}

fn solve_stage(design: &Mat, z: &[f64], xi: f64, opts: &DecodeOptions) -> Result<Solved> {
    let p = design.cols();
    let floor = XI_NULL_FRACTION * null_threshold(design, z);
    let xi = xi.max(floor);
    if floor == 0.0 && z.iter().all(|&v| v == 0.0) {
        return Ok(Solved {
            coef: vec![0.0; p],
            xi,
            converged: true,
            kkt: 0.0,
            iterations: 0,
        });
    }
    let prob = LassoProblem::new(z.to_vec(), design.clone(), xi)?;
    let sol = solve_lasso_with(&prob, &opts.solver())?;
    let coef = if opts.debias {
        debias(&prob, &sol.coef)?
    } else {
        sol.coef
    };
    Ok(Solved {
        coef,
        xi,
        converged: sol.converged,
        kkt: sol.kkt_residual,
        iterations: sol.iterations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialDecode {
    pub mu: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub xi: f64,
    pub converged: bool,
    pub kkt: f64,
    pub iterations: usize,
    /// Per-source noise gain `g_i`: a least-squares fit on the recovered
    /// support has `Var(ŷ_i) = σ² g_i`. `None` if the support refit is singular.
    pub noise_gain: Option<Vec<f64>>,
}

/// Design `D = G B Ψ`.
pub fn spatial_design(tm: &TransferMatrix, pat: &OnOffPattern, psi: &Mat) -> Result<Mat> {
    ensure!(
        pat.len() == tm.sources() && psi.rows() == tm.sources(),
        "spatial design: G has {} columns, pattern {} entries, Ψ {} rows",
        tm.sources(),
        pat.len(),
        psi.rows()
    );
    if pat.is_all_on() {
        return tm.g.matmul(psi);
    }
    let active = pat.active_indices();
    tm.g.select_columns(&active).matmul(&psi.select_rows(&active))
}

pub fn decode_spatial(
    z: &[f64],
    tm: &TransferMatrix,
    pat: &OnOffPattern,
    psi: &Mat,
    xi: f64,
    opts: &DecodeOptions,
) -> Result<SpatialDecode> {
    ensure!(z.len() == tm.m2(), "decode_spatial: {} observations for m2={}", z.len(), tm.m2());
    let design = spatial_design(tm, pat, psi)?;
    let s = solve_stage(&design, z, xi, opts)?;
    let y_hat = psi.matvec(&s.coef)?;
    let noise_gain = noise_gain(&design, psi, &support_of(&s.coef))?;
    Ok(SpatialDecode {
        mu: s.coef,
        y_hat,
        xi: s.xi,
        converged: s.converged,
        kkt: s.kkt,
        iterations: s.iterations,
        noise_gain,
    })
}

/// `diag(Ψ_S (D_Sᵀ D_S)⁻¹ Ψ_Sᵀ)`.
fn noise_gain(design: &Mat, psi: &Mat, support: &[usize]) -> Result<Option<Vec<f64>>> {
    let n = psi.rows();
    if support.is_empty() {
        return Ok(Some(vec![0.0; n]));
    }
    if support.len() > design.rows() {
        return Ok(None);
    }
    let qr = Qr::new(&design.select_columns(support))?;
    if qr.diag_ratio() < 1e-10 {
        return Ok(None);
    }
    let cov = qr.inverse_gram()?;
    let ps = psi.select_columns(support);
    let mut gain = Vec::with_capacity(n);
    for i in 0..n {
        let row = ps.row(i);
        let c = cov.matvec(row)?;
        gain.push(row.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>().max(0.0));
    }
    Ok(Some(gain))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalDecode {
    pub theta: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub xi: f64,
    pub converged: bool,
    pub kkt: f64,
    pub iterations: usize,
}

pub fn decode_temporal(
    y_row: &[f64],
    a: &Mat,
    phi: &Mat,
    xi: f64,
    opts: &DecodeOptions,
) -> Result<TemporalDecode> {
    ensure!(
        y_row.len() == a.rows() && a.cols() == phi.rows(),
        "decode_temporal: {} observations, A is {}x{}, Φ is {}x{}",
        y_row.len(),
        a.rows(),
        a.cols(),
        phi.rows(),
        phi.cols()
    );
    let design = a.matmul(phi)?;
    let s = solve_stage(&design, y_row, xi, opts)?;
    let x_hat = phi.matvec(&s.coef)?;
    Ok(TemporalDecode {
        theta: s.coef,
        x_hat,
        xi: s.xi,
        converged: s.converged,
        kkt: s.kkt,
        iterations: s.iterations,
    })
}

/// Everything one receiver reconstructs.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// N × m1, column t is μ̂_t.
    pub mu_hat: Mat,
    /// m1 × N, row t is ŷ_t.
    pub y_hat: Mat,
    /// N × n, row i is θ̂_i.
    pub theta_hat: Mat,
    /// N × n, row i is X̃_i.
    pub x_hat: Mat,
    /// `(1/n)‖X_i − X̃_i‖²`; empty without ground truth.
    pub per_source_distortion: Vec<f64>,
    /// Stage-1 ξ per time index and stage-2 ξ per source.
    pub xi_spatial: Vec<f64>,
    pub xi_temporal: Vec<f64>,
    /// Estimated stage-1 error scale per source, fed to stage-2 ξ.
    pub sigma_u: Vec<f64>,
    pub all_converged: bool,
    pub max_kkt: f64,
}

impl DecodeResult {
    pub fn spatial_support(&self, t: usize) -> Vec<usize> {
        support_of(&self.mu_hat.col(t))
    }

    pub fn temporal_support(&self, i: usize) -> Vec<usize> {
        support_of(self.theta_hat.row(i))
    }

    pub fn max_distortion(&self) -> f64 {
        self.per_source_distortion.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// Inputs shared by every stage of `decode_all`.
pub struct DecodeInputs<'a> {
    /// m2 × m1, column t is the observation at time index t.
    pub obs: &'a Mat,
    pub tm: &'a TransferMatrix,
    /// One pattern per time index, or a single pattern reused for all.
    pub patterns: &'a [OnOffPattern],
    pub dicts: &'a DictionaryPair,
    pub projection: &'a ProjectionOperator,
    /// Channel noise σ (drives `XiRule::Noise` at stage 1).
    pub sigma: f64,
}

pub fn decode_all(
    inp: &DecodeInputs<'_>,
    xi_spatial: XiRule,
    xi_temporal: XiRule,
    opts: &DecodeOptions,
    truth: Option<&Mat>,
) -> Result<DecodeResult> {
    let n_src = inp.dicts.sources();
    let n = inp.dicts.samples();
    let m1 = inp.obs.cols();
    let m2 = inp.obs.rows();
    ensure!(m2 == inp.tm.m2(), "decode_all: {m2} observation rows for m2={}", inp.tm.m2());
    ensure!(inp.tm.sources() == n_src, "decode_all: transfer matrix and Ψ disagree on N");
    ensure!(
        m1 == 0 || (inp.projection.m1() == m1 && inp.projection.samples() == n),
        "decode_all: {m1} time indices but projection is {}x{}",
        inp.projection.m1(),
        inp.projection.samples()
    );
    ensure!(
        inp.patterns.len() == 1 || inp.patterns.len() == m1,
        "decode_all: need 1 or {m1} on/off patterns, got {}",
        inp.patterns.len()
    );
    if let Some(x) = truth {
        ensure!(x.shape() == (n_src, n), "decode_all: truth must be {n_src}x{n}");
    }

    let xi1 = xi_spatial.resolve(inp.sigma, m2.max(1), n_src)?;
    let stage1: Vec<SpatialDecode> = (0..m1)
        .into_par_iter()
        .map(|t| {
            let pat = &inp.patterns[if inp.patterns.len() == 1 { 0 } else { t }];
            decode_spatial(&inp.obs.col(t), inp.tm, pat, &inp.dicts.psi, xi1, opts)
        })
        .collect::<Result<_>>()?;

    let mut mu_hat = Mat::zeros(n_src, m1);
    let mut y_hat = Mat::zeros(m1, n_src);
    for (t, s) in stage1.iter().enumerate() {
        mu_hat.set_col(t, &s.mu);
        y_hat.row_mut(t).copy_from_slice(&s.y_hat);
    }
    // σ_u,i² = σ² · mean_t g_t,i; a singular refit falls back to σ_u = σ.
    let sigma_u: Vec<f64> = (0..n_src)
        .map(|i| {
            if m1 == 0 {
                return 0.0;
            }
            let mean_gain = stage1
                .iter()
                .map(|s| s.noise_gain.as_ref().map_or(1.0, |g| g[i]))
                .sum::<f64>()
                / m1 as f64;
            inp.sigma * mean_gain.sqrt()
        })
        .collect();

    let stage2: Vec<Option<TemporalDecode>> = (0..n_src)
        .into_par_iter()
        .map(|i| {
            if m1 == 0 {
                return Ok(None);
            }
            let xi2 = xi_temporal.resolve(sigma_u[i], m1, n)?;
            let a = inp.projection.matrix_for(i);
            decode_temporal(&y_hat.col(i), a, &inp.dicts.phi, xi2, opts).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut theta_hat = Mat::zeros(n_src, n);
    let mut x_hat = Mat::zeros(n_src, n);
    let mut xi_temporal_used = vec![0.0; n_src];
    let mut all_converged = stage1.iter().all(|s| s.converged);
    let mut max_kkt = stage1.iter().fold(0.0f64, |m, s| m.max(s.kkt));
    for (i, d) in stage2.iter().enumerate() {
        if let Some(d) = d {
            theta_hat.row_mut(i).copy_from_slice(&d.theta);
            x_hat.row_mut(i).copy_from_slice(&d.x_hat);
            xi_temporal_used[i] = d.xi;
            all_converged &= d.converged;
            max_kkt = max_kkt.max(d.kkt);
        }
    }
    let per_source_distortion = match truth {
        Some(x) => (0..n_src)
            .map(|i| sq_dist(x.row(i), x_hat.row(i)) / n as f64)
            .collect(),
        None => Vec::new(),
    };
    Ok(DecodeResult {
        mu_hat,
        y_hat,
        theta_hat,
        x_hat,
        per_source_distortion,
        xi_spatial: stage1.iter().map(|s| s.xi).collect(),
        xi_temporal: xi_temporal_used,
        sigma_u,
        all_converged,
        max_kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{gaussian_matrix, norm2, random_orthonormal, soft_threshold, Seed};
    use crate::netsim::{direct_transfer_matrix, identity_transfer_matrix};
    use crate::precoder::{temporal_project, ProjectionFamily, ProjectionMode};
    use crate::sources::{generate_ensemble, DictionaryKind, SparsityProfile};

    fn sparse_vec(p: usize, support: &[usize], seed: Seed) -> Vec<f64> {
        use rand::Rng;
        let mut rng = seed.rng();
        let mut v = vec![0.0; p];
        for &j in support {
            let mag = rng.random_range(1.0..2.0);
            v[j] = if rng.random::<bool>() { mag } else { -mag };
        }
        v
    }

    #[test]
    fn case2_design_is_g_psi() {
        let tm = direct_transfer_matrix(5, 8, 0, Seed::new(1, 1)).unwrap();
        let psi = random_orthonormal(8, Seed::new(2, 2)).unwrap();
        let d = spatial_design(&tm, &OnOffPattern::all_on(8), &psi).unwrap();
        assert_eq!(d, tm.g.matmul(&psi).unwrap());
        let pat = OnOffPattern {
            diag: vec![true, false, true, true, false, false, true, true],
            prob: 0.5,
        };
        let b = Mat::from_fn(8, 8, |i, j| if i == j && pat.diag[i] { 1.0 } else { 0.0 });
        let want = tm.g.matmul(&b).unwrap().matmul(&psi).unwrap();
        let got = spatial_design(&tm, &pat, &psi).unwrap();
        assert!(got.sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn noiseless_spatial_recovery() {
        let n_src = 64;
        let k = 3;
        let m2 = (3.0 * k as f64 * (n_src as f64).ln()).ceil() as usize;
        let psi = random_orthonormal(n_src, Seed::new(3, 3)).unwrap();
        let mut ok = 0;
        for s in 0..20 {
            let tm = direct_transfer_matrix(m2, n_src, 0, Seed::new(10, s)).unwrap();
            let support = [s as usize % 7, 20, 41 + s as usize % 5];
            let mu = sparse_vec(n_src, &support, Seed::new(11, s));
            let y = psi.matvec(&mu).unwrap();
            let z = tm.g.matvec(&y).unwrap();
            let d = decode_spatial(&z, &tm, &OnOffPattern::all_on(n_src), &psi, 1e-12, &DecodeOptions::default())
                .unwrap();
            let mut want = support.to_vec();
            want.sort();
            let rel = norm2(&crate::mathcore::sub_vec(&d.y_hat, &y)) / norm2(&y);
            if support_of(&d.mu) == want && rel < 1e-3 {
                ok += 1;
            }
        }
        assert!(ok >= 19, "{ok}/20");
    }

    #[test]
    fn pure_noise_solution_is_small() {
        let tm = direct_transfer_matrix(30, 50, 0, Seed::new(5, 5)).unwrap();
        let psi = Mat::identity(50);
        let z: Vec<f64> = gaussian_matrix(30, 1, 0.1, Seed::new(6, 6)).unwrap().into_vec();
        let xi = 0.05;
        let opts = DecodeOptions { debias: false, ..Default::default() };
        let d = decode_spatial(&z, &tm, &OnOffPattern::all_on(50), &psi, xi, &opts).unwrap();
        let bound = crate::mathcore::sq_norm(&z) / (2.0 * 30.0 * xi);
        assert!(crate::mathcore::norm1(&d.mu) <= bound + 1e-12);
    }

    #[test]
    fn temporal_orthogonal_closed_form_and_zero_row() {
        let n = 6;
        // A with orthonormal rows, Φ = I: (1/q)AᵀA = I/q is not unit, so use q = n and scale.
        let a = random_orthonormal(n, Seed::new(7, 7)).unwrap().scale((n as f64).sqrt());
        let y = vec![0.4, -1.2, 3.0, 0.05, -0.3, 1.0];
        let opts = DecodeOptions { debias: false, ..Default::default() };
        let d = decode_temporal(&y, &a, &Mat::identity(n), 0.2, &opts).unwrap();
        let corr = a.tmatvec(&y).unwrap();
        for j in 0..n {
            assert!((d.theta[j] - soft_threshold(corr[j] / n as f64, 0.2)).abs() < 1e-8);
        }
        let z = decode_temporal(&[0.0; 6], &a, &Mat::identity(n), 0.2, &opts).unwrap();
        assert!(z.x_hat.iter().all(|&v| v == 0.0));
    }

    fn pipeline(sigma: f64, seed: u64) -> (DecodeResult, f64) {
        let profile = SparsityProfile::new(32, 32, 2, 2).unwrap();
        let dicts = DictionaryPair::generate(
            &profile,
            DictionaryKind::DiscreteCosine,
            DictionaryKind::RandomOrthonormal,
            Seed::new(seed, 1),
        )
        .unwrap();
        let ens = generate_ensemble(&profile, &dicts, (1.0, 2.0), Seed::new(seed, 2)).unwrap();
        let op = ProjectionOperator::draw(20, 32, 32, ProjectionFamily::Gaussian, ProjectionMode::Shared, Seed::new(seed, 3))
            .unwrap();
        let y = temporal_project(&ens, &op).unwrap();
        let tm = direct_transfer_matrix(24, 32, 0, Seed::new(seed, 4)).unwrap();
        let pat = OnOffPattern::all_on(32);
        let mut obs = Mat::zeros(24, 20);
        for t in 0..20 {
            let z = crate::netsim::transmit(
                &tm,
                &pat,
                y.row(t),
                &crate::netsim::ChannelModel::new(sigma).unwrap(),
                Seed::new(seed, 100 + t as u64),
            )
            .unwrap();
            obs.set_col(t, &z);
        }
        let inp = DecodeInputs {
            obs: &obs,
            tm: &tm,
            patterns: std::slice::from_ref(&pat),
            dicts: &dicts,
            projection: &op,
            sigma,
        };
        let r = decode_all(&inp, XiRule::default(), XiRule::default(), &DecodeOptions::default(), Some(&ens.x)).unwrap();
        let max_u = (0..32)
            .map(|i| norm2(&crate::mathcore::sub_vec(&r.y_hat.col(i), &y.col(i))) / norm2(&y.col(i)).max(1e-300))
            .fold(0.0, f64::max);
        (r, max_u)
    }

    #[test]
    fn noiseless_end_to_end() {
        let (r, max_u) = pipeline(0.0, 21);
        assert!(r.max_distortion() < 1e-4, "{}", r.max_distortion());
        assert!(max_u < 1e-6, "stage-1 residual {max_u}");
        assert!(r.sigma_u.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn noisy_end_to_end_is_deterministic() {
        let (a, _) = pipeline(0.05, 22);
        let (b, _) = pipeline(0.05, 22);
        assert_eq!(a, b);
        assert!(a.sigma_u.iter().all(|&s| s > 0.0 && s < 0.05));
    }

    #[test]
    fn empty_time_axis() {
        let profile = SparsityProfile::new(4, 4, 1, 1).unwrap();
        let dicts = DictionaryPair::generate(&profile, DictionaryKind::Identity, DictionaryKind::Identity, Seed::default()).unwrap();
        let ens = generate_ensemble(&profile, &dicts, (1.0, 2.0), Seed::default()).unwrap();
        let op = ProjectionOperator::shared(Mat::identity(4), 4).unwrap();
        let tm = identity_transfer_matrix(4, 0);
        let obs = Mat::zeros(4, 0);
        let inp = DecodeInputs {
            obs: &obs,
            tm: &tm,
            patterns: &[OnOffPattern::all_on(4)],
            dicts: &dicts,
            projection: &op,
            sigma: 0.0,
        };
        let r = decode_all(&inp, XiRule::default(), XiRule::default(), &DecodeOptions::default(), Some(&ens.x)).unwrap();
        assert_eq!(r.y_hat.shape(), (0, 4));
        assert!(r.x_hat.as_slice().iter().all(|&v| v == 0.0));
        let perfect = decode_all(&inp, XiRule::default(), XiRule::default(), &DecodeOptions::default(), Some(&r.x_hat))
            .unwrap();
        assert!(perfect.per_source_distortion.iter().all(|&d| d == 0.0));
    }
}
