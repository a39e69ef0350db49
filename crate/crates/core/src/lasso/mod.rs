//! l1-regularized least squares, `min (1/2q)‖z − Gβ‖² + ξ‖β‖₁`, by cyclic
//! coordinate descent, plus the two-stage decoder built on it.
//!
//! Every univariate update is an exact minimization, so the objective never
//! increases across sweeps. A solution is reported converged only after a
//! full sweep moves no coefficient by more than `tol` and the KKT certificate
//! is below `kkt_tol`.

mod decode;

pub use decode::{
    decode_all, decode_spatial, decode_temporal, spatial_design, DecodeInputs, DecodeOptions, DecodeResult, SpatialDecode,
    TemporalDecode, XiRule, XI_NULL_FRACTION,
};

use std::path::Path;

use crate::error::{ensure, Result};
use crate::mathcore::{dot, norm1, soft_threshold, sq_norm, Mat, Qr};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_KKT_TOL: f64 = 1e-6;
pub const DEFAULT_XI_SCALE: f64 = 2.0;
/// Floor of `default_xi`.
pub const XI_FLOOR: f64 = 1e-12;
/// Below `CONTINUATION_RATIO · ξ_max` the solver walks down a geometric ξ path.
const CONTINUATION_RATIO: f64 = 1e-2;
/// Relative size under which a debiased coefficient is pruned.
const PRUNE_RATIO: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LassoProblem {
    z: Vec<f64>,
    g: Mat,
    xi: f64,
}

impl LassoProblem {
    pub fn new(z: Vec<f64>, g: Mat, xi: f64) -> Result<Self> {
        ensure!(
            g.rows() >= 1 && g.cols() >= 1,
            "lasso design must be at least 1x1, got {}x{}",
            g.rows(),
            g.cols()
        );
        ensure!(
            z.len() == g.rows(),
            "lasso: {} observations for a design with {} rows",
            z.len(),
            g.rows()
        );
        ensure!(xi > 0.0 && xi.is_finite(), "lasso: xi must be finite and > 0, got {xi}");
        ensure!(
            g.is_finite() && z.iter().all(|v| v.is_finite()),
            "lasso: non-finite data"
        );
        Ok(LassoProblem { z, g, xi })
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn design(&self) -> &Mat {
        &self.g
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn q(&self) -> usize {
        self.g.rows()
    }

    pub fn p(&self) -> usize {
        self.g.cols()
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        LassoProblem::new(self.z.clone(), self.g.clone(), xi)
    }

    pub fn residual(&self, coef: &[f64]) -> Result<Vec<f64>> {
        let fit = self.g.matvec(coef)?;
        Ok(self.z.iter().zip(&fit).map(|(z, f)| z - f).collect())
    }

    pub fn objective(&self, coef: &[f64]) -> Result<f64> {
        let r = self.residual(coef)?;
        Ok(sq_norm(&r) / (2.0 * self.q() as f64) + self.xi * norm1(coef))
    }

    /// `max_j |(1/q) G_jᵀ z|`: the smallest ξ whose solution is zero.
    pub fn xi_max(&self) -> f64 {
        null_threshold(&self.g, &self.z)
    }
}

pub fn null_threshold(g: &Mat, z: &[f64]) -> f64 {
    let q = g.rows() as f64;
    g.tmatvec(z)
        .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())) / q)
        .unwrap_or(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub kkt_tol: f64,
    pub warm_start: Option<Vec<f64>>,
    /// Record the objective after every sweep.
    pub trace: bool,
    /// Solve along a decreasing ξ path when the target ξ is small.
    pub continuation: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            kkt_tol: DEFAULT_KKT_TOL,
            warm_start: None,
            trace: false,
            continuation: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoSolution {
    pub coef: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Coordinate sweeps, summed over continuation stages.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each sweep (empty unless requested).
    pub trace: Vec<f64>,
}

impl LassoSolution {
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.coef)
    }
}

pub fn support_of(coef: &[f64]) -> Vec<usize> {
    (0..coef.len()).filter(|&j| coef[j] != 0.0).collect()
}

/// Solver with default KKT tolerance and continuation.
pub fn solve_lasso(prob: &LassoProblem, max_iter: usize, tol: f64) -> Result<LassoSolution> {
    solve_lasso_with(
        prob,
        &LassoOptions {
            max_iter,
            tol,
            ..LassoOptions::default()
        },
    )
}

struct Workspace<'a> {
    cols: Vec<Vec<f64>>,
    /// `‖G_j‖² / q`
    curv: Vec<f64>,
    z: &'a [f64],
    q: f64,
    beta: Vec<f64>,
    resid: Vec<f64>,
}

impl Workspace<'_> {
    fn resync(&mut self) {
        self.resid.copy_from_slice(self.z);
        for (j, col) in self.cols.iter().enumerate() {
            let b = self.beta[j];
            if b != 0.0 {
                for (r, g) in self.resid.iter_mut().zip(col) {
                    *r -= b * g;
                }
            }
        }
    }

    fn objective(&self, xi: f64) -> f64 {
        sq_norm(&self.resid) / (2.0 * self.q) + xi * norm1(&self.beta)
    }

    fn update(&mut self, j: usize, xi: f64) -> f64 {
        let c = self.curv[j];
        if c == 0.0 {
            return 0.0;
        }
        let col = &self.cols[j];
        let old = self.beta[j];
        let rho = dot(col, &self.resid) / self.q + c * old;
        let new = soft_threshold(rho, xi) / c;
        let delta = new - old;
        if delta != 0.0 {
            for (r, g) in self.resid.iter_mut().zip(col) {
                *r -= delta * g;
            }
            self.beta[j] = new;
        }
        delta.abs()
    }

    fn kkt(&self, xi: f64) -> f64 {
        let mut worst = 0.0f64;
        for (j, col) in self.cols.iter().enumerate() {
            let g = -dot(col, &self.resid) / self.q;
            worst = worst.max(violation(g, self.beta[j], xi));
        }
        worst
    }

    /// Runs sweeps for one ξ; returns (sweeps used, converged).
    fn run(&mut self, xi: f64, budget: usize, tol: f64, kkt_tol: f64, trace: &mut Option<Vec<f64>>) -> (usize, bool) {
        let p = self.cols.len();
        let mut used = 0;
        let record = |ws: &Self, tr: &mut Option<Vec<f64>>| {
            if let Some(t) = tr.as_mut() {
                t.push(ws.objective(xi));
            }
        };
        while used < budget {
            let mut dmax = 0.0f64;
            for j in 0..p {
                dmax = dmax.max(self.update(j, xi));
            }
            used += 1;
            record(self, trace);
            if dmax < tol {
                self.resync();
                if self.kkt(xi) <= kkt_tol {
                    return (used, true);
                }
                continue;
            }
            let active: Vec<usize> = (0..p).filter(|&j| self.beta[j] != 0.0).collect();
            while used < budget {
                let mut d = 0.0f64;
                for &j in &active {
                    d = d.max(self.update(j, xi));
                }
                used += 1;
                record(self, trace);
                if d < tol {
                    break;
                }
            }
        }
        self.resync();
        (used, false)
    }
}

fn violation(g: f64, b: f64, xi: f64) -> f64 {
    if b > 0.0 {
        (g + xi).abs()
    } else if b < 0.0 {
        (g - xi).abs()
    } else {
        (g.abs() - xi).max(0.0)
    }
}

pub fn solve_lasso_with(prob: &LassoProblem, opts: &LassoOptions) -> Result<LassoSolution> {
    ensure!(opts.max_iter >= 1, "lasso: max_iter must be >= 1");
    ensure!(opts.tol > 0.0, "lasso: tol must be > 0");
    ensure!(opts.kkt_tol > 0.0, "lasso: kkt_tol must be > 0");
    let p = prob.p();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| prob.g.col(j)).collect();
    let q = prob.q() as f64;
    let curv: Vec<f64> = cols.iter().map(|c| sq_norm(c) / q).collect();
    let beta = match &opts.warm_start {
        Some(w) => {
            ensure!(w.len() == p, "lasso: warm start has length {}, expected {p}", w.len());
            ensure!(w.iter().all(|v| v.is_finite()), "lasso: non-finite warm start");
            // Zero-norm columns are pinned at 0.
            w.iter().zip(&curv).map(|(&b, &c)| if c == 0.0 { 0.0 } else { b }).collect()
        }
        None => vec![0.0; p],
    };
    let mut ws = Workspace {
        cols,
        curv,
        z: &prob.z,
        q,
        resid: prob.z.clone(),
        beta,
    };
    ws.resync();
    let mut trace = opts.trace.then(Vec::new);

    let xi = prob.xi;
    let xi_max = prob.xi_max();
    let mut used = 0;
    if opts.continuation && opts.warm_start.is_none() && xi < CONTINUATION_RATIO * xi_max {
        let mut stage = 0.5 * xi_max;
        while stage > 2.0 * xi && used < opts.max_iter {
            let (u, _) = ws.run(stage, opts.max_iter - used, opts.tol.max(1e-6), f64::INFINITY, &mut trace);
            used += u;
            stage *= 0.5;
        }
    }
    let mut converged = false;
    if used < opts.max_iter {
        let (u, c) = ws.run(xi, opts.max_iter - used, opts.tol, opts.kkt_tol, &mut trace);
        used += u;
        converged = c;
    }
    let kkt_residual = ws.kkt(xi);
    let objective = ws.objective(xi);
    Ok(LassoSolution {
        coef: ws.beta,
        objective,
        kkt_residual,
        iterations: used,
        converged,
        trace: trace.unwrap_or_default(),
    })
}

/// Maximum stationarity violation of `coef`.
pub fn kkt_check(prob: &LassoProblem, coef: &[f64]) -> Result<f64> {
    ensure!(
        coef.len() == prob.p(),
        "kkt_check: coefficient length {} for {} columns",
        coef.len(),
        prob.p()
    );
    let r = prob.residual(coef)?;
    let corr = prob.g.tmatvec(&r)?;
    let q = prob.q() as f64;
    Ok(corr
        .iter()
        .zip(coef)
        .map(|(c, &b)| violation(-c / q, b, prob.xi))
        .fold(0.0, f64::max))
}

/// `max(scale · σ̂ · √(2 ln p / q), 1e-12)`.
pub fn default_xi(sigma_hat: f64, q: usize, p: usize, scale: f64) -> Result<f64> {
    ensure!(sigma_hat >= 0.0 && sigma_hat.is_finite(), "default_xi: sigma_hat must be >= 0");
    ensure!(q >= 1, "default_xi: q must be >= 1");
    ensure!(p >= 2, "default_xi: p must be >= 2");
    ensure!(scale > 0.0 && scale.is_finite(), "default_xi: scale must be > 0");
    let v = scale * sigma_hat * (2.0 * (p as f64).ln() / q as f64).sqrt();
    Ok(v.max(XI_FLOOR))
}

/// Least-squares refit on the support of `coef`, with tiny refit
/// coefficients pruned and the fit repeated. Returns `coef` unchanged when the
/// support is wider than `q` or its columns are numerically dependent.
pub fn debias(prob: &LassoProblem, coef: &[f64]) -> Result<Vec<f64>> {
    ensure!(coef.len() == prob.p(), "debias: coefficient length mismatch");
    let mut support = support_of(coef);
    loop {
        if support.is_empty() {
            return Ok(vec![0.0; prob.p()]);
        }
        if support.len() > prob.q() {
            return Ok(coef.to_vec());
        }
        let qr = Qr::new(&prob.g.select_columns(&support))?;
        if qr.diag_ratio() < 1e-10 {
            return Ok(coef.to_vec());
        }
        let fit = qr.solve_least_squares(&prob.z)?;
        let big = fit.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (0..support.len())
            .filter(|&k| fit[k].abs() > PRUNE_RATIO * big)
            .collect();
        if keep.len() == support.len() {
            let mut out = vec![0.0; prob.p()];
            for (k, &j) in support.iter().enumerate() {
                out[j] = fit[k];
            }
            return Ok(out);
        }
        support = keep.into_iter().map(|k| support[k]).collect();
    }
}

/// Writes a solver trace as `sweep,objective` CSV.
pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sweep", "objective"])?;
    for (k, v) in trace.iter().enumerate() {
        w.write_record([(k + 1).to_string(), crate::io::fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}
