//! Parameter sweeps with log-log slope fits.
//!
//! `sweep` varies one field of an experiment configuration; `recovery_sweep`
//! runs the bare LASSO recovery experiment (Gaussian design, k-sparse truth)
//! used to check the error bound's scaling in σ² and q.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::trial::{run_trials, TrialRecord};
use crate::error::{ensure, Error, Result};
use crate::lasso::{
    debias, default_xi, solve_lasso_with, support_of, LassoOptions, LassoProblem, DEFAULT_XI_SCALE, XI_NULL_FRACTION,
};
use crate::mathcore::{gaussian_matrix, norm2, sq_dist, Seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "sigma")]
    Sigma,
    #[serde(rename = "m2")]
    M2,
    #[serde(rename = "m1")]
    M1,
    #[serde(rename = "k2")]
    K2,
    #[serde(rename = "N")]
    Sources,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(SweepAxis::Sigma),
            "m2" => Ok(SweepAxis::M2),
            "m1" => Ok(SweepAxis::M1),
            "k2" => Ok(SweepAxis::K2),
            "N" | "sources" => Ok(SweepAxis::Sources),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis {other:?}"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Sigma => "sigma",
            SweepAxis::M2 => "m2",
            SweepAxis::M1 => "m1",
            SweepAxis::K2 => "k2",
            SweepAxis::Sources => "N",
        })
    }
}

impl SweepAxis {
    /// Regressor for the slope fit, or `None` where the bound predicts no
    /// power law. σ is regressed through σ².
    fn regressor(self, v: f64) -> Option<f64> {
        match self {
            SweepAxis::Sigma => Some(v * v),
            SweepAxis::M2 | SweepAxis::M1 | SweepAxis::K2 => Some(v),
            SweepAxis::Sources => None,
        }
    }

    /// Metric the slope is fitted to.
    pub fn slope_metric(self) -> &'static str {
        match self {
            SweepAxis::M1 => "median_distortion",
            _ => "median_stage1_sq_error",
        }
    }

    fn apply(self, cfg: &mut ExperimentConfig, v: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            ensure!(v >= 0.0 && v.fract() == 0.0, "axis {self} needs integer values, got {v}");
            Ok(v as usize)
        };
        match self {
            SweepAxis::Sigma => cfg.network.sigma = v,
            SweepAxis::M2 => cfg.coding.m2 = as_count(v)?,
            SweepAxis::M1 => cfg.coding.m1 = as_count(v)?,
            SweepAxis::K2 => cfg.source.k2 = as_count(v)?,
            SweepAxis::Sources => cfg.source.sources = as_count(v)?,
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub trials: usize,
    pub mean_distortion: f64,
    pub median_distortion: f64,
    pub p95_distortion: f64,
    pub success_fraction: f64,
    pub median_stage1_sq_error: f64,
    pub p95_stage1_sq_error: f64,
    pub mean_support_recovery: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub values: Vec<f64>,
    pub cells: Vec<SweepCell>,
    pub slope_metric: String,
    /// Absent for a single usable cell or an axis without a power law.
    pub slope: Option<f64>,
    pub audit: Vec<String>,
}

/// Nearest-rank percentile of unsorted data (`q` in [0, 1]).
pub fn percentile(data: &[f64], q: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Median (mean of the two middle values for even counts).
pub fn median(data: &[f64]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`; needs two distinct x.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn cell_from_records(value: f64, records: &[TrialRecord], distortion: f64) -> SweepCell {
    let d: Vec<f64> = records.iter().map(|r| r.max_distortion).collect();
    let s1: Vec<f64> = records.iter().map(|r| r.stage1_sq_error).collect();
    SweepCell {
        value,
        trials: records.len(),
        mean_distortion: d.iter().sum::<f64>() / d.len() as f64,
        median_distortion: median(&d),
        p95_distortion: percentile(&d, 0.95),
        success_fraction: d.iter().filter(|&&v| v <= distortion).count() as f64 / d.len() as f64,
        median_stage1_sq_error: median(&s1),
        p95_stage1_sq_error: percentile(&s1, 0.95),
        mean_support_recovery: records.iter().map(|r| r.support_recovery_rate).sum::<f64>() / records.len() as f64,
    }
}

fn fit(axis_name: &str, metric: &str, points: Vec<(f64, f64)>, audit: &mut Vec<String>) -> Option<f64> {
    let mut usable = Vec::new();
    for (x, y) in points {
        if y > 0.0 && y.is_finite() && x > 0.0 {
            usable.push((x, y));
        } else {
            audit.push(format!("{axis_name} = {x:e}: {metric} = {y:e} excluded from the slope fit"));
        }
    }
    loglog_slope(&usable)
}

/// Runs `cfg.trials` trials per axis value. Stage-1 error axes (σ, m2, k2)
/// decode without the debias refit, so the stage-1 error is the raw LASSO
/// error the bound describes.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepResult> {
    ensure!(!values.is_empty(), "sweep needs at least one axis value");
    ensure!(
        values.windows(2).all(|w| w[0] < w[1]),
        "sweep values must be strictly increasing"
    );
    let mut audit = Vec::new();
    let mut base = cfg.clone();
    if matches!(axis, SweepAxis::Sigma | SweepAxis::M2 | SweepAxis::K2) && base.decoder.debias {
        base.decoder.debias = false;
        audit.push("debias refit disabled: slope is fitted to the raw LASSO stage-1 error".to_string());
    }
    let mut cells = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = base.clone();
        axis.apply(&mut c, v)?;
        c.validate()?;
        let records = run_trials(&c, 0, c.trials)?;
        cells.push(cell_from_records(v, &records, c.target.distortion));
    }
    let slope = match axis.regressor(1.0) {
        None => None,
        Some(_) => {
            let points = cells
                .iter()
                .map(|c| {
                    let y = if axis == SweepAxis::M1 { c.median_distortion } else { c.median_stage1_sq_error };
                    (axis.regressor(c.value).unwrap(), y)
                })
                .collect();
            fit(&axis.to_string(), axis.slope_metric(), points, &mut audit)
        }
    };
    Ok(SweepResult {
        axis: axis.to_string(),
        values: values.to_vec(),
        cells,
        slope_metric: axis.slope_metric().to_string(),
        slope,
        audit,
    })
}

/// One bare LASSO recovery experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySpec {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub sigma: f64,
    /// Magnitude range of the nonzero coefficients (random signs).
    pub amplitude: (f64, f64),
    pub xi_scale: f64,
    pub debias: bool,
}

impl RecoverySpec {
    pub fn new(k: usize, p: usize, q: usize, sigma: f64) -> Self {
        RecoverySpec {
            k,
            p,
            q,
            sigma,
            amplitude: (1.0, 2.0),
            xi_scale: DEFAULT_XI_SCALE,
            debias: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub trial_index: u64,
    pub support_exact: bool,
    /// `‖β − β̂‖²`
    pub sq_error: f64,
    /// `‖β − β̂‖ / ‖β‖`
    pub rel_error: f64,
    pub converged: bool,
}

/// i.i.d. N(0,1) q × p design, k-sparse truth, `z = Gβ + σw`,
/// `ξ = default_xi(σ, q, p, scale)`.
pub fn recovery_trial(spec: &RecoverySpec, master: Seed, trial_index: u64) -> Result<RecoveryRecord> {
    ensure!(spec.k >= 1 && spec.k <= spec.p, "recovery: need 1 <= k <= p");
    let seed = master.derive(trial_index);
    let g = gaussian_matrix(spec.q, spec.p, 1.0, seed.derive(1))?;
    let mut rng = seed.derive(2).rng();
    let mut support = index::sample(&mut rng, spec.p, spec.k).into_vec();
    support.sort_unstable();
    let (lo, hi) = spec.amplitude;
    let mut beta = vec![0.0; spec.p];
    for &j in &support {
        let mag = if hi > lo { rng.random_range(lo..hi) } else { lo };
        beta[j] = if rng.random::<bool>() { mag } else { -mag };
    }
    let mut z = g.matvec(&beta)?;
    if spec.sigma > 0.0 {
        let w = gaussian_matrix(spec.q, 1, spec.sigma, seed.derive(3))?;
        for (zi, wi) in z.iter_mut().zip(w.as_slice()) {
            *zi += wi;
        }
    }
    let xi = default_xi(spec.sigma, spec.q, spec.p, spec.xi_scale)?;
    // Same null-threshold floor as the decoders.
    let prob = LassoProblem::new(z, g, 1.0)?;
    let xi = xi.max(XI_NULL_FRACTION * prob.xi_max());
    let prob = prob.with_xi(xi)?;
    let sol = solve_lasso_with(&prob, &LassoOptions::default())?;
    let est = if spec.debias { debias(&prob, &sol.coef)? } else { sol.coef };
    Ok(RecoveryRecord {
        trial_index,
        support_exact: support_of(&est) == support,
        sq_error: sq_dist(&est, &beta),
        rel_error: sq_dist(&est, &beta).sqrt() / norm2(&beta),
        converged: sol.converged,
    })
}

pub fn recovery_trials(spec: &RecoverySpec, master: Seed, trials: usize) -> Result<Vec<RecoveryRecord>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|j| recovery_trial(spec, master, j))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryAxis {
    Sigma,
    Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCell {
    pub value: f64,
    pub trials: usize,
    pub median_sq_error: f64,
    pub p95_sq_error: f64,
    pub support_exact_fraction: f64,
    /// 95th percentile of `sq_error / (σ² k ln p / q)`.
    pub p95_bound_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySweep {
    pub axis: RecoveryAxis,
    pub cells: Vec<RecoveryCell>,
    /// Slope of the median squared error against σ² (σ axis) or q.
    pub slope: Option<f64>,
    pub audit: Vec<String>,
}

pub fn recovery_sweep(
    base: &RecoverySpec,
    axis: RecoveryAxis,
    values: &[f64],
    trials: usize,
    master: Seed,
) -> Result<RecoverySweep> {
    ensure!(!values.is_empty() && trials >= 1, "recovery sweep needs values and trials");
    let mut cells = Vec::new();
    for (cell, &v) in values.iter().enumerate() {
        let mut spec = *base;
        match axis {
            RecoveryAxis::Sigma => spec.sigma = v,
            RecoveryAxis::Q => {
                ensure!(v >= 1.0 && v.fract() == 0.0, "q values must be positive integers");
                spec.q = v as usize;
            }
        }
        // Independent draws per cell: with shared draws and a fixed sign
        // pattern the error is exactly linear in σ.
        let recs = recovery_trials(&spec, master.derive(cell as u64), trials)?;
        let errs: Vec<f64> = recs.iter().map(|r| r.sq_error).collect();
        let scale = spec.sigma * spec.sigma * spec.k as f64 * (spec.p as f64).ln() / spec.q as f64;
        let ratios: Vec<f64> = errs.iter().map(|e| if scale > 0.0 { e / scale } else { f64::NAN }).collect();
        cells.push(RecoveryCell {
            value: v,
            trials,
            median_sq_error: median(&errs),
            p95_sq_error: percentile(&errs, 0.95),
            support_exact_fraction: recs.iter().filter(|r| r.support_exact).count() as f64 / trials as f64,
            p95_bound_ratio: percentile(&ratios, 0.95),
        });
    }
    let mut audit = Vec::new();
    let points = cells
        .iter()
        .map(|c| {
            let x = match axis {
                RecoveryAxis::Sigma => c.value * c.value,
                RecoveryAxis::Q => c.value,
            };
            (x, c.median_sq_error)
        })
        .collect();
    let slope = fit(if axis == RecoveryAxis::Sigma { "sigma" } else { "q" }, "median_sq_error", points, &mut audit);
    Ok(RecoverySweep { axis, cells, slope, audit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], 0.95), 10.0);
        assert_eq!(percentile(&[5.0], 0.5), 5.0);
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(1.0, 2.0)]), None);
    }

    #[test]
    fn degenerate_cells_are_audited() {
        let mut audit = Vec::new();
        let s = fit("sigma", "m", vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], &mut audit);
        assert_eq!(audit.len(), 1);
        assert!((s.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_is_deterministic() {
        let spec = RecoverySpec::new(3, 60, 30, 0.1);
        let a = recovery_trials(&spec, Seed::new(1, 1), 4).unwrap();
        let b = recovery_trials(&spec, Seed::new(1, 1), 4).unwrap();
        assert_eq!(a, b);
    }
}
