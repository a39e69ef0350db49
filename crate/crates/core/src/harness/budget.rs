//! Network-use budgets: the sparse-coding budget with its `(m1, m2)` split,
//! the correlation-blind baseline, and empirical calibration of the constant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::trial::{run_trials, success_fraction, TrialRecord};
use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// `c k1 k2 ln(n) ln(N) / m · σ² / D`
    pub c_use: f64,
    pub m1: usize,
    pub m2: usize,
    /// The balanced split left `[1, n] × [1, N]` before clipping.
    pub clipped: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn theorem_budget(c: f64, k1: usize, k2: usize, n: usize, big_n: usize, m: usize, sigma: f64, d: f64) -> Result<Budget> {
    ensure!(d > 0.0 && d.is_finite(), "budget: distortion D must be > 0, got {d}");
    ensure!(c > 0.0 && c.is_finite(), "budget: c must be > 0, got {c}");
    ensure!(k1 >= 1 && k2 >= 1 && m >= 1, "budget: k1, k2 and m must be >= 1");
    ensure!(n >= 2 && big_n >= 2, "budget: n and N must be >= 2");
    ensure!(sigma >= 0.0 && sigma.is_finite(), "budget: sigma must be >= 0");
    let ln_n = (n as f64).ln();
    let ln_big = (big_n as f64).ln();
    let c_use = c * (k1 * k2) as f64 * ln_n * ln_big / m as f64 * sigma * sigma / d;
    // Balance the stage bounds: k1 ln n / m1 = k2 ln N / m2 with m1 m2 = C m.
    let raw_m1 = (c_use * m as f64 * ln_n * k1 as f64 / (ln_big * k2 as f64)).sqrt().ceil();
    let raw_m2 = if raw_m1 > 0.0 { (c_use * m as f64 / raw_m1).ceil() } else { 0.0 };
    let m1 = raw_m1.clamp(1.0, n as f64) as usize;
    let m2 = raw_m2.clamp(1.0, big_n as f64) as usize;
    Ok(Budget {
        c_use,
        m1,
        m2,
        clipped: raw_m1 != m1 as f64 || raw_m2 != m2 as f64,
    })
}

/// `(n N / m) log₂(σ² / D)`, floored at 0.
pub fn naive_baseline(n: usize, big_n: usize, m: usize, sigma: f64, d: f64) -> Result<f64> {
    ensure!(n >= 1 && big_n >= 1 && m >= 1, "baseline: n, N and m must be >= 1");
    ensure!(d > 0.0 && sigma >= 0.0, "baseline: need D > 0 and sigma >= 0");
    let ratio = sigma * sigma / d;
    // σ² = D up to rounding counts as equal.
    if ratio <= 1.0 + 4.0 * f64::EPSILON {
        return Ok(0.0);
    }
    Ok((n * big_n) as f64 / m as f64 * ratio.log2())
}

pub fn config_budget(cfg: &ExperimentConfig, c: f64) -> Result<Budget> {
    let s = &cfg.source;
    theorem_budget(c, s.k1, s.k2, s.samples, s.sources, cfg.network.m, cfg.network.sigma, cfg.target.distortion)
}

pub fn config_baseline(cfg: &ExperimentConfig) -> Result<f64> {
    naive_baseline(cfg.source.samples, cfg.source.sources, cfg.network.m, cfg.network.sigma, cfg.target.distortion)
}

/// Search interval and resolution of `calibrate_c`.
pub const C_MIN: f64 = 1e-6;
pub const C_MAX: f64 = 1e6;
pub const C_RESOLUTION: f64 = 1.1;
/// Required fraction of pilot trials meeting D.
pub const CALIBRATION_TARGET: f64 = 0.9;
/// Pilot trials use indices from here on, disjoint from fresh trials.
pub const PILOT_FIRST_INDEX: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotPoint {
    pub m1: usize,
    pub m2: usize,
    pub success_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c: f64,
    pub budget: Budget,
    pub success_fraction: f64,
    pub pilot_trials: usize,
    /// Every `(m1, m2)` the search ran, in first-visit order.
    pub grid: Vec<PilotPoint>,
}

/// Bisection on `ln c` for the smallest c whose suggested `(m1, m2)` meets D
/// in at least 90% of the pilot trials. Pilot results are cached per split.
pub fn calibrate_c(cfg: &ExperimentConfig, pilot_trials: usize) -> Result<Calibration> {
    ensure!(pilot_trials >= 20, "calibration needs at least 20 pilot trials, got {pilot_trials}");
    cfg.validate()?;
    let mut cache: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut eval = |c: f64| -> Result<(Budget, f64)> {
        let b = config_budget(cfg, c)?;
        let key = (b.m1, b.m2);
        if let Some(&f) = cache.get(&key) {
            return Ok((b, f));
        }
        let mut pilot = cfg.clone();
        pilot.coding.m1 = b.m1;
        pilot.coding.m2 = b.m2;
        let f = match pilot.validate() {
            Ok(()) => success_fraction(&run_trials(&pilot, PILOT_FIRST_INDEX, pilot_trials)?, cfg.target.distortion),
            // A split the network cannot carry never succeeds.
            Err(_) => 0.0,
        };
        cache.insert(key, f);
        order.push(key);
        Ok((b, f))
    };
    let (hi_budget, hi_frac) = eval(C_MAX)?;
    let grid_of = |order: &[(usize, usize)], cache: &BTreeMap<(usize, usize), f64>| {
        order
            .iter()
            .map(|&(m1, m2)| PilotPoint { m1, m2, success_fraction: cache[&(m1, m2)] })
            .collect::<Vec<_>>()
    };
    if hi_frac < CALIBRATION_TARGET {
        return Err(Error::CalibrationFailed(format!(
            "c = {C_MAX:e} (m1 = {}, m2 = {}) meets D in only {:.3} of {pilot_trials} pilot trials",
            hi_budget.m1, hi_budget.m2, hi_frac
        )));
    }
    let (lo_budget, lo_frac) = eval(C_MIN)?;
    if lo_frac >= CALIBRATION_TARGET {
        return Ok(Calibration {
            c: C_MIN,
            budget: lo_budget,
            success_fraction: lo_frac,
            pilot_trials,
            grid: grid_of(&order, &cache),
        });
    }
    let (mut lo, mut hi) = (C_MIN, C_MAX);
    let (mut best_budget, mut best_frac) = (hi_budget, hi_frac);
    while hi / lo > C_RESOLUTION {
        let mid = (lo * hi).sqrt();
        let (b, f) = eval(mid)?;
        if f >= CALIBRATION_TARGET {
            hi = mid;
            best_budget = b;
            best_frac = f;
        } else {
            lo = mid;
        }
    }
    Ok(Calibration {
        c: hi,
        budget: best_budget,
        success_fraction: best_frac,
        pilot_trials,
        grid: grid_of(&order, &cache),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremCheck {
    pub calibration: Calibration,
    /// Fresh trials at the calibrated split.
    pub records: Vec<TrialRecord>,
    pub fresh_success_fraction: f64,
    pub naive_baseline: f64,
    /// Calibrated budget over the baseline.
    pub budget_ratio: f64,
}

/// Calibrates on pilot trials, then reruns fresh trials `0 .. fresh` at the
/// suggested split.
pub fn check_theorem(cfg: &ExperimentConfig, pilot_trials: usize, fresh: usize) -> Result<TheoremCheck> {
    let calibration = calibrate_c(cfg, pilot_trials)?;
    let mut run = cfg.clone();
    run.coding.m1 = calibration.budget.m1;
    run.coding.m2 = calibration.budget.m2;
    let records = run_trials(&run, 0, fresh)?;
    let naive = config_baseline(cfg)?;
    Ok(TheoremCheck {
        fresh_success_fraction: success_fraction(&records, cfg.target.distortion),
        budget_ratio: if naive > 0.0 { calibration.budget.c_use / naive } else { f64::INFINITY },
        naive_baseline: naive,
        calibration,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_examples() {
        let b = theorem_budget(10.0, 4, 4, 128, 128, 32, 0.1, 0.01).unwrap();
        let want = 5.0 * 128f64.ln().powi(2);
        assert!((b.c_use - want).abs() < 1e-9);
        assert!((b.c_use - 117.7).abs() < 0.05);
        assert!(b.m1 as f64 * b.m2 as f64 / 32.0 >= b.c_use);
        assert_eq!((b.m1, b.m2), (62, 61));

        // σ² = D: the budget is the bare constant part.
        let q = 3.0 * 2.0 * 5.0 * 50f64.ln() * 70f64.ln() / 8.0;
        let u = theorem_budget(3.0, 2, 5, 50, 70, 8, 0.2, 0.04).unwrap();
        assert!((u.c_use - q).abs() < 1e-9);

        let a = theorem_budget(2.0, 4, 4, 128, 128, 32, 0.1, 0.01).unwrap();
        let h = theorem_budget(2.0, 4, 4, 128, 128, 32, 0.1, 0.02).unwrap();
        assert!((a.c_use / h.c_use - 2.0).abs() < 1e-12);
        assert!(theorem_budget(1.0, 4, 4, 128, 128, 32, 0.1, 0.0).is_err());
    }

    #[test]
    fn budget_split_is_clipped() {
        let b = theorem_budget(1e6, 4, 4, 128, 128, 32, 0.1, 0.0025).unwrap();
        assert_eq!((b.m1, b.m2), (128, 128));
        assert!(b.clipped);
        let z = theorem_budget(1.0, 4, 4, 128, 128, 32, 0.0, 0.0025).unwrap();
        assert_eq!(z.c_use, 0.0);
        assert_eq!((z.m1, z.m2), (1, 1));
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(naive_baseline(128, 128, 32, 0.1, 0.01).unwrap(), 0.0);
        assert!((naive_baseline(128, 128, 32, 0.1, 0.0025).unwrap() - 1024.0).abs() < 1e-9);
        assert_eq!(naive_baseline(128, 128, 32, 0.1, 0.02).unwrap(), 0.0);
    }
}
