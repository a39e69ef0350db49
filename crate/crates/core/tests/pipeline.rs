use csnc::harness::{
    calibrate_c, read_trials_csv, run_trial, run_trials, success_fraction, sweep, write_trials_csv, ExperimentConfig,
    NetworkMode, SweepAxis, TransmissionCase,
};
use csnc::precoder::ProjectionFamily;
use csnc::sources::DictionaryKind;
use num_rational::Ratio;
use proptest::prelude::*;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.source.sources = 48;
    cfg.source.samples = 40;
    cfg.source.k1 = 3;
    cfg.source.k2 = 3;
    cfg.coding.m1 = 20;
    cfg.coding.m2 = 24;
    cfg.network.m = 16;
    cfg.trials = 6;
    cfg
}

#[test]
fn lossless_degenerate_pipeline() {
    let mut cfg = small();
    cfg.network.mode = NetworkMode::Identity;
    cfg.network.sigma = 0.0;
    cfg.coding.projection = ProjectionFamily::Identity;
    cfg.coding.m1 = cfg.source.samples;
    cfg.coding.m2 = cfg.source.sources;
    for psi in [DictionaryKind::Identity, DictionaryKind::RandomOrthonormal] {
        cfg.source.psi = psi;
        let rec = run_trial(&cfg, 0).unwrap();
        assert!(rec.max_distortion < 1e-20, "{psi}: {}", rec.max_distortion);
        assert!(rec.stage1_sq_error < 1e-18);
    }
}

#[test]
fn trials_are_deterministic_and_order_free() {
    let cfg = small();
    let all = run_trials(&cfg, 0, 4).unwrap();
    let again = run_trials(&cfg, 0, 4).unwrap();
    for (a, b) in all.iter().zip(&again) {
        let (mut a, mut b) = (a.clone(), b.clone());
        a.timing_ms = 0.0;
        b.timing_ms = 0.0;
        assert_eq!(a, b);
    }
    let mut alone = run_trial(&cfg, 2).unwrap();
    let mut batch = all[2].clone();
    alone.timing_ms = 0.0;
    batch.timing_ms = 0.0;
    assert_eq!(alone, batch);
    let mut other = cfg.clone();
    other.master_seed += 1;
    assert_ne!(run_trial(&other, 2).unwrap().max_distortion, alone.max_distortion);
}

#[test]
fn default_config_smoke() {
    let cfg = ExperimentConfig::default();
    let rec = run_trial(&cfg, 0).unwrap();
    assert!(rec.max_distortion.is_finite() && rec.max_distortion >= 0.0);
    assert!((0.0..=1.0).contains(&rec.support_recovery_rate));
    assert_eq!(rec.per_source_distortion.len(), 1);
    assert_eq!(rec.per_source_distortion[0].len(), 128);
    assert_eq!(rec.c_use, Ratio::new(32, 1));
}

#[test]
fn receivers_do_not_see_each_other() {
    for mode in [NetworkMode::Direct, NetworkMode::Example1] {
        let mut one = small();
        one.network.mode = mode;
        one.coding.m2 = 16;
        let mut three = one.clone();
        three.network.receivers = 3;
        for j in 0..3 {
            let a = run_trial(&one, j).unwrap();
            let b = run_trial(&three, j).unwrap();
            assert_eq!(a.per_source_distortion[0], b.per_source_distortion[0], "{mode} trial {j}");
            assert_eq!(b.per_source_distortion.len(), 3);
            assert_ne!(b.per_source_distortion[1], b.per_source_distortion[0]);
        }
    }
}

#[test]
fn sparse_on_off_matches_dense_with_measurement_margin() {
    // At m2 well above the expected number of active sources; near the dense
    // threshold the square active block of G ruins conditioning.
    let mut dense = ExperimentConfig::default();
    dense.coding.m1 = 32;
    dense.coding.m2 = 48;
    let mut sparse = dense.clone();
    sparse.coding.case = TransmissionCase::Sparse;
    let d = dense.target.distortion;
    let fd = success_fraction(&run_trials(&dense, 0, 30).unwrap(), d);
    let fs = success_fraction(&run_trials(&sparse, 0, 30).unwrap(), d);
    assert!((fd - fs).abs() <= 0.15, "dense {fd}, sparse {fs}");
}

#[test]
fn export_round_trip_of_real_records() {
    let cfg = small();
    let recs = run_trials(&cfg, 0, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_trials_csv(&path, &recs, Some(cfg.target.distortion), &[]).unwrap();
    let back = read_trials_csv(&path).unwrap();
    for (a, b) in recs.iter().zip(&back) {
        let mut a = a.clone();
        a.timing_ms = 0.0;
        assert_eq!(&a, b);
    }
    let first = std::fs::read(&path).unwrap();
    write_trials_csv(&path, &run_trials(&cfg, 0, 3).unwrap(), Some(cfg.target.distortion), &[]).unwrap();
    assert_eq!(first, std::fs::read(&path).unwrap());
}

#[test]
fn sigma_sweep_has_unit_slope_in_stage_one() {
    let mut cfg = small();
    cfg.trials = 12;
    let res = sweep(&cfg, SweepAxis::Sigma, &[0.05, 0.1, 0.2, 0.4]).unwrap();
    assert_eq!(res.cells.len(), 4);
    let s = res.slope.unwrap();
    assert!((s - 1.0).abs() < 0.25, "slope {s}");
    assert!(res.audit.iter().any(|a| a.contains("debias")));
    let single = sweep(&cfg, SweepAxis::Sigma, &[0.1]).unwrap();
    assert_eq!(single.slope, None);
    assert!(sweep(&cfg, SweepAxis::Sigma, &[0.2, 0.1]).is_err());
}

#[test]
fn calibration_tracks_the_measurement_threshold() {
    // D fixed: success is decided by whether (m1, m2) clears the recovery
    // threshold, so the calibrated split barely moves with σ and c scales
    // like 1/σ². Calibrated c therefore rises as σ falls.
    let mut base = small();
    base.target.distortion = 0.0025;
    let mut splits = Vec::new();
    let mut cs = Vec::new();
    for sigma in [0.05, 0.1, 0.2] {
        let mut cfg = base.clone();
        cfg.network.sigma = sigma;
        let cal = calibrate_c(&cfg, 20).unwrap();
        assert!(cal.success_fraction >= 0.9);
        splits.push(cal.budget.c_use);
        cs.push(cal.c);
    }
    let (lo, hi) = splits.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 1.5, "budgets {splits:?}");
    assert!(cs[0] > cs[1] && cs[1] > cs[2], "c {cs:?}");
    let mut again = base.clone();
    again.network.sigma = 0.1;
    assert_eq!(calibrate_c(&again, 20).unwrap().c, cs[1]);
}

#[test]
fn noiseless_calibration_fails_at_the_unit_split() {
    let mut cfg = small();
    cfg.network.sigma = 0.0;
    // σ = 0 makes the budget 0 for every c, so the split is always (1, 1),
    // which cannot recover k-sparse sources.
    let err = calibrate_c(&cfg, 20).unwrap_err();
    assert!(matches!(err, csnc::Error::CalibrationFailed(_)), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn accounting_identity_holds(m1 in 1usize..40, m2 in 1usize..48, m in 1usize..40, j in 0u64..1000) {
        let mut cfg = small();
        cfg.coding.m1 = m1;
        cfg.coding.m2 = m2;
        cfg.network.m = m;
        let r = run_trial(&cfg, j).unwrap();
        prop_assert_eq!(r.c_use * Ratio::from_integer(m as u64), Ratio::from_integer((m1 * m2) as u64));
        prop_assert!(r.per_source_distortion.iter().flatten().all(|&d| d >= 0.0));
    }
}
