//! Experiment configuration, trial runner, sweeps, budgets and export.

mod budget;
mod config;
mod export;
mod sweep;
mod trial;

pub use budget::{
    calibrate_c, check_theorem, config_baseline, config_budget, naive_baseline, theorem_budget, Budget, Calibration,
    PilotPoint, TheoremCheck, CALIBRATION_TARGET, C_MAX, C_MIN, C_RESOLUTION, PILOT_FIRST_INDEX,
};
pub use config::{
    CodingSection, DecoderSection, ExperimentConfig, NetworkMode, NetworkSection, SourceSection, TargetSection,
    TransmissionCase, DEFAULT_MASTER_SEED, SCHEMA_VERSION,
};
pub use export::{
    read_comments, read_trial_summary, read_trials_csv, theorem_summary, write_recovery_sweep_csv, write_sweep_csv,
    write_trials_csv, TRIAL_COLUMNS,
};
pub use sweep::{
    loglog_slope, median, percentile, recovery_sweep, recovery_trial, recovery_trials, sweep, RecoveryAxis,
    RecoveryCell, RecoveryRecord, RecoverySpec, RecoverySweep, SweepAxis, SweepCell, SweepResult,
};
pub use trial::{
    decode_receiver, run_trial, run_trials, setup_trial, success_fraction, transfer_matrices, TrialRecord, TrialSetup,
};
