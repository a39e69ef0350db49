use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use csnc::harness::{
    check_theorem, config_baseline, decode_receiver, run_trials, setup_trial, sweep, theorem_budget, theorem_summary,
    write_sweep_csv, write_trials_csv, ExperimentConfig, SweepAxis, TrialRecord, CALIBRATION_TARGET,
    DEFAULT_MASTER_SEED, SCHEMA_VERSION,
};
use csnc::io::{fmt_f64, read_matrix_csv, write_matrix_csv};
use csnc::mathcore::{gaussian_matrix, sq_dist};
use csnc::precoder::save_projection;
use csnc::re_analysis::{cascade_check, estimate_re, random_cascade_instance, write_re_report};
use csnc::sources::save_ensemble;
use csnc::Error;

/// Fresh-trial success fraction required by `calibrate`.
const FRESH_TARGET: f64 = 0.85;

#[derive(Parser)]
#[command(name = "csnc", version, about = "Compressive joint source-channel-network coding simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML); omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (file for re-estimate).
    #[arg(long, short, global = true, default_value = "csnc-out")]
    out: PathBuf,
    /// Master seed; overrides the config file and CSNC_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Progress messages on stderr (repeat for more).
    #[arg(long, short, action = ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Draw dictionaries and the source ensemble of one trial.
    Generate {
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Draw the temporal projection of one trial and project the sources.
    Project {
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Transmit one trial through the network, decode, and record distortion.
    Simulate {
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Decode one receiver's observations (regenerated, or read from --obs).
    Decode {
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, default_value_t = 0)]
        receiver: usize,
        /// m2 × m1 observation matrix CSV, as written by `simulate`.
        #[arg(long)]
        obs: Option<PathBuf>,
    },
    /// Sampled restricted-eigenvalue estimate of a matrix.
    ReEstimate {
        /// Matrix CSV; without it a Gaussian rows × cols matrix is drawn.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        rows: usize,
        #[arg(long, default_value_t = 80)]
        cols: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 50)]
        supports: usize,
        #[arg(long, default_value_t = 50)]
        vectors: usize,
    },
    /// Pointwise cascade inequalities on random (G, C1, C2) instances.
    CascadeCheck {
        #[arg(long, default_value_t = 20)]
        rows: usize,
        #[arg(long, default_value_t = 40)]
        cols: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 20)]
        instances: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Run trials and export one row per (trial, receiver, source).
    Trial {
        #[arg(long, default_value_t = 0)]
        first: u64,
        /// Number of trials (default: the config's trial count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Sweep one parameter and fit the log-log slope.
    Sweep {
        /// sigma, m2, m1, k2 or N.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated increasing values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Calibrate c on pilot trials, then verify on fresh trials.
    Calibrate {
        #[arg(long, default_value_t = 30)]
        pilot: usize,
        #[arg(long, default_value_t = 50)]
        fresh: usize,
    },
    /// Evaluate the network-use budget and its (m1, m2) split.
    Budget {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        k1: Option<usize>,
        #[arg(long)]
        k2: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "N")]
        big_n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "D")]
        d: Option<f64>,
    },
}

enum Outcome {
    Ok,
    /// An asserted property did not hold.
    Failed(String),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CalibrationFailed(_) => 1,
        Error::InvalidArgument(_) | Error::Parse(_) => 2,
        Error::Io(_) | Error::Csv(_) => 3,
    }
}

/// Seed precedence: `--seed`, then `master_seed` in the config file, then
/// `CSNC_SEED`, then the built-in default.
fn load_config(g: &Global) -> csnc::Result<ExperimentConfig> {
    let (mut cfg, file_has_seed) = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let table: toml::Table = text
                .parse()
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            (ExperimentConfig::from_toml_str(&text)?, table.contains_key("master_seed"))
        }
        None => (ExperimentConfig::default(), false),
    };
    if let Some(s) = g.seed {
        cfg.master_seed = s;
    } else if !file_has_seed {
        cfg.master_seed = match std::env::var("CSNC_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("CSNC_SEED is not an unsigned integer: {v:?}")))?,
            Err(_) => DEFAULT_MASTER_SEED,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &Global) -> csnc::Result<&Path> {
    fs::create_dir_all(&g.out)?;
    Ok(&g.out)
}

fn config_notes(cfg: &ExperimentConfig) -> csnc::Result<Vec<String>> {
    let mut notes = vec![format!("schema_version = {SCHEMA_VERSION}")];
    notes.push("config:".to_string());
    notes.extend(cfg.to_toml_string()?.lines().map(|l| format!("  {l}")));
    Ok(notes)
}

fn write_text(path: &Path, text: &str) -> csnc::Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn trial_summary(records: &[TrialRecord], distortion: f64) -> String {
    let mut s = String::new();
    let ok = records.iter().filter(|r| r.meets(distortion)).count();
    let _ = writeln!(s, "trials                     {}", records.len());
    let _ = writeln!(s, "target distortion D        {}", fmt_f64(distortion));
    let _ = writeln!(s, "trials meeting D           {ok}");
    if let Some(r) = records.first() {
        let _ = writeln!(s, "m1 = {}, m2 = {}, m = {}, network uses {}", r.m1, r.m2, r.m, r.c_use);
    }
    for r in records {
        let _ = writeln!(
            s,
            "  trial {:6}  max distortion {}  support recovery {:.3}",
            r.trial_index,
            fmt_f64(r.max_distortion),
            r.support_recovery_rate
        );
    }
    s
}

fn run(cli: Cli) -> csnc::Result<Outcome> {
    let g = &cli.global;
    if let Some(t) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("--threads: {e}")))?;
    }
    let say = |msg: &str| {
        if g.verbose > 0 {
            eprintln!("{msg}");
        }
    };
    match cli.verb {
        Verb::Generate { trial } => {
            let cfg = load_config(g)?;
            let dir = out_dir(g)?;
            let setup = setup_trial(&cfg, trial)?;
            save_ensemble(&setup.ensemble, &setup.dicts, &dir.join("ensemble.csv"))?;
            write_matrix_csv(&dir.join("phi.csv"), &setup.dicts.phi)?;
            write_matrix_csv(&dir.join("psi.csv"), &setup.dicts.psi)?;
            write_text(&dir.join("config.toml"), &cfg.to_toml_string()?)?;
            println!("ensemble {} x {} written to {}", setup.ensemble.x.rows(), setup.ensemble.x.cols(), dir.display());
        }
        Verb::Project { trial } => {
            let cfg = load_config(g)?;
            let dir = out_dir(g)?;
            let setup = setup_trial(&cfg, trial)?;
            save_projection(&setup.projection, &dir.join("projection.csv"))?;
            write_matrix_csv(&dir.join("projected.csv"), &setup.projected)?;
            println!("projected {} x {} written to {}", setup.projected.rows(), setup.projected.cols(), dir.display());
        }
        Verb::Simulate { trial } => {
            let cfg = load_config(g)?;
            let dir = out_dir(g)?;
            let setup = setup_trial(&cfg, trial)?;
            for (r, (tm, obs)) in setup.transfers.iter().zip(&setup.observations).enumerate() {
                write_matrix_csv(&dir.join(format!("transfer_r{r}.csv")), &tm.g)?;
                write_matrix_csv(&dir.join(format!("observations_r{r}.csv")), obs)?;
            }
            let records = run_trials(&cfg, trial, 1)?;
            write_trials_csv(&dir.join("records.csv"), &records, Some(cfg.target.distortion), &config_notes(&cfg)?)?;
            println!("trial {trial}: max distortion {}", fmt_f64(records[0].max_distortion));
        }
        Verb::Decode { trial, receiver, obs } => {
            let cfg = load_config(g)?;
            let dir = out_dir(g)?;
            if receiver >= cfg.network.receivers {
                return Err(Error::InvalidArgument(format!(
                    "receiver {receiver} out of range ({} receivers)",
                    cfg.network.receivers
                )));
            }
            let mut setup = setup_trial(&cfg, trial)?;
            if let Some(path) = obs {
                let m = read_matrix_csv(&path)?;
                let want = setup.observations[receiver].shape();
                if m.shape() != want {
                    return Err(Error::InvalidArgument(format!("observations are {:?}, expected {want:?}", m.shape())));
                }
                setup.observations[receiver] = m;
            }
            let d = decode_receiver(&cfg, &setup, receiver)?;
            write_matrix_csv(&dir.join(format!("x_hat_r{receiver}.csv")), &d.x_hat)?;
            let n = cfg.source.samples as f64;
            for i in 0..cfg.source.sources {
                let di = sq_dist(d.x_hat.row(i), setup.ensemble.x.row(i)) / n;
                println!("source {i:4}  distortion {}", fmt_f64(di));
            }
            println!("max distortion {}", fmt_f64(d.max_distortion()));
        }
        Verb::ReEstimate { matrix, rows, cols, k, alpha, supports, vectors } => {
            let cfg_seed = load_config(g)?.master();
            let m = match matrix {
                Some(path) => read_matrix_csv(&path)?,
                None => gaussian_matrix(rows, cols, 1.0, cfg_seed.derive(1))?,
            };
            let est = estimate_re(&m, k, alpha, supports, vectors, cfg_seed.derive(2))?;
            if let Some(parent) = g.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_re_report(&g.out, &est)?;
            println!(
                "gamma_hat {} (upper estimate; {} supports, {} cone vectors{})",
                fmt_f64(est.gamma_hat),
                est.per_support.len(),
                est.samples_used,
                if est.exhaustive { ", exhaustive" } else { "" }
            );
        }
        Verb::CascadeCheck { rows, cols, k, alpha, instances, samples } => {
            let master = load_config(g)?.master();
            let dir = out_dir(g)?;
            let mut w = csv::Writer::from_path(dir.join("cascade.csv")).map_err(Error::from)?;
            w.write_record([
                "instance",
                "violations_left",
                "violations_right",
                "right_tested",
                "right_skipped",
                "right_below_on_support",
                "worst_margin",
                "lambda1",
                "lambda2",
                "gamma_s",
                "gamma_cone",
            ])
            .map_err(Error::from)?;
            let (mut left, mut right, mut tested, mut skipped) = (0, 0, 0, 0);
            for j in 0..instances {
                let s = master.derive(j);
                let inst = random_cascade_instance(rows, cols, k, alpha, s.derive(1))?;
                let rep = cascade_check(&inst.g, &inst.c1, &inst.c2, &inst.spec, samples, s.derive(2))?;
                left += rep.violations_left;
                right += rep.violations_right;
                tested += rep.right_tested;
                skipped += rep.right_skipped;
                w.write_record([
                    j.to_string(),
                    rep.violations_left.to_string(),
                    rep.violations_right.to_string(),
                    rep.right_tested.to_string(),
                    rep.right_skipped.to_string(),
                    rep.right_below_on_support.to_string(),
                    fmt_f64(rep.worst_margin),
                    fmt_f64(rep.lambda1),
                    fmt_f64(rep.lambda2),
                    fmt_f64(rep.gamma_s),
                    fmt_f64(rep.gamma_cone),
                ])
                .map_err(Error::from)?;
            }
            w.flush()?;
            println!("violationsLeft = {left}");
            println!("violationsRight = {right} (tested {tested}, skipped {skipped})");
            if left + right > 0 {
                return Ok(Outcome::Failed(format!("{left} LEFT and {right} RIGHT violations")));
            }
        }
        Verb::Trial { first, count } => {
            let cfg = load_config(g)?;
            let dir = out_dir(g)?;
            let count = count.unwrap_or(cfg.trials);
            say(&format!("running {count} trials from index {first}"));
            let records = run_trials(&cfg, first, count)?;
            write_trials_csv(&dir.join("trials.csv"), &records, Some(cfg.target.distortion), &config_notes(&cfg)?)?;
            let summary = trial_summary(&records, cfg.target.distortion);
            write_text(&dir.join("summary.txt"), &summary)?;
            print!("{summary}");
        }
        Verb::Sweep { axis, values } => {
            let cfg = load_config(g)?;
            let dir = out_dir(g)?;
            say(&format!("sweeping {axis} over {} values, {} trials each", values.len(), cfg.trials));
            let res = sweep(&cfg, axis, &values)?;
            write_sweep_csv(&dir.join("sweep.csv"), &res)?;
            match res.slope {
                Some(s) => println!("slope of {} vs {axis}: {}", res.slope_metric, fmt_f64(s)),
                None => println!("slope: none"),
            }
            for a in &res.audit {
                println!("audit: {a}");
            }
        }
        Verb::Calibrate { pilot, fresh } => {
            let cfg = load_config(g)?;
            let dir = out_dir(g)?;
            say(&format!("calibrating on {pilot} pilot trials, target {CALIBRATION_TARGET}"));
            let check = check_theorem(&cfg, pilot, fresh)?;
            let mut run_cfg = cfg.clone();
            run_cfg.coding.m1 = check.calibration.budget.m1;
            run_cfg.coding.m2 = check.calibration.budget.m2;
            write_trials_csv(
                &dir.join("trials.csv"),
                &check.records,
                Some(cfg.target.distortion),
                &config_notes(&run_cfg)?,
            )?;
            let summary = theorem_summary(&check, cfg.target.distortion);
            write_text(&dir.join("summary.txt"), &summary)?;
            print!("{summary}");
            let mut failures = Vec::new();
            if check.fresh_success_fraction < FRESH_TARGET {
                failures.push(format!("fresh success {:.3} < {FRESH_TARGET}", check.fresh_success_fraction));
            }
            if check.naive_baseline > 0.0 && check.calibration.budget.c_use >= check.naive_baseline {
                failures.push("calibrated budget does not beat the naive baseline".to_string());
            }
            if !failures.is_empty() {
                return Ok(Outcome::Failed(failures.join("; ")));
            }
        }
        Verb::Budget { c, k1, k2, n, big_n, m, sigma, d } => {
            let cfg = load_config(g)?;
            let k1 = k1.unwrap_or(cfg.source.k1);
            let k2 = k2.unwrap_or(cfg.source.k2);
            let n = n.unwrap_or(cfg.source.samples);
            let big_n = big_n.unwrap_or(cfg.source.sources);
            let m = m.unwrap_or(cfg.network.m);
            let sigma = sigma.unwrap_or(cfg.network.sigma);
            let d = d.unwrap_or(cfg.target.distortion);
            let b = theorem_budget(c, k1, k2, n, big_n, m, sigma, d)?;
            let mut base = cfg.clone();
            base.source.samples = n;
            base.source.sources = big_n;
            base.network.m = m;
            base.network.sigma = sigma;
            base.target.distortion = d;
            println!("C_use = {:.4}", b.c_use);
            println!("m1 = {}, m2 = {}{}", b.m1, b.m2, if b.clipped { " (clipped)" } else { "" });
            println!("naive baseline = {:.4}", config_baseline(&base)?);
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cmd = Cli::command().after_help(format!(
        "Config files are TOML, schema version {SCHEMA_VERSION}. Seed precedence: --seed, then master_seed in \
         the config file, then CSNC_SEED, then {DEFAULT_MASTER_SEED}.\nExit codes: 0 ok, 1 assertion or \
         calibration failure, 2 usage, 3 I/O."
    ));
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(msg)) => {
            eprintln!("csnc: assertion failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("csnc: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
