use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn csnc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csnc"))
        .args(args)
        .current_dir(dir)
        .env_remove("CSNC_SEED")
        .output()
        .expect("run csnc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "trials = 3\n[source]\nsources = 32\nsamples = 24\nk1 = 2\nk2 = 2\n[coding]\nm1 = 12\nm2 = 16\n[network]\nm = 8\n";

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// `seed_master` column of the first record row of a trial export.
fn exported_seed(path: &Path) -> u64 {
    let text = fs::read_to_string(path).unwrap();
    let row = text.lines().find(|l| l.starts_with("record,")).unwrap();
    row.split(',').nth(2).unwrap().parse().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(csnc(&[], dir.path()).status.code(), Some(2));
    assert_eq!(csnc(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(csnc(&["trial", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(csnc(&["sweep", "--axis", "nope", "--values", "1"], dir.path()).status.code(), Some(2));
}

#[test]
fn help_lists_every_verb_and_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = csnc(&["--help"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for verb in [
        "generate",
        "project",
        "simulate",
        "decode",
        "re-estimate",
        "cascade-check",
        "trial",
        "sweep",
        "calibrate",
        "budget",
    ] {
        assert!(text.contains(verb), "help is missing {verb}");
    }
    assert!(text.contains("schema version 1"));
}

#[test]
fn budget_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = csnc(
        &["budget", "--k1", "4", "--k2", "4", "--n", "128", "--N", "128", "--m", "32", "--sigma", "0.1", "--D", "0.01", "--c", "10"],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("C_use = 117.7"), "{text}");
    assert!(text.contains("m1 = 62, m2 = 61"), "{text}");
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let bare = write_cfg(dir.path(), "bare.toml", SMALL);
    let seeded = write_cfg(dir.path(), "seeded.toml", &format!("master_seed = 11\n{SMALL}"));
    let run = |args: &[&str], env: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_csnc"));
        c.args(args).args(["--out", out, "--count", "1"]).current_dir(dir.path()).env_remove("CSNC_SEED");
        if let Some(v) = env {
            c.env("CSNC_SEED", v);
        }
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        exported_seed(&dir.path().join(out).join("trials.csv"))
    };
    assert_eq!(run(&["trial", "--config", &seeded, "--seed", "7"], Some("5"), "a"), 7);
    assert_eq!(run(&["trial", "--config", &seeded], Some("5"), "b"), 11);
    assert_eq!(run(&["trial", "--config", &bare], Some("5"), "c"), 5);
    assert_eq!(run(&["trial", "--config", &bare], None, "d"), 20_100_512);
}

#[test]
fn trial_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.toml", SMALL);
    for out in ["r1", "r2"] {
        assert!(csnc(&["trial", "--config", &cfg, "--out", out], dir.path()).status.success());
    }
    for f in ["trials.csv", "summary.txt"] {
        assert_eq!(fs::read(dir.path().join("r1").join(f)).unwrap(), fs::read(dir.path().join("r2").join(f)).unwrap());
    }
}

#[test]
fn noiseless_identity_simulation_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "id.toml",
        "[source]\nsources = 16\nsamples = 12\nk1 = 2\nk2 = 2\n[coding]\nm1 = 12\nm2 = 16\nprojection = \"identity\"\n\
         [network]\nmode = \"identity\"\nsigma = 0.0\n",
    );
    let o = csnc(&["simulate", "--config", &cfg, "--out", "sim"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("sim/records.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("record,")).collect();
    assert_eq!(rows.len(), 16);
    for r in rows {
        let d: f64 = r.split(',').nth(10).unwrap().parse().unwrap();
        assert!(d.abs() < 1e-20, "{r}");
    }
}

#[test]
fn decode_reads_simulated_observations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.toml", SMALL);
    assert!(csnc(&["simulate", "--config", &cfg, "--out", "s"], dir.path()).status.success());
    let regen = csnc(&["decode", "--config", &cfg, "--out", "d1"], dir.path());
    let from_file = csnc(&["decode", "--config", &cfg, "--out", "d2", "--obs", "s/observations_r0.csv"], dir.path());
    assert!(regen.status.success() && from_file.status.success());
    assert_eq!(stdout(&regen), stdout(&from_file));
    assert_eq!(fs::read(dir.path().join("d1/x_hat_r0.csv")).unwrap(), fs::read(dir.path().join("d2/x_hat_r0.csv")).unwrap());
    let bad = csnc(&["decode", "--config", &cfg, "--obs", "s/transfer_r0.csv", "--out", "d3"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn generate_and_project_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.toml", SMALL);
    assert!(csnc(&["generate", "--config", &cfg, "--out", "g"], dir.path()).status.success());
    assert!(csnc(&["project", "--config", &cfg, "--out", "g"], dir.path()).status.success());
    for f in ["ensemble.csv", "phi.csv", "psi.csv", "config.toml", "projection.csv", "projected.csv"] {
        assert!(dir.path().join("g").join(f).exists(), "{f}");
    }
}

#[test]
fn cascade_check_default_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let o = csnc(&["cascade-check", "--out", "cc"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("violationsLeft = 0"));
    assert!(dir.path().join("cc/cascade.csv").exists());
}

#[test]
fn re_estimate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = csnc(&["re-estimate", "--rows", "10", "--cols", "14", "--k", "2", "--out", "re/report.csv"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("gamma_hat"));
    let report = fs::read_to_string(dir.path().join("re/report.csv")).unwrap();
    assert!(report.starts_with("support,"));
}

#[test]
fn sweep_writes_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.toml", SMALL);
    let o = csnc(&["sweep", "--config", &cfg, "--axis", "sigma", "--values", "0.05,0.1,0.2", "--out", "sw"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("slope of median_stage1_sq_error"));
    assert!(fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap().contains("# slope = "));
}

#[test]
fn calibration_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "z.toml", &format!("{SMALL}sigma = 0.0\n"));
    let o = csnc(&["calibrate", "--config", &cfg, "--pilot", "20", "--fresh", "5", "--out", "cal"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "not a directory").unwrap();
    let cfg = write_cfg(dir.path(), "c.toml", SMALL);
    let o = csnc(&["trial", "--config", &cfg, "--out", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let missing = csnc(&["trial", "--config", "nope.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(3));
}
