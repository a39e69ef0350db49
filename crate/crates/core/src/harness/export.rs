//! CSV export of trial records and sweeps, plus the plain-text summary.
//!
//! Files start with `#` comment lines documenting the columns. Floats use the
//! round-trip format of [`crate::io::fmt_f64`], and wall times are never
//! written, so reruns of a seeded experiment produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_rational::Ratio;

use super::budget::TheoremCheck;
use super::sweep::{RecoverySweep, SweepResult};
use super::trial::TrialRecord;
use crate::error::{ensure, Error, Result};
use crate::io::{fmt_f64, parse_f64};
use crate::mathcore::Seed;

pub const TRIAL_COLUMNS: [&str; 17] = [
    "kind",
    "trial",
    "seed_master",
    "seed_stream",
    "receiver",
    "source",
    "m1",
    "m2",
    "m",
    "c_use",
    "distortion",
    "max_distortion",
    "support_recovery_rate",
    "stage1_sq_error",
    "converged",
    "stat",
    "value",
];

const TRIAL_DOC: &str = "\
# csnc trial export v1
# kind=record: one row per (trial, receiver, source); stat/value empty
#   distortion = (1/n)||X_i - X~_i||^2 at that receiver
#   max_distortion, support_recovery_rate, stage1_sq_error, converged are per trial
#   c_use = m1*m2/m as an exact fraction
# kind=summary: stat/value only, aggregated over all records in the file
";

fn write_comment_block<W: Write>(out: &mut W, doc: &str, extra: &[String]) -> Result<()> {
    out.write_all(doc.as_bytes())?;
    for line in extra {
        for l in line.lines() {
            writeln!(out, "# {l}")?;
        }
    }
    Ok(())
}

fn summary_stats(records: &[TrialRecord], distortion: Option<f64>) -> Vec<(String, f64)> {
    if records.is_empty() {
        return Vec::new();
    }
    let d: Vec<f64> = records.iter().map(|r| r.max_distortion).collect();
    let n = d.len() as f64;
    let mut stats = vec![
        ("trials".to_string(), n),
        ("mean_max_distortion".to_string(), d.iter().sum::<f64>() / n),
        ("median_max_distortion".to_string(), super::sweep::median(&d)),
        ("p95_max_distortion".to_string(), super::sweep::percentile(&d, 0.95)),
        (
            "mean_support_recovery_rate".to_string(),
            records.iter().map(|r| r.support_recovery_rate).sum::<f64>() / n,
        ),
        (
            "converged_fraction".to_string(),
            records.iter().filter(|r| r.all_converged).count() as f64 / n,
        ),
    ];
    if let Some(target) = distortion {
        stats.push(("target_distortion".to_string(), target));
        stats.push((
            "success_fraction".to_string(),
            d.iter().filter(|&&v| v <= target).count() as f64 / n,
        ));
    }
    stats
}

/// Writes `records` in trial-index order. An empty slice gives a file with
/// the comment block and header only.
pub fn write_trials_csv(path: &Path, records: &[TrialRecord], distortion: Option<f64>, notes: &[String]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_comment_block(&mut out, TRIAL_DOC, notes)?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(TRIAL_COLUMNS)?;
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.trial_index);
    for r in sorted {
        for (rx, row) in r.per_source_distortion.iter().enumerate() {
            for (i, &d) in row.iter().enumerate() {
                w.write_record([
                    "record".to_string(),
                    r.trial_index.to_string(),
                    r.seed.master.to_string(),
                    r.seed.stream.to_string(),
                    rx.to_string(),
                    i.to_string(),
                    r.m1.to_string(),
                    r.m2.to_string(),
                    r.m.to_string(),
                    r.c_use.to_string(),
                    fmt_f64(d),
                    fmt_f64(r.max_distortion),
                    fmt_f64(r.support_recovery_rate),
                    fmt_f64(r.stage1_sq_error),
                    r.all_converged.to_string(),
                    String::new(),
                    String::new(),
                ])?;
            }
        }
    }
    for (stat, value) in summary_stats(records, distortion) {
        let mut row = vec![String::new(); TRIAL_COLUMNS.len()];
        row[0] = "summary".to_string();
        row[15] = stat;
        row[16] = fmt_f64(value);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_u64(s: &str) -> Result<u64> {
    s.parse().map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
}

/// Reads back the record rows (summary rows are skipped). Timings are 0.
pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    ensure!(header == TRIAL_COLUMNS, "trial CSV header mismatch: {header:?}");
    let mut by_trial: BTreeMap<u64, TrialRecord> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        if &row[0] == "summary" {
            continue;
        }
        ensure!(&row[0] == "record", "unknown row kind {:?}", &row[0]);
        let trial = parse_u64(&row[1])?;
        let receiver = parse_usize(&row[4])?;
        let source = parse_usize(&row[5])?;
        let c_use: Ratio<u64> = row[9]
            .parse()
            .map_err(|_| Error::Parse(format!("bad fraction {:?}", &row[9])))?;
        let converged: bool = row[14]
            .parse()
            .map_err(|_| Error::Parse(format!("bad bool {:?}", &row[14])))?;
        let rec = by_trial.entry(trial).or_insert_with(|| TrialRecord {
            trial_index: trial,
            seed: Seed::new(0, 0),
            m1: 0,
            m2: 0,
            m: 0,
            per_source_distortion: Vec::new(),
            max_distortion: 0.0,
            c_use,
            support_recovery_rate: 0.0,
            stage1_sq_error: 0.0,
            all_converged: converged,
            timing_ms: 0.0,
        });
        rec.seed = Seed::new(parse_u64(&row[2])?, parse_u64(&row[3])?);
        rec.m1 = parse_usize(&row[6])?;
        rec.m2 = parse_usize(&row[7])?;
        rec.m = parse_usize(&row[8])?;
        rec.max_distortion = parse_f64(&row[11])?;
        rec.support_recovery_rate = parse_f64(&row[12])?;
        rec.stage1_sq_error = parse_f64(&row[13])?;
        if rec.per_source_distortion.len() <= receiver {
            rec.per_source_distortion.resize(receiver + 1, Vec::new());
        }
        let slot = &mut rec.per_source_distortion[receiver];
        ensure!(slot.len() == source, "trial {trial}: rows out of order at receiver {receiver}, source {source}");
        slot.push(parse_f64(&row[10])?);
    }
    Ok(by_trial.into_values().collect())
}

/// Reads the `kind=summary` rows as `(stat, value)` pairs.
pub fn read_trial_summary(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if &row[0] == "summary" {
            out.push((row[15].to_string(), parse_f64(&row[16])?));
        }
    }
    Ok(out)
}

/// Comment lines of a CSV written by this module, without the `# ` prefix.
pub fn read_comments(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(rest) => out.push(rest.strip_prefix(' ').unwrap_or(rest).to_string()),
            None => break,
        }
    }
    Ok(out)
}

const SWEEP_DOC: &str = "\
# csnc sweep export v1
# one row per axis value; distortions are per-trial maxima over receivers and sources
# stage1 errors are mean_t ||y_t - y^_t||^2
";

pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut notes = vec![
        format!("axis = {}", result.axis),
        format!("slope_metric = {}", result.slope_metric),
        format!("slope = {}", result.slope.map_or("none".to_string(), fmt_f64)),
    ];
    notes.extend(result.audit.iter().map(|a| format!("audit: {a}")));
    write_comment_block(&mut out, SWEEP_DOC, &notes)?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record([
        "value",
        "trials",
        "mean_distortion",
        "median_distortion",
        "p95_distortion",
        "success_fraction",
        "median_stage1_sq_error",
        "p95_stage1_sq_error",
        "mean_support_recovery",
    ])?;
    for c in &result.cells {
        w.write_record([
            fmt_f64(c.value),
            c.trials.to_string(),
            fmt_f64(c.mean_distortion),
            fmt_f64(c.median_distortion),
            fmt_f64(c.p95_distortion),
            fmt_f64(c.success_fraction),
            fmt_f64(c.median_stage1_sq_error),
            fmt_f64(c.p95_stage1_sq_error),
            fmt_f64(c.mean_support_recovery),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_recovery_sweep_csv(path: &Path, result: &RecoverySweep) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut notes = vec![
        format!("axis = {:?}", result.axis),
        format!("slope = {}", result.slope.map_or("none".to_string(), fmt_f64)),
    ];
    notes.extend(result.audit.iter().map(|a| format!("audit: {a}")));
    write_comment_block(&mut out, "# csnc recovery sweep v1\n# bound_ratio = sq_error / (sigma^2 k ln p / q)\n", &notes)?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(["value", "trials", "median_sq_error", "p95_sq_error", "support_exact_fraction", "p95_bound_ratio"])?;
    for c in &result.cells {
        w.write_record([
            fmt_f64(c.value),
            c.trials.to_string(),
            fmt_f64(c.median_sq_error),
            fmt_f64(c.p95_sq_error),
            fmt_f64(c.support_exact_fraction),
            fmt_f64(c.p95_bound_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable report of a calibrate-then-verify run.
pub fn theorem_summary(check: &TheoremCheck, distortion: f64) -> String {
    let cal = &check.calibration;
    let mut s = String::new();
    let _ = writeln!(s, "target distortion D        {}", fmt_f64(distortion));
    let _ = writeln!(s, "calibrated c               {}", fmt_f64(cal.c));
    let _ = writeln!(s, "suggested split            m1 = {}, m2 = {}{}", cal.budget.m1, cal.budget.m2, if cal.budget.clipped { " (clipped)" } else { "" });
    let _ = writeln!(s, "budget C                   {}", fmt_f64(cal.budget.c_use));
    if let Some(r) = check.records.first() {
        let _ = writeln!(s, "network uses m1*m2/m       {}", r.c_use);
    }
    let _ = writeln!(s, "pilot success              {:.3} over {} trials", cal.success_fraction, cal.pilot_trials);
    let _ = writeln!(s, "fresh success              {:.3} over {} trials", check.fresh_success_fraction, check.records.len());
    let _ = writeln!(s, "naive baseline             {}", fmt_f64(check.naive_baseline));
    let _ = writeln!(s, "budget ratio C/baseline    {}", fmt_f64(check.budget_ratio));
    let _ = writeln!(s, "pilot grid:");
    for p in &cal.grid {
        let _ = writeln!(s, "  m1 = {:4}  m2 = {:4}  success = {:.3}", p.m1, p.m2, p.success_fraction);
    }
    s
}
