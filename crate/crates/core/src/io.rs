//! CSV and sidecar plumbing shared by the exporters.
//!
//! Floats are written in shortest round-trip exponent form (`{:e}`), so a
//! write/read cycle reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mathcore::Mat;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad float {s:?}: {e}")))
}

pub fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
}

/// Writes a matrix as headerless CSV, preceded by a `# matrix rows cols` comment.
pub fn write_matrix_csv(path: &Path, m: &Mat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# matrix {} {}", m.rows(), m.cols())?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in r.records() {
        let rec = rec?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Parse(format!(
                    "{}: ragged row {rows} ({} fields, expected {c})",
                    path.display(),
                    rec.len()
                )))
            }
            _ => {}
        }
        for field in rec.iter() {
            data.push(parse_f64(field)?);
        }
        rows += 1;
    }
    Mat::from_vec(rows, cols.unwrap_or(0), data)
}

/// Path of the structured-text sidecar that accompanies a CSV file.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("toml")
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = Mat::from_rows(&[
            vec![0.1, -1.0 / 3.0, 1e-300],
            vec![std::f64::consts::PI, 0.0, -2.5e17],
        ])
        .unwrap();
        write_matrix_csv(&p, &m).unwrap();
        let back = read_matrix_csv(&p).unwrap();
        assert_eq!(back, m);
    }
}
