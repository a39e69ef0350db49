//! Source-side pre-coding: random temporal projection `Y_i = A_i X_i` and
//! the probabilistic on/off spatial mask.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::io::{read_matrix_csv, read_toml, sidecar_path, write_matrix_csv, write_toml};
use crate::mathcore::{gaussian_matrix, rademacher_matrix, Mat, Seed};
use crate::sources::SourceEnsemble;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionFamily {
    /// i.i.d. N(0, 1) entries.
    Gaussian,
    /// i.i.d. ±1 entries.
    Rademacher,
    /// `A = I_n`; only valid with `m1 = n`.
    Identity,
}

impl FromStr for ProjectionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ProjectionFamily::Gaussian),
            "rademacher" => Ok(ProjectionFamily::Rademacher),
            "identity" => Ok(ProjectionFamily::Identity),
            other => Err(Error::InvalidArgument(format!(
                "unknown projection family {other:?}"
            ))),
        }
    }
}

impl fmt::Display for ProjectionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionFamily::Gaussian => "gaussian",
            ProjectionFamily::Rademacher => "rademacher",
            ProjectionFamily::Identity => "identity",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    /// One matrix shared by every source (keeps `Yᵗ` exactly `Ψ`-sparse).
    Shared,
    /// An independent matrix per source.
    PerSource,
}

impl FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(ProjectionMode::Shared),
            "per-source" => Ok(ProjectionMode::PerSource),
            other => Err(Error::InvalidArgument(format!(
                "unknown projection mode {other:?}"
            ))),
        }
    }
}

/// The temporal projection matrices `A_i` (m1 × n).
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionOperator {
    matrices: Vec<Mat>,
    pub family: ProjectionFamily,
    pub mode: ProjectionMode,
    pub seed: Seed,
    sources: usize,
}

fn draw_one(family: ProjectionFamily, m1: usize, n: usize, seed: Seed) -> Result<Mat> {
    match family {
        ProjectionFamily::Gaussian => gaussian_matrix(m1, n, 1.0, seed),
        ProjectionFamily::Rademacher => rademacher_matrix(m1, n, seed),
        ProjectionFamily::Identity => {
            ensure!(m1 == n, "identity projection needs m1 = n ({m1} != {n})");
            Ok(Mat::identity(n))
        }
    }
}

impl ProjectionOperator {
    /// Draws the projection for `sources` sources of `n` samples each.
    pub fn draw(
        m1: usize,
        n: usize,
        sources: usize,
        family: ProjectionFamily,
        mode: ProjectionMode,
        seed: Seed,
    ) -> Result<Self> {
        ensure!(m1 >= 1, "projection needs m1 >= 1");
        ensure!(m1 <= n, "projection must not expand: m1={m1} > n={n}");
        ensure!(sources >= 1, "projection needs at least one source");
        let matrices = match mode {
            ProjectionMode::Shared => vec![draw_one(family, m1, n, seed)?],
            ProjectionMode::PerSource => (0..sources)
                .map(|i| draw_one(family, m1, n, seed.derive(i as u64)))
                .collect::<Result<_>>()?,
        };
        Ok(ProjectionOperator {
            matrices,
            family,
            mode,
            seed,
            sources,
        })
    }

    /// Wraps an explicit shared matrix (m1 × n).
    pub fn shared(a: Mat, sources: usize) -> Result<Self> {
        ensure!(a.rows() >= 1 && a.rows() <= a.cols(), "projection must be m1 x n with 1 <= m1 <= n");
        Ok(ProjectionOperator {
            matrices: vec![a],
            family: ProjectionFamily::Gaussian,
            mode: ProjectionMode::Shared,
            seed: Seed::default(),
            sources,
        })
    }

    pub fn m1(&self) -> usize {
        self.matrices[0].rows()
    }

    pub fn samples(&self) -> usize {
        self.matrices[0].cols()
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    /// `A_i`.
    pub fn matrix_for(&self, source: usize) -> &Mat {
        match self.mode {
            ProjectionMode::Shared => &self.matrices[0],
            ProjectionMode::PerSource => &self.matrices[source],
        }
    }

    pub fn matrices(&self) -> &[Mat] {
        &self.matrices
    }
}

/// Column `i` of the result is `A_i X_i` (m1 × N).
pub fn temporal_project(ens: &SourceEnsemble, op: &ProjectionOperator) -> Result<Mat> {
    let (n_src, n_smp) = ens.x.shape();
    ensure!(
        op.samples() == n_smp,
        "projection expects n={} samples, ensemble has {n_smp}",
        op.samples()
    );
    ensure!(
        op.mode == ProjectionMode::Shared || op.sources() == n_src,
        "per-source projection built for {} sources, ensemble has {n_src}",
        op.sources()
    );
    let mut out = Mat::zeros(op.m1(), n_src);
    for i in 0..n_src {
        let yi = op.matrix_for(i).matvec(ens.x.row(i))?;
        out.set_col(i, &yi);
    }
    Ok(out)
}

/// Diagonal of the on/off matrix `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct OnOffPattern {
    pub diag: Vec<bool>,
    /// Bernoulli parameter the pattern was drawn with.
    pub prob: f64,
}

impl OnOffPattern {
    pub fn all_on(n: usize) -> Self {
        OnOffPattern {
            diag: vec![true; n],
            prob: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.diag.iter().filter(|&&b| b).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.diag.len()).filter(|&i| self.diag[i]).collect()
    }

    pub fn is_all_on(&self) -> bool {
        self.diag.iter().all(|&b| b)
    }
}

/// i.i.d. Bernoulli(`prob`) on/off diagonal.
pub fn draw_onoff(n: usize, prob: f64, seed: Seed) -> Result<OnOffPattern> {
    ensure!(
        (0.0..=1.0).contains(&prob),
        "on/off probability must lie in [0, 1], got {prob}"
    );
    let mut rng = seed.rng();
    let diag = (0..n).map(|_| rng.random::<f64>() < prob).collect();
    Ok(OnOffPattern { diag, prob })
}

/// `B y`.
pub fn apply_onoff(y: &[f64], pat: &OnOffPattern) -> Result<Vec<f64>> {
    ensure!(
        y.len() == pat.len(),
        "on/off pattern has {} entries, vector has {}",
        pat.len(),
        y.len()
    );
    Ok(y.iter()
        .zip(&pat.diag)
        .map(|(&v, &on)| if on { v } else { 0.0 })
        .collect())
}

/// Fraction of silent sources.
pub fn expected_transmission_savings(pat: &OnOffPattern) -> f64 {
    if pat.is_empty() {
        return 0.0;
    }
    1.0 - pat.active_count() as f64 / pat.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSidecar {
    pub schema: u32,
    pub family: ProjectionFamily,
    pub mode: ProjectionMode,
    pub m1: usize,
    pub samples: usize,
    pub sources: usize,
    pub seed: Seed,
}

/// Writes the projection as CSV (per-source matrices stacked vertically) with
/// a seed sidecar sufficient to regenerate it.
pub fn save_projection(op: &ProjectionOperator, csv_path: &Path) -> Result<()> {
    let (m1, n) = (op.m1(), op.samples());
    let stacked = Mat::from_fn(m1 * op.matrices.len(), n, |r, c| {
        op.matrices[r / m1][(r % m1, c)]
    });
    write_matrix_csv(csv_path, &stacked)?;
    write_toml(
        &sidecar_path(csv_path),
        &ProjectionSidecar {
            schema: 1,
            family: op.family,
            mode: op.mode,
            m1,
            samples: n,
            sources: op.sources,
            seed: op.seed,
        },
    )
}

pub fn load_projection(csv_path: &Path) -> Result<ProjectionOperator> {
    let side: ProjectionSidecar = read_toml(&sidecar_path(csv_path))?;
    let stacked = read_matrix_csv(csv_path)?;
    let count = match side.mode {
        ProjectionMode::Shared => 1,
        ProjectionMode::PerSource => side.sources,
    };
    ensure!(
        stacked.shape() == (side.m1 * count, side.samples),
        "projection CSV shape {:?} disagrees with sidecar",
        stacked.shape()
    );
    let matrices = (0..count)
        .map(|k| {
            let rows: Vec<usize> = (k * side.m1..(k + 1) * side.m1).collect();
            stacked.select_rows(&rows)
        })
        .collect();
    Ok(ProjectionOperator {
        matrices,
        family: side.family,
        mode: side.mode,
        seed: side.seed,
        sources: side.sources,
    })
}
