//! Doubly sparse source ensembles.
//!
//! An ensemble is `X = Ψ · M · Φᵀ` where the core `M` (N × n) is nonzero only
//! on `rowSupport × colSupport`, with `|rowSupport| = k2` and
//! `|colSupport| = k1`. Row `i` of `X` is source `i`. Then
//!
//! * every source is temporally sparse: `X_i = Φ θ_i` with
//!   `θ_i = Mᵀ Ψᵀ e_i` supported on `colSupport`;
//! * every shared linear functional `a` gives a spatially sparse cross-source
//!   vector: `y_j = aᵀ X_j` satisfies `y = Ψ μ` with `μ = M Φᵀ a` supported on
//!   `rowSupport`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::io::{read_matrix_csv, read_toml, sidecar_path, write_matrix_csv, write_toml};
use crate::mathcore::{
    gaussian_matrix, min_singular_value, random_orthonormal, Mat, Qr, Seed,
};

/// Source count, samples per source and the two sparsity levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityProfile {
    /// N
    pub sources: usize,
    /// n
    pub samples: usize,
    /// temporal sparsity k1
    pub k1: usize,
    /// spatial sparsity k2
    pub k2: usize,
}

impl SparsityProfile {
    pub fn new(sources: usize, samples: usize, k1: usize, k2: usize) -> Result<Self> {
        let p = SparsityProfile {
            sources,
            samples,
            k1,
            k2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.sources >= 1 && self.samples >= 1,
            "profile needs N >= 1 and n >= 1, got N={} n={}",
            self.sources,
            self.samples
        );
        ensure!(
            self.k1 <= self.samples,
            "temporal sparsity k1={} exceeds n={}",
            self.k1,
            self.samples
        );
        ensure!(
            self.k2 <= self.sources,
            "spatial sparsity k2={} exceeds N={}",
            self.k2,
            self.sources
        );
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryKind {
    Identity,
    RandomOrthonormal,
    DiscreteCosine,
    GaussianInvertible,
}

impl DictionaryKind {
    /// Whether every singular value is exactly one by construction.
    pub fn is_orthonormal(self) -> bool {
        !matches!(self, DictionaryKind::GaussianInvertible)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DictionaryKind::Identity => "identity",
            DictionaryKind::RandomOrthonormal => "random-orthonormal",
            DictionaryKind::DiscreteCosine => "discrete-cosine",
            DictionaryKind::GaussianInvertible => "gaussian-invertible",
        }
    }
}

impl fmt::Display for DictionaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DictionaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(DictionaryKind::Identity),
            "random-orthonormal" => Ok(DictionaryKind::RandomOrthonormal),
            "discrete-cosine" | "dct" => Ok(DictionaryKind::DiscreteCosine),
            "gaussian-invertible" => Ok(DictionaryKind::GaussianInvertible),
            other => Err(Error::InvalidArgument(format!(
                "unknown dictionary kind {other:?}"
            ))),
        }
    }
}

/// Orthonormal DCT-II basis with the atoms as columns.
fn dct_basis(dim: usize) -> Mat {
    let n = dim as f64;
    Mat::from_fn(dim, dim, |j, k| {
        let scale = if k == 0 {
            (1.0 / n).sqrt()
        } else {
            (2.0 / n).sqrt()
        };
        scale * (std::f64::consts::PI * (j as f64 + 0.5) * k as f64 / n).cos()
    })
}

/// Invertible `dim × dim` dictionary of the requested kind.
pub fn make_dictionary(kind: DictionaryKind, dim: usize, seed: Seed) -> Result<Mat> {
    ensure!(dim >= 1, "dictionary dimension must be >= 1");
    match kind {
        DictionaryKind::Identity => Ok(Mat::identity(dim)),
        DictionaryKind::RandomOrthonormal => random_orthonormal(dim, seed),
        DictionaryKind::DiscreteCosine => Ok(dct_basis(dim)),
        DictionaryKind::GaussianInvertible => {
            let m = gaussian_matrix(dim, dim, 1.0 / (dim as f64).sqrt(), seed)?;
            ensure!(
                min_singular_value(&m)? > MIN_DICT_SINGULAR,
                "gaussian dictionary draw is numerically singular"
            );
            Ok(m)
        }
    }
}

const MIN_DICT_SINGULAR: f64 = 1e-8;

/// Temporal (Φ, n × n) and spatial (Ψ, N × N) dictionaries.
#[derive(Clone, Debug)]
pub struct DictionaryPair {
    pub phi: Mat,
    pub psi: Mat,
    pub phi_kind: DictionaryKind,
    pub psi_kind: DictionaryKind,
    pub seed: Seed,
}

const PHI_STREAM: u64 = 0x5048_49;
const PSI_STREAM: u64 = 0x5053_49;

impl DictionaryPair {
    pub fn generate(
        profile: &SparsityProfile,
        phi_kind: DictionaryKind,
        psi_kind: DictionaryKind,
        seed: Seed,
    ) -> Result<Self> {
        let phi = make_dictionary(phi_kind, profile.samples, seed.derive(PHI_STREAM))?;
        let psi = make_dictionary(psi_kind, profile.sources, seed.derive(PSI_STREAM))?;
        Ok(DictionaryPair {
            phi,
            psi,
            phi_kind,
            psi_kind,
            seed,
        })
    }

    /// Wraps caller-provided dictionaries after checking squareness and invertibility.
    pub fn from_matrices(phi: Mat, psi: Mat) -> Result<Self> {
        ensure!(phi.rows() == phi.cols(), "Φ must be square");
        ensure!(psi.rows() == psi.cols(), "Ψ must be square");
        ensure!(
            min_singular_value(&phi)? > MIN_DICT_SINGULAR,
            "Φ is numerically singular"
        );
        ensure!(
            min_singular_value(&psi)? > MIN_DICT_SINGULAR,
            "Ψ is numerically singular"
        );
        Ok(DictionaryPair {
            phi,
            psi,
            phi_kind: DictionaryKind::GaussianInvertible,
            psi_kind: DictionaryKind::GaussianInvertible,
            seed: Seed::default(),
        })
    }

    pub fn samples(&self) -> usize {
        self.phi.rows()
    }

    pub fn sources(&self) -> usize {
        self.psi.rows()
    }
}

/// Samples of all sources plus the generative truth behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceEnsemble {
    /// N × n, row i is source i.
    pub x: Mat,
    /// N × n coefficient core.
    pub core: Mat,
    /// Sorted spatial support (nonzero rows of the core).
    pub row_support: Vec<usize>,
    /// Sorted temporal support (nonzero columns of the core).
    pub col_support: Vec<usize>,
    pub profile: SparsityProfile,
    pub amplitude: (f64, f64),
    pub seed: Seed,
}

impl SourceEnsemble {
    /// Samples of source `i`.
    pub fn source(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    /// True temporal coefficients θ_i = Mᵀ Ψᵀ e_i.
    pub fn temporal_coefficients(&self, dicts: &DictionaryPair, i: usize) -> Vec<f64> {
        let psi_row = dicts.psi.row(i);
        self.core
            .tmatvec(psi_row)
            .expect("ensemble core and Ψ agree in shape")
    }

    /// True spatial coefficients μ = M Φᵀ a for a shared functional `a`.
    pub fn spatial_coefficients(&self, dicts: &DictionaryPair, a: &[f64]) -> Result<Vec<f64>> {
        let phi_t_a = dicts.phi.tmatvec(a)?;
        self.core.matvec(&phi_t_a)
    }

    /// `‖X − Ψ M Φᵀ‖_F / max(1, ‖X‖_F)`.
    pub fn reconstruction_residual(&self, dicts: &DictionaryPair) -> Result<f64> {
        let rebuilt = dicts.psi.matmul(&self.core)?.matmul(&dicts.phi.transpose())?;
        Ok(self.x.sub(&rebuilt)?.fro_norm() / self.x.fro_norm().max(1.0))
    }
}

/// Draws a doubly sparse ensemble.
pub fn generate_ensemble(
    profile: &SparsityProfile,
    dicts: &DictionaryPair,
    amp_range: (f64, f64),
    seed: Seed,
) -> Result<SourceEnsemble> {
    profile.validate()?;
    let (lo, hi) = amp_range;
    ensure!(
        lo > 0.0 && lo <= hi && hi.is_finite(),
        "amplitude range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
    );
    ensure!(
        dicts.samples() == profile.samples && dicts.sources() == profile.sources,
        "dictionary sizes ({}, {}) do not match profile (n={}, N={})",
        dicts.samples(),
        dicts.sources(),
        profile.samples,
        profile.sources
    );
    let (n_src, n_smp) = (profile.sources, profile.samples);
    let mut rng = seed.rng();
    let mut row_support = index::sample(&mut rng, n_src, profile.k2).into_vec();
    let mut col_support = index::sample(&mut rng, n_smp, profile.k1).into_vec();
    row_support.sort_unstable();
    col_support.sort_unstable();

    let mut core = Mat::zeros(n_src, n_smp);
    for &r in &row_support {
        for &c in &col_support {
            let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            core[(r, c)] = sign * mag;
        }
    }

    let x = dicts.psi.matmul(&core)?.matmul(&dicts.phi.transpose())?;
    Ok(SourceEnsemble {
        x,
        core,
        row_support,
        col_support,
        profile: *profile,
        amplitude: amp_range,
        seed,
    })
}

/// Outcome of checking both sparsity assumptions on an ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumptionReport {
    pub temporal_ok: bool,
    pub spatial_ok: bool,
    /// Largest coefficient magnitude that has to be counted as "beyond the
    /// allowed sparsity" (the (k+1)-th largest |coefficient| over all checks).
    pub worst_residual: f64,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.temporal_ok && self.spatial_ok
    }
}

/// `1e-8 ×` the largest core magnitude, the tolerance that separates
/// numerical dust from signal.
pub fn default_sparsity_tol(ens: &SourceEnsemble) -> f64 {
    1e-8 * ens.core.max_abs().max(f64::MIN_POSITIVE)
}

const RANDOM_FUNCTIONALS: usize = 10;
const FUNCTIONAL_SEED: Seed = Seed::new(0x6675_6e63, 0);

/// (k+1)-th largest magnitude, zero when there are at most k entries.
fn excess_magnitude(coeffs: &[f64], k: usize) -> f64 {
    if coeffs.len() <= k {
        return 0.0;
    }
    let mut mags: Vec<f64> = coeffs.iter().map(|c| c.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags[k]
}

/// Checks temporal k1-sparsity of every source and spatial k2-sparsity of the
/// cross-source vector for every coordinate functional plus ten random ones.
pub fn verify_assumption(
    ens: &SourceEnsemble,
    dicts: &DictionaryPair,
    sparsity_tol: f64,
) -> Result<AssumptionReport> {
    let p = ens.profile;
    ensure!(
        ens.x.shape() == (p.sources, p.samples),
        "ensemble shape does not match its profile"
    );
    ensure!(
        dicts.samples() == p.samples && dicts.sources() == p.sources,
        "dictionary sizes do not match the ensemble"
    );
    let phi_qr = Qr::new(&dicts.phi)?;
    let psi_qr = Qr::new(&dicts.psi)?;
    ensure!(
        phi_qr.diag_ratio() > 1e-13,
        "temporal dictionary is singular"
    );
    ensure!(
        psi_qr.diag_ratio() > 1e-13,
        "spatial dictionary is singular"
    );

    let mut worst_temporal: f64 = 0.0;
    for i in 0..p.sources {
        let theta = phi_qr.solve_least_squares(ens.x.row(i))?;
        worst_temporal = worst_temporal.max(excess_magnitude(&theta, p.k1));
    }

    let mut functionals: Vec<Vec<f64>> = (0..p.samples)
        .map(|t| {
            let mut e = vec![0.0; p.samples];
            e[t] = 1.0;
            e
        })
        .collect();
    let random = gaussian_matrix(RANDOM_FUNCTIONALS, p.samples, 1.0, FUNCTIONAL_SEED)?;
    functionals.extend((0..RANDOM_FUNCTIONALS).map(|r| random.row(r).to_vec()));

    let mut worst_spatial: f64 = 0.0;
    for a in &functionals {
        let y = ens.x.matvec(a)?;
        let mu = psi_qr.solve_least_squares(&y)?;
        worst_spatial = worst_spatial.max(excess_magnitude(&mu, p.k2));
    }

    Ok(AssumptionReport {
        temporal_ok: worst_temporal <= sparsity_tol,
        spatial_ok: worst_spatial <= sparsity_tol,
        worst_residual: worst_temporal.max(worst_spatial),
    })
}

/// Structured-text sidecar written next to an ensemble CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    pub schema: u32,
    pub profile: SparsityProfile,
    pub row_support: Vec<usize>,
    pub col_support: Vec<usize>,
    /// Core values on `row_support × col_support`, row-major.
    pub core_values: Vec<f64>,
    pub amplitude: (f64, f64),
    pub seed: Seed,
    pub dictionary_seed: Seed,
    pub phi_kind: DictionaryKind,
    pub psi_kind: DictionaryKind,
}

pub const ENSEMBLE_SCHEMA: u32 = 1;

/// Writes `X` to `csv_path` and the supports, core, seeds and dictionary
/// kinds to the `.toml` sidecar.
pub fn save_ensemble(ens: &SourceEnsemble, dicts: &DictionaryPair, csv_path: &Path) -> Result<()> {
    write_matrix_csv(csv_path, &ens.x)?;
    let core_values = ens
        .row_support
        .iter()
        .flat_map(|&r| ens.col_support.iter().map(move |&c| (r, c)))
        .map(|(r, c)| ens.core[(r, c)])
        .collect();
    let sidecar = EnsembleSidecar {
        schema: ENSEMBLE_SCHEMA,
        profile: ens.profile,
        row_support: ens.row_support.clone(),
        col_support: ens.col_support.clone(),
        core_values,
        amplitude: ens.amplitude,
        seed: ens.seed,
        dictionary_seed: dicts.seed,
        phi_kind: dicts.phi_kind,
        psi_kind: dicts.psi_kind,
    };
    write_toml(&sidecar_path(csv_path), &sidecar)
}

/// Reads back an ensemble and regenerates its dictionaries from the sidecar.
pub fn load_ensemble(csv_path: &Path) -> Result<(SourceEnsemble, DictionaryPair)> {
    let x = read_matrix_csv(csv_path)?;
    let side: EnsembleSidecar = read_toml(&sidecar_path(csv_path))?;
    ensure!(
        side.schema == ENSEMBLE_SCHEMA,
        "unsupported ensemble schema {}",
        side.schema
    );
    side.profile.validate()?;
    let p = side.profile;
    ensure!(
        x.shape() == (p.sources, p.samples),
        "ensemble CSV is {:?}, sidecar says {}x{}",
        x.shape(),
        p.sources,
        p.samples
    );
    ensure!(
        side.core_values.len() == side.row_support.len() * side.col_support.len(),
        "sidecar core has the wrong number of values"
    );
    let mut core = Mat::zeros(p.sources, p.samples);
    let mut vals = side.core_values.iter();
    for &r in &side.row_support {
        for &c in &side.col_support {
            ensure!(r < p.sources && c < p.samples, "support index out of range");
            core[(r, c)] = *vals.next().expect("length checked");
        }
    }
    let dicts = DictionaryPair::generate(&p, side.phi_kind, side.psi_kind, side.dictionary_seed)?;
    Ok((
        SourceEnsemble {
            x,
            core,
            row_support: side.row_support,
            col_support: side.col_support,
            profile: p,
            amplitude: side.amplitude,
            seed: side.seed,
        },
        dicts,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::max_singular_value;

    fn pair(p: &SparsityProfile, kind: DictionaryKind) -> DictionaryPair {
        DictionaryPair::generate(p, kind, kind, Seed::new(2, 2)).unwrap()
    }

    #[test]
    fn dictionary_examples() {
        assert_eq!(
            make_dictionary(DictionaryKind::Identity, 4, Seed::default()).unwrap(),
            Mat::identity(4)
        );
        let q = make_dictionary(DictionaryKind::RandomOrthonormal, 8, Seed::new(1, 1)).unwrap();
        assert!((min_singular_value(&q).unwrap() - 1.0).abs() < 1e-8);
        assert!((max_singular_value(&q).unwrap() - 1.0).abs() < 1e-8);
        assert!("wavelet".parse::<DictionaryKind>().is_err());
        assert!(make_dictionary(DictionaryKind::Identity, 0, Seed::default()).is_err());
    }

    #[test]
    fn dct_gram_is_identity() {
        let c = make_dictionary(DictionaryKind::DiscreteCosine, 8, Seed::default()).unwrap();
        // direct Gram computation
        for a in 0..8 {
            for b in 0..8 {
                let s: f64 = (0..8).map(|j| c[(j, a)] * c[(j, b)]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-8, "({a},{b}) = {s}");
            }
        }
    }

    #[test]
    fn empty_temporal_support_gives_zero_ensemble() {
        let p = SparsityProfile::new(6, 10, 0, 3).unwrap();
        let d = pair(&p, DictionaryKind::RandomOrthonormal);
        let e = generate_ensemble(&p, &d, (1.0, 2.0), Seed::new(3, 0)).unwrap();
        assert!(e.x.as_slice().iter().all(|&v| v == 0.0));
        let rep = verify_assumption(&e, &d, 1e-8).unwrap();
        assert!(rep.passed());
    }

    #[test]
    fn identity_dictionaries_expose_core() {
        let p = SparsityProfile::new(12, 20, 3, 4).unwrap();
        let d = pair(&p, DictionaryKind::Identity);
        let e = generate_ensemble(&p, &d, (1.0, 2.0), Seed::new(4, 0)).unwrap();
        assert_eq!(e.x, e.core);
        let nonzero_rows: Vec<usize> = (0..12)
            .filter(|&i| e.x.row(i).iter().any(|&v| v != 0.0))
            .collect();
        assert_eq!(nonzero_rows, e.row_support);
        for &i in &nonzero_rows {
            let cols: Vec<usize> = (0..20).filter(|&j| e.x[(i, j)] != 0.0).collect();
            assert_eq!(cols, e.col_support);
            for &j in &cols {
                let v = e.x[(i, j)].abs();
                assert!((1.0..=2.0).contains(&v));
            }
        }
    }

    #[test]
    fn generated_ensembles_satisfy_assumption() {
        let p = SparsityProfile::new(16, 24, 3, 2).unwrap();
        for kind in [
            DictionaryKind::RandomOrthonormal,
            DictionaryKind::DiscreteCosine,
            DictionaryKind::GaussianInvertible,
        ] {
            let d = pair(&p, kind);
            let e = generate_ensemble(&p, &d, (0.5, 1.5), Seed::new(9, 1)).unwrap();
            assert!(e.reconstruction_residual(&d).unwrap() < 1e-10);
            let rep = verify_assumption(&e, &d, 1e-8).unwrap();
            assert!(rep.passed(), "{kind}: {rep:?}");
        }
    }

    #[test]
    fn dense_ensemble_fails_temporal_check() {
        let p = SparsityProfile::new(4, 6, 2, 4).unwrap();
        let d = pair(&p, DictionaryKind::Identity);
        let mut e = generate_ensemble(&p, &d, (1.0, 1.0), Seed::new(1, 0)).unwrap();
        e.x = Mat::from_fn(4, 6, |_, _| 1.0);
        let rep = verify_assumption(&e, &d, 1e-8).unwrap();
        assert!(!rep.temporal_ok);
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(SparsityProfile::new(4, 6, 7, 1).is_err());
        assert!(SparsityProfile::new(4, 6, 1, 5).is_err());
        assert!(SparsityProfile::new(0, 6, 0, 0).is_err());
        let p = SparsityProfile::new(4, 6, 1, 1).unwrap();
        let d = pair(&p, DictionaryKind::Identity);
        assert!(generate_ensemble(&p, &d, (0.0, 1.0), Seed::default()).is_err());
        assert!(generate_ensemble(&p, &d, (2.0, 1.0), Seed::default()).is_err());
    }

    #[test]
    fn singular_dictionary_rejected() {
        let p = SparsityProfile::new(3, 3, 1, 1).unwrap();
        let mut d = pair(&p, DictionaryKind::Identity);
        let e = generate_ensemble(&p, &d, (1.0, 1.0), Seed::default()).unwrap();
        d.phi = Mat::zeros(3, 3);
        assert!(verify_assumption(&e, &d, 1e-8).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.csv");
        let p = SparsityProfile::new(10, 14, 2, 3).unwrap();
        let d = pair(&p, DictionaryKind::RandomOrthonormal);
        let e = generate_ensemble(&p, &d, (1.0, 2.0), Seed::new(8, 8)).unwrap();
        save_ensemble(&e, &d, &path).unwrap();
        let (e2, d2) = load_ensemble(&path).unwrap();
        assert_eq!(e, e2);
        assert_eq!(d.phi, d2.phi);
        assert_eq!(d.psi, d2.psi);
    }
}
