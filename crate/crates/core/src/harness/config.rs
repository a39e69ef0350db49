//! Experiment configuration, read from TOML.
//!
//! ```toml
//! schema_version = 1
//! master_seed = 20100512
//! trials = 50
//!
//! [source]
//! sources = 128          # N
//! samples = 128          # n
//! k1 = 4
//! k2 = 4
//! phi = "discrete-cosine"
//! psi = "random-orthonormal"
//! amplitude = [1.0, 2.0]
//! unit_power = true
//!
//! [coding]
//! m1 = 32
//! m2 = 32
//! projection = "gaussian"
//! projection_mode = "shared"
//! case = "dense"         # or "sparse": b_i = 1 with probability m2/N
//! redraw_b_per_t = true
//!
//! [network]
//! mode = "direct"        # or "example1", "identity"
//! m = 32
//! connect_prob = 0.3333333333333333
//! coefficients = "rademacher"
//! receivers = 1
//! sigma = 0.1
//!
//! [target]
//! distortion = 0.0025
//!
//! [decoder]
//! xi_spatial = { rule = "noise", value = 2.0 }
//! xi_temporal = { rule = "noise", value = 2.0 }
//! debias = true
//! ```
//!
//! Every key is optional; missing keys take the defaults shown.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::lasso::{DecodeOptions, XiRule, DEFAULT_KKT_TOL, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::mathcore::Seed;
use crate::netsim::CoeffFamily;
use crate::precoder::{ProjectionFamily, ProjectionMode};
use crate::sources::{DictionaryKind, SparsityProfile};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MASTER_SEED: u64 = 20_100_512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkMode {
    /// i.i.d. Gaussian m2 × N transfer matrix.
    Direct,
    /// Random layered topology: sources → m intermediates → receivers.
    Example1,
    /// `G = I`, needs m2 = N (test pipelines).
    Identity,
}

impl FromStr for NetworkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(NetworkMode::Direct),
            "example1" => Ok(NetworkMode::Example1),
            "identity" => Ok(NetworkMode::Identity),
            other => Err(Error::InvalidArgument(format!("unknown network mode {other:?}"))),
        }
    }
}

impl fmt::Display for NetworkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkMode::Direct => "direct",
            NetworkMode::Example1 => "example1",
            NetworkMode::Identity => "identity",
        })
    }
}

/// Which sources transmit at each time index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmissionCase {
    /// Case 1: each source transmits with probability m2/N.
    Sparse,
    /// Case 2: every source transmits.
    Dense,
}

impl FromStr for TransmissionCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" | "case1" => Ok(TransmissionCase::Sparse),
            "dense" | "case2" => Ok(TransmissionCase::Dense),
            other => Err(Error::InvalidArgument(format!("unknown transmission case {other:?}"))),
        }
    }
}

impl fmt::Display for TransmissionCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransmissionCase::Sparse => "sparse",
            TransmissionCase::Dense => "dense",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub sources: usize,
    pub samples: usize,
    pub k1: usize,
    pub k2: usize,
    pub phi: DictionaryKind,
    pub psi: DictionaryKind,
    /// Core magnitudes are uniform on this range before scaling.
    pub amplitude: (f64, f64),
    /// Scale magnitudes by `√(N n / (k1 k2))` so the average per-sample source
    /// power is the mean squared magnitude, independent of the sparsity.
    pub unit_power: bool,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            sources: 128,
            samples: 128,
            k1: 4,
            k2: 4,
            phi: DictionaryKind::DiscreteCosine,
            psi: DictionaryKind::RandomOrthonormal,
            amplitude: (1.0, 2.0),
            unit_power: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodingSection {
    pub m1: usize,
    pub m2: usize,
    pub projection: ProjectionFamily,
    pub projection_mode: ProjectionMode,
    pub case: TransmissionCase,
    pub redraw_b_per_t: bool,
}

impl Default for CodingSection {
    fn default() -> Self {
        CodingSection {
            m1: 32,
            m2: 32,
            projection: ProjectionFamily::Gaussian,
            projection_mode: ProjectionMode::Shared,
            case: TransmissionCase::Dense,
            redraw_b_per_t: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub mode: NetworkMode,
    /// Linear combinations delivered per network use.
    pub m: usize,
    pub connect_prob: f64,
    pub coefficients: CoeffFamily,
    pub receivers: usize,
    pub sigma: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            mode: NetworkMode::Direct,
            m: 32,
            connect_prob: 1.0 / 3.0,
            coefficients: CoeffFamily::Rademacher,
            receivers: 1,
            sigma: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Allowed per-source distortion D.
    pub distortion: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection { distortion: 0.0025 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub xi_spatial: XiRule,
    pub xi_temporal: XiRule,
    pub debias: bool,
    pub max_iter: usize,
    pub tol: f64,
    pub kkt_tol: f64,
}

impl Default for DecoderSection {
    fn default() -> Self {
        DecoderSection {
            xi_spatial: XiRule::default(),
            xi_temporal: XiRule::default(),
            debias: true,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            kkt_tol: DEFAULT_KKT_TOL,
        }
    }
}

impl DecoderSection {
    pub fn options(&self) -> DecodeOptions {
        DecodeOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            kkt_tol: self.kkt_tol,
            debias: self.debias,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub trials: usize,
    pub source: SourceSection,
    pub coding: CodingSection,
    pub network: NetworkSection,
    pub target: TargetSection,
    pub decoder: DecoderSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            master_seed: DEFAULT_MASTER_SEED,
            trials: 50,
            source: SourceSection::default(),
            coding: CodingSection::default(),
            network: NetworkSection::default(),
            target: TargetSection::default(),
            decoder: DecoderSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn profile(&self) -> Result<SparsityProfile> {
        SparsityProfile::new(self.source.sources, self.source.samples, self.source.k1, self.source.k2)
    }

    pub fn master(&self) -> Seed {
        Seed::from_master(self.master_seed)
    }

    pub fn trial_seed(&self, trial_index: u64) -> Seed {
        self.master().derive(trial_index)
    }

    /// Core magnitude range after the optional unit-power scaling.
    pub fn amplitude_range(&self) -> (f64, f64) {
        let (lo, hi) = self.source.amplitude;
        if !self.source.unit_power {
            return (lo, hi);
        }
        let s = &self.source;
        let active = (s.k1 * s.k2).max(1) as f64;
        let scale = ((s.sources * s.samples) as f64 / active).sqrt();
        (lo * scale, hi * scale)
    }

    /// Probability that a source transmits at a given time index.
    pub fn onoff_prob(&self) -> f64 {
        match self.coding.case {
            TransmissionCase::Dense => 1.0,
            TransmissionCase::Sparse => self.coding.m2 as f64 / self.source.sources as f64,
        }
    }

    /// Rejects inconsistent configurations before any computation.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
            self.schema_version
        );
        let p = self.profile()?;
        let c = &self.coding;
        let net = &self.network;
        ensure!(c.m1 >= 1 && c.m1 <= p.samples, "m1={} must lie in [1, n={}]", c.m1, p.samples);
        ensure!(c.m2 >= 1 && c.m2 <= p.sources, "m2={} must lie in [1, N={}]", c.m2, p.sources);
        ensure!(p.samples >= 2 && p.sources >= 2, "need n >= 2 and N >= 2");
        ensure!(net.m >= 1, "network m must be >= 1");
        ensure!(net.receivers >= 1, "need at least one receiver");
        ensure!(
            net.sigma >= 0.0 && net.sigma.is_finite(),
            "sigma must be finite and >= 0, got {}",
            net.sigma
        );
        ensure!(
            self.target.distortion > 0.0 && self.target.distortion.is_finite(),
            "distortion target D must be > 0, got {}",
            self.target.distortion
        );
        ensure!(self.trials >= 1, "trials must be >= 1");
        let (lo, hi) = self.source.amplitude;
        ensure!(lo > 0.0 && lo <= hi && hi.is_finite(), "amplitude range must satisfy 0 < lo <= hi");
        match net.mode {
            NetworkMode::Direct => {}
            NetworkMode::Example1 => {
                ensure!(
                    c.m2 <= net.m,
                    "example1 network carries m={} combinations, m2={} exceeds it",
                    net.m,
                    c.m2
                );
                ensure!(p.sources >= 3, "example1 network needs N >= 3");
                ensure!(
                    net.connect_prob >= 1.0 / 3.0 && net.connect_prob <= 1.0,
                    "example1 connect_prob must lie in [1/3, 1], got {}",
                    net.connect_prob
                );
            }
            NetworkMode::Identity => {
                ensure!(c.m2 == p.sources, "identity network needs m2 = N");
            }
        }
        if c.projection == ProjectionFamily::Identity {
            ensure!(c.m1 == p.samples, "identity projection needs m1 = n");
        }
        let d = &self.decoder;
        ensure!(d.max_iter >= 1 && d.tol > 0.0 && d.kkt_tol > 0.0, "decoder tolerances must be positive");
        for rule in [d.xi_spatial, d.xi_temporal] {
            match rule {
                XiRule::Fixed(v) | XiRule::Noise(v) => {
                    ensure!(v > 0.0 && v.is_finite(), "xi rule value must be > 0, got {v}")
                }
            }
        }
        Ok(())
    }
}
