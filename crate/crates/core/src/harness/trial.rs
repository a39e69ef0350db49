//! One end-to-end run of the coding scheme.
//!
//! Every random object of trial `j` comes from its own stream under
//! `master.derive(j)`, so a trial's outcome depends only on `(master, j)`.
//! Per-receiver objects (transfer matrix, noise) are keyed by receiver index.

use std::time::Instant;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NetworkMode};
use crate::error::Result;
use crate::lasso::{decode_all, support_of, DecodeInputs, DecodeResult};
use crate::mathcore::{sq_dist, Mat, Seed};
use crate::netsim::{
    build_example_topology_with_receivers, derive_receiver_transfer_matrix, direct_transfer_matrix,
    identity_transfer_matrix, network_uses, transmit, ChannelModel, TransferMatrix,
};
use crate::precoder::{draw_onoff, temporal_project, OnOffPattern, ProjectionMode, ProjectionOperator};
use crate::sources::{generate_ensemble, DictionaryPair, SourceEnsemble};

const DICT_STREAM: u64 = 1;
const ENSEMBLE_STREAM: u64 = 2;
const PROJECTION_STREAM: u64 = 3;
const TOPOLOGY_STREAM: u64 = 4;
const TRANSFER_STREAM: u64 = 5;
const ONOFF_STREAM: u64 = 6;
const NOISE_STREAM: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: Seed,
    pub m1: usize,
    pub m2: usize,
    pub m: usize,
    /// `[receiver][source]`: `(1/n)‖X_i − X̃_i‖²`.
    pub per_source_distortion: Vec<Vec<f64>>,
    /// Maximum over receivers and sources.
    pub max_distortion: f64,
    pub c_use: Ratio<u64>,
    /// Fraction of decoder problems (m1 spatial + N temporal, per receiver)
    /// whose recovered support equals the true one.
    pub support_recovery_rate: f64,
    /// Mean over receivers and time indices of `‖y_t − ŷ_t‖²`.
    pub stage1_sq_error: f64,
    pub all_converged: bool,
    /// Wall time; never exported.
    #[serde(skip)]
    pub timing_ms: f64,
}

impl TrialRecord {
    pub fn meets(&self, distortion: f64) -> bool {
        self.max_distortion <= distortion
    }
}

/// All random draws of one trial that the receivers do not decode.
pub struct TrialSetup {
    pub dicts: DictionaryPair,
    pub ensemble: SourceEnsemble,
    pub projection: ProjectionOperator,
    /// m1 × N, row t is `y_t`.
    pub projected: Mat,
    pub patterns: Vec<OnOffPattern>,
    pub transfers: Vec<TransferMatrix>,
    /// Per receiver, m2 × m1 observations.
    pub observations: Vec<Mat>,
}

pub fn transfer_matrices(cfg: &ExperimentConfig, seed: Seed) -> Result<Vec<TransferMatrix>> {
    let n_src = cfg.source.sources;
    let net = &cfg.network;
    let m2 = cfg.coding.m2;
    match net.mode {
        NetworkMode::Direct => (0..net.receivers)
            .map(|r| direct_transfer_matrix(m2, n_src, r, seed.derive(TRANSFER_STREAM)))
            .collect(),
        NetworkMode::Identity => Ok((0..net.receivers).map(|r| identity_transfer_matrix(n_src, r)).collect()),
        NetworkMode::Example1 => {
            let topo = build_example_topology_with_receivers(
                n_src,
                net.m,
                net.connect_prob,
                net.receivers,
                seed.derive(TOPOLOGY_STREAM),
            )?;
            (0..net.receivers)
                .map(|r| derive_receiver_transfer_matrix(&topo, r, m2, net.coefficients, seed.derive(TRANSFER_STREAM)))
                .collect()
        }
    }
}

pub fn setup_trial(cfg: &ExperimentConfig, trial_index: u64) -> Result<TrialSetup> {
    cfg.validate()?;
    let seed = cfg.trial_seed(trial_index);
    let profile = cfg.profile()?;
    let m1 = cfg.coding.m1;
    let dicts = DictionaryPair::generate(&profile, cfg.source.phi, cfg.source.psi, seed.derive(DICT_STREAM))?;
    let ensemble = generate_ensemble(&profile, &dicts, cfg.amplitude_range(), seed.derive(ENSEMBLE_STREAM))?;
    let projection = ProjectionOperator::draw(
        m1,
        profile.samples,
        profile.sources,
        cfg.coding.projection,
        cfg.coding.projection_mode,
        seed.derive(PROJECTION_STREAM),
    )?;
    let projected = temporal_project(&ensemble, &projection)?;
    let prob = cfg.onoff_prob();
    let patterns = if cfg.coding.redraw_b_per_t {
        (0..m1)
            .map(|t| draw_onoff(profile.sources, prob, seed.derive(ONOFF_STREAM).derive(t as u64)))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![draw_onoff(profile.sources, prob, seed.derive(ONOFF_STREAM).derive(0))?]
    };
    let transfers = transfer_matrices(cfg, seed)?;
    let channel = ChannelModel::new(cfg.network.sigma)?;
    let observations = transfers
        .par_iter()
        .map(|tm| {
            let mut obs = Mat::zeros(tm.m2(), m1);
            for t in 0..m1 {
                let pat = &patterns[if patterns.len() == 1 { 0 } else { t }];
                let noise = seed.derive(NOISE_STREAM).derive(tm.receiver as u64).derive(t as u64);
                obs.set_col(t, &transmit(tm, pat, projected.row(t), &channel, noise)?);
            }
            Ok(obs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialSetup {
        dicts,
        ensemble,
        projection,
        projected,
        patterns,
        transfers,
        observations,
    })
}

pub fn decode_receiver(cfg: &ExperimentConfig, setup: &TrialSetup, receiver: usize) -> Result<DecodeResult> {
    let inp = DecodeInputs {
        obs: &setup.observations[receiver],
        tm: &setup.transfers[receiver],
        patterns: &setup.patterns,
        dicts: &setup.dicts,
        projection: &setup.projection,
        sigma: cfg.network.sigma,
    };
    decode_all(
        &inp,
        cfg.decoder.xi_spatial,
        cfg.decoder.xi_temporal,
        &cfg.decoder.options(),
        Some(&setup.ensemble.x),
    )
}

pub fn run_trial(cfg: &ExperimentConfig, trial_index: u64) -> Result<TrialRecord> {
    let start = Instant::now();
    let setup = setup_trial(cfg, trial_index)?;
    let m1 = cfg.coding.m1;
    let n_src = cfg.source.sources;
    let decoded: Vec<DecodeResult> = (0..cfg.network.receivers)
        .into_par_iter()
        .map(|r| decode_receiver(cfg, &setup, r))
        .collect::<Result<_>>()?;

    // True supports: μ_t = M Φᵀ a_t is supported on the row support (shared
    // projection only), θ_i on the nonzero entries of Mᵀ Ψᵀ e_i.
    let true_theta: Vec<Vec<usize>> = (0..n_src)
        .map(|i| support_of(&setup.ensemble.temporal_coefficients(&setup.dicts, i)))
        .collect();
    let true_mu: Option<Vec<Vec<usize>>> = match setup.projection.mode {
        ProjectionMode::Shared => Some(
            (0..m1)
                .map(|t| {
                    let a = setup.projection.matrix_for(0).row(t);
                    setup.ensemble.spatial_coefficients(&setup.dicts, a).map(|mu| support_of(&mu))
                })
                .collect::<Result<_>>()?,
        ),
        ProjectionMode::PerSource => None,
    };

    let mut hits = 0usize;
    let mut problems = 0usize;
    let mut stage1 = 0.0;
    for d in &decoded {
        if let Some(tm) = &true_mu {
            for (t, s) in tm.iter().enumerate() {
                problems += 1;
                hits += usize::from(&d.spatial_support(t) == s);
            }
        }
        for (i, s) in true_theta.iter().enumerate() {
            problems += 1;
            hits += usize::from(&d.temporal_support(i) == s);
        }
        for t in 0..m1 {
            stage1 += sq_dist(d.y_hat.row(t), setup.projected.row(t));
        }
    }
    let per_source_distortion: Vec<Vec<f64>> = decoded.iter().map(|d| d.per_source_distortion.clone()).collect();
    let max_distortion = per_source_distortion
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v));
    Ok(TrialRecord {
        trial_index,
        seed: cfg.trial_seed(trial_index),
        m1,
        m2: cfg.coding.m2,
        m: cfg.network.m,
        per_source_distortion,
        max_distortion,
        c_use: network_uses(m1 as u64, cfg.coding.m2 as u64, cfg.network.m as u64)?,
        support_recovery_rate: if problems == 0 { 0.0 } else { hits as f64 / problems as f64 },
        stage1_sq_error: stage1 / (decoded.len() * m1) as f64,
        all_converged: decoded.iter().all(|d| d.all_converged),
        timing_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Trials `first .. first + count`, in index order.
pub fn run_trials(cfg: &ExperimentConfig, first: u64, count: usize) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|k| run_trial(cfg, first + k))
        .collect()
}

pub fn success_fraction(records: &[TrialRecord], distortion: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.meets(distortion)).count() as f64 / records.len() as f64
}
