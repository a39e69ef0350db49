//! The network as a linear operator.
//!
//! A receiver observes `Z = G B y + W` per network block, where `G` (m2 × N)
//! is its end-to-end transfer matrix and `W` is i.i.d. `N(0, σ²)` noise added
//! once at the receiver. `G` is either drawn directly (i.i.d. Gaussian) or
//! derived from a layered topology: sources → `m` intermediates → receiver,
//! giving `G = G2 · G1`.
//!
//! Transfer matrices are scaled so that `E‖G e_i‖² = m2`, i.e.
//! `(1/m2)‖G y‖² ≈ ‖y‖²` for generic `y`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::mathcore::{gaussian_matrix, Mat, Seed};
use crate::precoder::{apply_onoff, OnOffPattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    Source,
    Intermediate,
    Receiver,
}

impl Layer {
    fn tag(self) -> char {
        match self {
            Layer::Source => 's',
            Layer::Intermediate => 'i',
            Layer::Receiver => 'r',
        }
    }

    fn rank(self) -> u8 {
        match self {
            Layer::Source => 0,
            Layer::Intermediate => 1,
            Layer::Receiver => 2,
        }
    }
}

/// A layered directed network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTopology {
    pub layers: Vec<Layer>,
    /// Sorted `(from, to)` pairs.
    pub edges: Vec<(usize, usize)>,
    /// Edge probability used for the source → intermediate stage.
    pub connect_prob: f64,
}

impl NetworkTopology {
    /// Validates layering (edges only go to a later layer) and reachability.
    pub fn new(layers: Vec<Layer>, mut edges: Vec<(usize, usize)>, connect_prob: f64) -> Result<Self> {
        edges.sort_unstable();
        edges.dedup();
        for &(a, b) in &edges {
            ensure!(
                a < layers.len() && b < layers.len(),
                "edge ({a}, {b}) references a missing node"
            );
            ensure!(
                layers[a].rank() < layers[b].rank(),
                "edge ({a}, {b}) does not go forward in the layering"
            );
        }
        let topo = NetworkTopology {
            layers,
            edges,
            connect_prob,
        };
        ensure!(
            !topo.source_nodes().is_empty(),
            "topology has no source nodes"
        );
        ensure!(
            !topo.receiver_nodes().is_empty(),
            "topology has no receiver nodes"
        );
        for r in topo.receiver_nodes() {
            ensure!(
                topo.reachable_from_sources()[r],
                "receiver node {r} is unreachable from every source"
            );
        }
        Ok(topo)
    }

    pub fn node_count(&self) -> usize {
        self.layers.len()
    }

    fn nodes_in(&self, layer: Layer) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&v| self.layers[v] == layer)
            .collect()
    }

    pub fn source_nodes(&self) -> Vec<usize> {
        self.nodes_in(Layer::Source)
    }

    pub fn intermediate_nodes(&self) -> Vec<usize> {
        self.nodes_in(Layer::Intermediate)
    }

    pub fn receiver_nodes(&self) -> Vec<usize> {
        self.nodes_in(Layer::Receiver)
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(_, b)| b == v).count()
    }

    fn reachable_from_sources(&self) -> Vec<bool> {
        let mut seen: Vec<bool> = self.layers.iter().map(|&l| l == Layer::Source).collect();
        // Edges are sorted by origin and the layers are ordered, so two
        // forward passes in layer order suffice.
        for rank in 0..2 {
            for &(a, b) in &self.edges {
                if self.layers[a].rank() == rank && seen[a] {
                    seen[b] = true;
                }
            }
        }
        seen
    }

    /// Text form: `#` comment, a `nodes` count line, a `layers` tag line
    /// (`s`/`i`/`r` per node), then one `from to` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        s.push_str("# csnc-topology v1\n");
        s.push_str(&format!(
            "nodes {} sources {} intermediates {} receivers {} connect_prob {:e}\n",
            self.node_count(),
            self.source_nodes().len(),
            self.intermediate_nodes().len(),
            self.receiver_nodes().len(),
            self.connect_prob
        ));
        s.push_str("layers");
        for l in &self.layers {
            s.push(' ');
            s.push(l.tag());
        }
        s.push('\n');
        for &(a, b) in &self.edges {
            s.push_str(&format!("{a} {b}\n"));
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut node_count = None;
        let mut connect_prob = 1.0;
        let mut layers = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Parse(format!("topology line {}: {raw:?}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "nodes" => {
                    node_count = Some(fields.get(1).ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())?);
                    if let Some(pos) = fields.iter().position(|&f| f == "connect_prob") {
                        connect_prob = fields
                            .get(pos + 1)
                            .ok_or_else(bad)?
                            .parse::<f64>()
                            .map_err(|_| bad())?;
                    }
                }
                "layers" => {
                    let tags = fields[1..]
                        .iter()
                        .map(|t| match *t {
                            "s" => Ok(Layer::Source),
                            "i" => Ok(Layer::Intermediate),
                            "r" => Ok(Layer::Receiver),
                            _ => Err(bad()),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    layers = Some(tags);
                }
                _ => {
                    ensure!(fields.len() == 2, "topology line {}: expected `from to`", lineno + 1);
                    let a = fields[0].parse::<usize>().map_err(|_| bad())?;
                    let b = fields[1].parse::<usize>().map_err(|_| bad())?;
                    edges.push((a, b));
                }
            }
        }
        let layers = layers.ok_or_else(|| Error::Parse("topology is missing its layers line".into()))?;
        if let Some(n) = node_count {
            ensure!(n == layers.len(), "node count {n} disagrees with {} layer tags", layers.len());
        }
        NetworkTopology::new(layers, edges, connect_prob)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_edge_list().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        NetworkTopology::from_edge_list(&fs::read_to_string(path)?)
    }
}

/// Sources connect independently to each of `m` intermediates with
/// probability `connect_prob`; every intermediate feeds the receiver stage.
pub fn build_example_topology(
    sources: usize,
    m: usize,
    connect_prob: f64,
    seed: Seed,
) -> Result<NetworkTopology> {
    build_example_topology_with_receivers(sources, m, connect_prob, 1, seed)
}

pub fn build_example_topology_with_receivers(
    sources: usize,
    m: usize,
    connect_prob: f64,
    receivers: usize,
    seed: Seed,
) -> Result<NetworkTopology> {
    ensure!(sources >= 3, "example topology needs N >= 3, got {sources}");
    ensure!(m >= 1, "example topology needs m >= 1");
    ensure!(receivers >= 1, "example topology needs a receiver");
    ensure!(
        connect_prob >= 1.0 / 3.0 && connect_prob <= 1.0,
        "connect probability {connect_prob} must lie in [1/3, 1] (intermediate in-degree >= N/3)"
    );
    let mut layers = vec![Layer::Source; sources];
    layers.extend(std::iter::repeat_n(Layer::Intermediate, m));
    layers.extend(std::iter::repeat_n(Layer::Receiver, receivers));
    let mut rng = seed.rng();
    let mut edges = Vec::new();
    for j in 0..m {
        for i in 0..sources {
            if rng.random::<f64>() < connect_prob {
                edges.push((i, sources + j));
            }
        }
    }
    for r in 0..receivers {
        for j in 0..m {
            edges.push((sources + j, sources + m + r));
        }
    }
    // In-degree zero intermediates are legal; a receiver is unreachable only
    // if no source reached any intermediate, which `new` rejects.
    NetworkTopology::new(layers, edges, connect_prob)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffFamily {
    Rademacher,
    Gaussian,
}

impl FromStr for CoeffFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(CoeffFamily::Rademacher),
            "gaussian" => Ok(CoeffFamily::Gaussian),
            other => Err(Error::InvalidArgument(format!(
                "unknown coefficient family {other:?}"
            ))),
        }
    }
}

impl fmt::Display for CoeffFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoeffFamily::Rademacher => "rademacher",
            CoeffFamily::Gaussian => "gaussian",
        })
    }
}

/// End-to-end map from transmitted source values to one receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    pub g: Mat,
    /// `(G1, G2)` with `G = G2 · G1` when built from a topology.
    pub decomposition: Option<(Mat, Mat)>,
    pub receiver: usize,
}

impl TransferMatrix {
    pub fn m2(&self) -> usize {
        self.g.rows()
    }

    pub fn sources(&self) -> usize {
        self.g.cols()
    }

    /// `‖G − G2 G1‖_F / ‖G‖_F`, zero when there is no decomposition.
    pub fn decomposition_error(&self) -> Result<f64> {
        match &self.decomposition {
            None => Ok(0.0),
            Some((g1, g2)) => {
                let prod = g2.matmul(g1)?;
                Ok(self.g.sub(&prod)?.fro_norm() / self.g.fro_norm().max(f64::MIN_POSITIVE))
            }
        }
    }
}

const G1_TAG: u64 = 0x4731;
const G2_TAG: u64 = 0x4732;

/// Transfer matrix of the first receiver of `topo`.
pub fn derive_transfer_matrix(
    topo: &NetworkTopology,
    m2: usize,
    family: CoeffFamily,
    seed: Seed,
) -> Result<TransferMatrix> {
    derive_receiver_transfer_matrix(topo, 0, m2, family, seed)
}

/// Transfer matrix of receiver `receiver` (an index into the receiver nodes).
///
/// The source-chosen coefficients `G1` depend only on `seed`; the second stage
/// `G2` is drawn on a per-receiver stream, so receivers are independent of each
/// other and of how many there are.
pub fn derive_receiver_transfer_matrix(
    topo: &NetworkTopology,
    receiver: usize,
    m2: usize,
    family: CoeffFamily,
    seed: Seed,
) -> Result<TransferMatrix> {
    let sources = topo.source_nodes();
    let inter = topo.intermediate_nodes();
    let receivers = topo.receiver_nodes();
    let m = inter.len();
    ensure!(m >= 1, "topology has no intermediate nodes");
    ensure!(
        receiver < receivers.len(),
        "receiver index {receiver} out of range ({} receivers)",
        receivers.len()
    );
    ensure!(m2 >= 1, "m2 must be >= 1");
    ensure!(
        m2 <= m,
        "m2={m2} exceeds the {m} combinations the intermediate stage carries"
    );
    let src_pos = |v: usize| sources.binary_search(&v).ok();
    let int_pos = |v: usize| inter.binary_search(&v).ok();

    let mut coeff_rng = seed.derive(G1_TAG).rng();
    let mut g1 = Mat::zeros(m, sources.len());
    for &(a, b) in &topo.edges {
        if let (Some(i), Some(j)) = (src_pos(a), int_pos(b)) {
            g1[(j, i)] = match family {
                CoeffFamily::Rademacher => {
                    if coeff_rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                CoeffFamily::Gaussian => coeff_rng.sample(StandardNormal),
            };
        }
    }
    // Rows of G2 for intermediates that do not feed this receiver stay zero.
    let rnode = receivers[receiver];
    let feeds: Vec<bool> = inter
        .iter()
        .map(|&v| topo.edges.binary_search(&(v, rnode)).is_ok())
        .collect();
    let mut g2 = gaussian_matrix(m2, m, 1.0, seed.derive(G2_TAG).derive(receiver as u64))?;
    for r in 0..m2 {
        for (j, &on) in feeds.iter().enumerate() {
            if !on {
                g2[(r, j)] = 0.0;
            }
        }
    }
    // E‖G e_i‖² = m2 · m · p before scaling.
    let p = if topo.connect_prob > 0.0 {
        topo.connect_prob
    } else {
        1.0
    };
    g2.scale_in_place(1.0 / (m as f64 * p).sqrt());
    let g = g2.matmul(&g1)?;
    Ok(TransferMatrix {
        g,
        decomposition: Some((g1, g2)),
        receiver,
    })
}

/// Direct-mode transfer matrix: i.i.d. `N(0, 1)` entries, no topology.
pub fn direct_transfer_matrix(m2: usize, sources: usize, receiver: usize, seed: Seed) -> Result<TransferMatrix> {
    Ok(TransferMatrix {
        g: gaussian_matrix(m2, sources, 1.0, seed.derive(receiver as u64))?,
        decomposition: None,
        receiver,
    })
}

/// Square identity transfer (test pipelines only).
pub fn identity_transfer_matrix(sources: usize, receiver: usize) -> TransferMatrix {
    TransferMatrix {
        g: Mat::identity(sources),
        decomposition: None,
        receiver,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Noise standard deviation per received component.
    pub sigma: f64,
}

impl ChannelModel {
    pub fn new(sigma: f64) -> Result<Self> {
        ensure!(
            sigma >= 0.0 && sigma.is_finite(),
            "noise sigma must be finite and >= 0, got {sigma}"
        );
        Ok(ChannelModel { sigma })
    }
}

/// `Z = G (B y) + W`.
pub fn transmit(
    tm: &TransferMatrix,
    pat: &OnOffPattern,
    y: &[f64],
    ch: &ChannelModel,
    seed: Seed,
) -> Result<Vec<f64>> {
    ensure!(
        y.len() == tm.sources() && pat.len() == tm.sources(),
        "transmit: transfer matrix has {} columns, y has {}, pattern has {}",
        tm.sources(),
        y.len(),
        pat.len()
    );
    let by = apply_onoff(y, pat)?;
    let mut z = tm.g.matvec(&by)?;
    if ch.sigma > 0.0 {
        let mut rng = seed.rng();
        for v in z.iter_mut() {
            *v += ch.sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(z)
}

/// `C_use = m1 · m2 / m`, exactly.
pub fn network_uses(m1: u64, m2: u64, m: u64) -> Result<Ratio<u64>> {
    ensure!(m >= 1, "network_uses: m must be >= 1");
    Ok(Ratio::new(m1 * m2, m))
}
