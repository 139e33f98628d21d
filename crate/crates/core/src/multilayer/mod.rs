// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Temporal multilayer networks and their modularity.
//!
//! Layers are coupled ordinally: node `j` in layer `l` is linked to node `j`
//! in layers `l - 1` and `l + 1` with uniform weight ω. The coupling is never
//! materialized as a dense supra-matrix.

mod grid;
pub(crate) mod louvain;
mod similarity;

use serde::{Deserialize, Serialize};

use crate::connectivity::{ConnectivityKind, ConnectivityMatrix, DynamicConnectivity};
use crate::error::{invalid, Error, Result};

pub use grid::{grid_search, grid_search_detailed, GridCell, GridSearchResult};
pub use louvain::{louvain_multilayer, louvain_multilayer_traced, run_ensemble, LouvainTrace};
pub use similarity::partition_similarity;

/// Intra-layer graphs with uniform ordinal inter-layer coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilayerNetwork {
    layers: Vec<ConnectivityMatrix>,
    gamma: f64,
    omega: f64,
}

impl MultilayerNetwork {
    pub fn new(layers: Vec<ConnectivityMatrix>, gamma: f64, omega: f64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| invalid("multilayer network needs at least one layer"))?;
        let n = first.n();
        for (l, a) in layers.iter().enumerate() {
            if a.n() != n {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} has {} nodes, layer 0 has {n}",
                    a.n()
                )));
            }
            if a.values().iter().any(|v| *v < 0.0) {
                return Err(invalid(format!("layer {l} has negative weights")));
            }
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid(format!("gamma {gamma} must be finite and > 0")));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(invalid(format!("omega {omega} must be finite and >= 0")));
        }
        Ok(Self {
            layers,
            gamma,
            omega,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.layers[0].n()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn layers(&self) -> &[ConnectivityMatrix] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &ConnectivityMatrix {
        &self.layers[l]
    }

    /// Inter-layer coupling between `(node, l)` and `(node, r)`.
    pub fn coupling(&self, l: usize, r: usize) -> f64 {
        if l.abs_diff(r) == 1 {
            self.omega
        } else {
            0.0
        }
    }

    /// Number of inter-layer links attached to each node in layer `l`.
    pub fn coupling_degree(&self, l: usize) -> usize {
        let t = self.n_layers();
        usize::from(l > 0) + usize::from(l + 1 < t)
    }

    /// Number of supra-nodes (node-layer pairs).
    pub fn supra_dimension(&self) -> usize {
        self.n_layers() * self.n_nodes()
    }
}

/// Copy the windowed layers into a multilayer network with resolution γ and
/// coupling ω.
pub fn build_supra(dfc: &DynamicConnectivity, gamma: f64, omega: f64) -> Result<MultilayerNetwork> {
    dfc.validate()?;
    if dfc.layers[0].kind() != ConnectivityKind::FisherZPositive {
        return Err(invalid("multilayer layers must be positive-part Fisher z"));
    }
    MultilayerNetwork::new(dfc.layers.clone(), gamma, omega)
}

/// Community label per node-layer pair, stored layer-major.
///
/// Labels are always canonical: ids are dense and numbered in order of first
/// appearance over the layer-major traversal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommunityAssignment {
    n_layers: usize,
    n_nodes: usize,
    labels: Vec<usize>,
}

impl CommunityAssignment {
    pub fn new(n_layers: usize, n_nodes: usize, labels: Vec<usize>) -> Result<Self> {
        if n_layers == 0 || n_nodes == 0 {
            return Err(invalid("community assignment needs at least one layer and one node"));
        }
        if labels.len() != n_layers * n_nodes {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {n_layers} layers x {n_nodes} nodes",
                labels.len()
            )));
        }
        Ok(Self {
            n_layers,
            n_nodes,
            labels: canonicalize(&labels),
        })
    }

    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let n_nodes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_nodes) {
            return Err(Error::ShapeMismatch("ragged assignment rows".into()));
        }
        Self::new(rows.len(), n_nodes, rows.concat())
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn get(&self, layer: usize, node: usize) -> usize {
        self.labels[layer * self.n_nodes + node]
    }

    pub fn layer(&self, layer: usize) -> &[usize] {
        &self.labels[layer * self.n_nodes..(layer + 1) * self.n_nodes]
    }

    /// Flattened layer-major labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_communities(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Relabel to dense ids in first-appearance order.
pub(crate) fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Hyperparameters for an ensemble of optimizer runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModularityParams {
    pub gamma: f64,
    pub omega: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl ModularityParams {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(invalid("restarts must be >= 1"));
        }
        Ok(())
    }
}

/// Per-layer weighted degrees `k_il` and layer totals `2 m_l = Σ_i k_il`.
pub(crate) fn layer_strengths(ml: &MultilayerNetwork) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = ml.n_nodes();
    let mut degrees = Vec::with_capacity(ml.n_layers());
    let mut two_m = Vec::with_capacity(ml.n_layers());
    for (l, a) in ml.layers().iter().enumerate() {
        let k: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
        let total: f64 = k.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyLayer(l));
        }
        degrees.push(k);
        two_m.push(total);
    }
    Ok((degrees, two_m))
}

/// Multilayer modularity Q_M of an assignment.
///
/// `2 m_l` is the sum of weighted degrees in layer `l` and
/// `2μ = Σ_jr (k_jr + c_jr)` with `c_jr` the node's total inter-layer coupling.
pub fn multilayer_modularity(ml: &MultilayerNetwork, ca: &CommunityAssignment) -> Result<f64> {
    if ca.n_layers() != ml.n_layers() || ca.n_nodes() != ml.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "assignment {}x{} against network {}x{}",
            ca.n_layers(),
            ca.n_nodes(),
            ml.n_layers(),
            ml.n_nodes()
        )));
    }
    let (degrees, two_m) = layer_strengths(ml)?;
    let n = ml.n_nodes();
    let t = ml.n_layers();
    let k_max = ca.n_communities();

    let mut total = 0.0;
    let mut community_strength = vec![0.0; k_max];
    for l in 0..t {
        let a = ml.layer(l);
        let g = ca.layer(l);
        community_strength.iter_mut().for_each(|v| *v = 0.0);
        let mut within = 0.0;
        for i in 0..n {
            community_strength[g[i]] += degrees[l][i];
            let row = a.row(i);
            for j in 0..n {
                if g[i] == g[j] {
                    within += row[j];
                }
            }
        }
        let null: f64 = community_strength.iter().map(|s| s * s).sum::<f64>() / two_m[l];
        total += within - ml.gamma() * null;
    }
    let mut coupling = 0.0;
    for l in 0..t.saturating_sub(1) {
        for j in 0..n {
            if ca.get(l, j) == ca.get(l + 1, j) {
                // both (l, l+1) and (l+1, l) terms
                coupling += 2.0 * ml.omega();
            }
        }
    }
    let two_mu: f64 = two_m.iter().sum::<f64>()
        + (0..t)
            .map(|l| (n * ml.coupling_degree(l)) as f64 * ml.omega())
            .sum::<f64>();
    Ok((total + coupling) / two_mu)
}
