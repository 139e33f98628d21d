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

//! Single-layer Newman modularity, density thresholding and density sweeps.

use serde::{Deserialize, Serialize};

use crate::connectivity::ConnectivityMatrix;
use crate::error::{invalid, Error, Result};
use crate::multilayer::{self, MultilayerNetwork};
use crate::seed;

/// Static community labels, dense ids `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    /// Any labels are accepted and renumbered in first-appearance order.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(invalid("partition needs at least one node"));
        }
        Ok(Self {
            labels: multilayer::canonicalize(&labels),
        })
    }

    pub fn single(n: usize) -> Self {
        Self { labels: vec![0; n] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_communities(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Best modularity at each edge density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub densities: Vec<f64>,
    pub q_values: Vec<f64>,
}

impl DensityCurve {
    /// Mean Q over the listed densities (matched to within 1e-9).
    pub fn mean_over(&self, subset: &[f64]) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::EmptyInput("density subset".into()));
        }
        let mut total = 0.0;
        for d in subset {
            let k = self
                .densities
                .iter()
                .position(|x| (x - d).abs() < 1e-9)
                .ok_or_else(|| invalid(format!("density {d} is not on the curve")))?;
            total += self.q_values[k];
        }
        Ok(total / subset.len() as f64)
    }

    pub fn mean(&self) -> f64 {
        self.q_values.iter().sum::<f64>() / self.q_values.len() as f64
    }
}

/// `⌈density · n_pairs⌉`, guarding against products like 3.0000000004.
pub fn retained_pairs(n: usize, density: f64) -> usize {
    let n_pairs = n * (n - 1) / 2;
    ((density * n_pairs as f64 - 1e-9).ceil().max(0.0) as usize).min(n_pairs)
}

/// Keep the strongest `⌈density · n(n−1)/2⌉` off-diagonal pairs with their
/// weights; ties at the cutoff go to the lexicographically smaller pair.
pub fn threshold_by_density(c: &ConnectivityMatrix, density: f64) -> Result<ConnectivityMatrix> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(invalid(format!("density {density} must lie in (0, 1]")));
    }
    let n = c.n();
    if c.values().iter().all(|v| *v == 0.0) {
        return Err(Error::EmptyGraph);
    }
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    // stable sort keeps lexicographic order among equal weights
    pairs.sort_by(|a, b| c.get(b.0, b.1).total_cmp(&c.get(a.0, a.1)));
    let keep = retained_pairs(n, density);
    let mut values = vec![0.0; n * n];
    for &(i, j) in &pairs[..keep] {
        values[i * n + j] = c.get(i, j);
        values[j * n + i] = c.get(i, j);
    }
    ConnectivityMatrix::from_dense(n, values, c.kind())
}

/// Newman modularity `Q = (1/2m) Σ_ij [w_ij − γ k_i k_j / 2m] δ(p_i, p_j)`.
pub fn newman_modularity(w: &ConnectivityMatrix, p: &Partition, gamma: f64) -> Result<f64> {
    let n = w.n();
    if p.len() != n {
        return Err(Error::ShapeMismatch(format!("partition of {} for {n} nodes", p.len())));
    }
    if w.values().iter().any(|v| *v < 0.0) {
        return Err(invalid("newman modularity needs non-negative weights"));
    }
    let labels = p.labels();
    let degree: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
    let two_m: f64 = degree.iter().sum();
    if !(two_m > 0.0) {
        return Err(Error::EmptyGraph);
    }
    let mut within = 0.0;
    let mut strength = vec![0.0; p.n_communities()];
    for i in 0..n {
        strength[labels[i]] += degree[i];
        for j in 0..n {
            if labels[i] == labels[j] {
                within += w.get(i, j);
            }
        }
    }
    let null: f64 = strength.iter().map(|s| s * s).sum::<f64>() / two_m;
    Ok((within - gamma * null) / two_m)
}

/// `Q⁺ − Q⁻`: Newman Q (γ = 1) on the positive part minus Newman Q on the
/// magnitude of the negative part, each with its own normalization. An empty
/// part contributes zero.
pub fn signed_modularity(w: &ConnectivityMatrix, p: &Partition) -> Result<f64> {
    let n = w.n();
    let kind = crate::connectivity::ConnectivityKind::FisherZPositive;
    let pos = ConnectivityMatrix::from_dense(n, w.values().iter().map(|v| v.max(0.0)).collect(), kind)?;
    let neg = ConnectivityMatrix::from_dense(n, w.values().iter().map(|v| (-v).max(0.0)).collect(), kind)?;
    let part = |m: &ConnectivityMatrix| -> Result<Option<f64>> {
        match newman_modularity(m, p, 1.0) {
            Ok(q) => Ok(Some(q)),
            Err(Error::EmptyGraph) => Ok(None),
            Err(e) => Err(e),
        }
    };
    match (part(&pos)?, part(&neg)?) {
        (None, None) => Err(Error::EmptyGraph),
        (qp, qn) => Ok(qp.unwrap_or(0.0) - qn.unwrap_or(0.0)),
    }
}

fn single_layer(w: &ConnectivityMatrix, gamma: f64) -> Result<MultilayerNetwork> {
    if w.values().iter().all(|v| *v == 0.0) {
        return Err(Error::EmptyGraph);
    }
    MultilayerNetwork::new(vec![w.clone()], gamma, 0.0)
}

fn to_partition(ca: &multilayer::CommunityAssignment) -> Partition {
    Partition {
        labels: ca.layer(0).to_vec(),
    }
}

/// One seeded Louvain run on a single graph.
pub fn optimize_static_partition(w: &ConnectivityMatrix, gamma: f64, rng_seed: u64) -> Result<(Partition, f64)> {
    let ml = single_layer(w, gamma)?;
    let (ca, q) = multilayer::louvain_multilayer(&ml, rng_seed)?;
    Ok((to_partition(&ca), q))
}

/// Best of `restarts` runs (run `r` seeded by `derive(seed, r)`), ties to the
/// lowest run index.
pub fn optimize_static_best(
    w: &ConnectivityMatrix,
    gamma: f64,
    restarts: usize,
    seed: u64,
) -> Result<(Partition, f64)> {
    if restarts == 0 {
        return Err(invalid("restarts must be >= 1"));
    }
    let ml = single_layer(w, gamma)?;
    let (ca, q) = multilayer::louvain::best_of(&ml, restarts, seed)?;
    Ok((to_partition(&ca), q))
}

/// Best Q at each density; density `d` uses seed `derive(seed, index of d)`.
pub fn modularity_density_sweep(
    c: &ConnectivityMatrix,
    densities: &[f64],
    gamma: f64,
    rng_seed: u64,
    restarts: usize,
) -> Result<DensityCurve> {
    if densities.is_empty() {
        return Err(Error::EmptyInput("density list".into()));
    }
    if densities.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("densities must be strictly increasing"));
    }
    let mut q_values = Vec::with_capacity(densities.len());
    for (k, d) in densities.iter().enumerate() {
        let thresholded = threshold_by_density(c, *d)?;
        let (_, q) = optimize_static_best(&thresholded, gamma, restarts, seed::derive(rng_seed, k as u64))?;
        q_values.push(q);
    }
    Ok(DensityCurve {
        densities: densities.to_vec(),
        q_values,
    })
}

/// The default sweep: 0.04, 0.05, ..., 0.20.
pub fn default_densities() -> Vec<f64> {
    (4..=20).map(|p| p as f64 / 100.0).collect()
}
