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

//! Permutation nulls for normalizing dynamic measures.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_shapes, measure_layout, measure_vector, MeasureKind, MeasureTable, SystemPartition, Target};
use crate::connectivity::{ConnectivityKind, ConnectivityMatrix};
use crate::error::{invalid, Result};
use crate::multilayer::{louvain_multilayer, CommunityAssignment, MultilayerNetwork};
use crate::seed;

/// Null-distribution mean of every (measure, target) slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullMeans {
    pub slots: Vec<(MeasureKind, Target)>,
    pub means: Vec<f64>,
    pub n_perm: usize,
}

impl NullMeans {
    pub fn get(&self, kind: MeasureKind, target: Target) -> Option<f64> {
        self.slots
            .iter()
            .position(|s| *s == (kind, target))
            .map(|k| self.means[k])
    }
}

fn permute_layers(ca: &CommunityAssignment, rng: &mut seed::Rng) -> CommunityAssignment {
    let n = ca.n_nodes();
    let mut labels = Vec::with_capacity(ca.labels().len());
    let mut perm: Vec<usize> = (0..n).collect();
    for l in 0..ca.n_layers() {
        perm.shuffle(rng);
        let g = ca.layer(l);
        labels.extend(perm.iter().map(|p| g[*p]));
    }
    CommunityAssignment::new(ca.n_layers(), n, labels).expect("same shape")
}

fn mean_of(samples: Vec<Vec<f64>>) -> Vec<f64> {
    let count = samples.len() as f64;
    let mut sum = vec![0.0; samples[0].len()];
    for v in &samples {
        sum.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    sum.into_iter().map(|s| s / count).collect()
}

/// Null means from relabeling region identities independently within every
/// layer. Permutation `k` uses run `k mod runs` and its own seeded generator.
pub fn permutation_null(
    cas: &[CommunityAssignment],
    sys: &SystemPartition,
    n_perm: usize,
    seed: u64,
) -> Result<NullMeans> {
    if n_perm == 0 {
        return Err(invalid("n_perm must be >= 1"));
    }
    check_shapes(cas, sys)?;
    let samples: Vec<Vec<f64>> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::child_rng(seed, k as u64);
            let permuted = permute_layers(&cas[k % cas.len()], &mut rng);
            measure_vector(&permuted, sys)
        })
        .collect::<Result<_>>()?;
    Ok(NullMeans {
        slots: measure_layout(sys),
        means: mean_of(samples),
        n_perm,
    })
}

fn permute_matrix(a: &ConnectivityMatrix, perm: &[usize]) -> ConnectivityMatrix {
    let n = a.n();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = a.get(perm[i], perm[j]);
        }
    }
    ConnectivityMatrix::from_dense(n, values, ConnectivityKind::FisherZPositive).expect("permuted copy is valid")
}

/// Null means from re-running detection on networks whose region identities
/// are permuted independently in every layer; one optimizer run per
/// permutation.
pub fn permutation_null_redetect(
    ml: &MultilayerNetwork,
    sys: &SystemPartition,
    n_perm: usize,
    seed: u64,
) -> Result<NullMeans> {
    if n_perm == 0 {
        return Err(invalid("n_perm must be >= 1"));
    }
    sys.check(ml.n_nodes())?;
    let samples: Vec<Vec<f64>> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::child_rng(seed, k as u64);
            let mut perm: Vec<usize> = (0..ml.n_nodes()).collect();
            let layers = ml
                .layers()
                .iter()
                .map(|a| {
                    perm.shuffle(&mut rng);
                    permute_matrix(a, &perm)
                })
                .collect();
            let shuffled = MultilayerNetwork::new(layers, ml.gamma(), ml.omega())?;
            let (ca, _) = louvain_multilayer(&shuffled, seed::derive(seed, (k as u64) | 1 << 63))?;
            measure_vector(&ca, sys)
        })
        .collect::<Result<_>>()?;
    Ok(NullMeans {
        slots: measure_layout(sys),
        means: mean_of(samples),
        n_perm,
    })
}

/// Fill `normalized = raw / null mean`; slots with a zero null mean stay
/// `None` (see [`MeasureTable::normalization_errors`]).
pub fn normalize(raw: &MeasureTable, null: &NullMeans) -> Result<MeasureTable> {
    if raw.entries.len() != null.means.len() {
        return Err(crate::error::Error::ShapeMismatch(format!(
            "{} raw entries against {} null slots",
            raw.entries.len(),
            null.means.len()
        )));
    }
    let entries = raw
        .entries
        .iter()
        .zip(null.slots.iter().zip(&null.means))
        .map(|(e, (slot, mean))| {
            debug_assert_eq!((e.kind, e.target), *slot);
            let mut out = e.clone();
            out.normalized = if *mean > 0.0 { Some(e.raw / mean) } else { None };
            out
        })
        .collect();
    Ok(MeasureTable { entries })
}
