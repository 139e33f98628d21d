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

use std::collections::HashMap;

use super::CommunityAssignment;
use crate::error::{Error, Result};

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|c| *c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `2 I(a; b) / (H(a) + H(b))` over the
/// flattened labels. Two constant assignments score 1.
pub fn partition_similarity(a: &CommunityAssignment, b: &CommunityAssignment) -> Result<f64> {
    if a.n_layers() != b.n_layers() || a.n_nodes() != b.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.n_layers(),
            a.n_nodes(),
            b.n_layers(),
            b.n_nodes()
        )));
    }
    // both are canonical, so equality means identical up to relabeling
    if a.labels() == b.labels() {
        return Ok(1.0);
    }
    let total = a.labels().len() as f64;
    let mut ca = vec![0usize; a.n_communities()];
    let mut cb = vec![0usize; b.n_communities()];
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (x, y) in a.labels().iter().zip(b.labels()) {
        ca[*x] += 1;
        cb[*y] += 1;
        *joint.entry((*x, *y)).or_default() += 1;
    }
    let ha = entropy(ca.iter().copied(), total);
    let hb = entropy(cb.iter().copied(), total);
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mut keys: Vec<_> = joint.into_iter().collect();
    keys.sort_unstable();
    let mut mi = 0.0;
    for ((x, y), c) in keys {
        let pxy = c as f64 / total;
        let px = ca[x] as f64 / total;
        let py = cb[y] as f64 / total;
        mi += pxy * (pxy / (px * py)).ln();
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}
