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

//! Louvain-style optimizer for multilayer modularity.
//!
//! Each level alternates greedy single-node moves (in a seeded random order)
//! with aggregation of communities into super-nodes. Super-nodes keep a sparse
//! per-layer strength vector so the layer-local null model survives
//! aggregation.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{canonicalize, layer_strengths, CommunityAssignment, ModularityParams, MultilayerNetwork};
use crate::error::Result;
use crate::seed;

/// Moves must raise Q_M by more than this.
const MIN_GAIN: f64 = 1e-12;

/// How a node picks among communities that raise Q_M.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MoveRule {
    /// Largest gain.
    Greedy,
    /// Random choice weighted by gain.
    Weighted,
}

/// Q_M after the initial singleton state and after every move phase.
#[derive(Debug, Clone, PartialEq)]
pub struct LouvainTrace {
    pub phases: Vec<f64>,
    /// Q_M of each aggregated network evaluated at its singleton assignment,
    /// paired with the phase value it should reproduce.
    pub aggregation_checks: Vec<(f64, f64)>,
}

/// One level of the hierarchy in CSR form.
#[derive(Debug, Clone)]
pub(crate) struct Level {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    /// Internal weight summed over ordered member pairs.
    self_weight: Vec<f64>,
    strength_offsets: Vec<usize>,
    strength_layers: Vec<usize>,
    strength_values: Vec<f64>,
}

impl Level {
    fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    fn strengths(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.strength_offsets[u]..self.strength_offsets[u + 1];
        self.strength_layers[range.clone()]
            .iter()
            .copied()
            .zip(self.strength_values[range].iter().copied())
    }
}

/// Constants shared by every level of one network.
#[derive(Debug, Clone)]
pub(crate) struct Objective {
    n_layers: usize,
    /// γ / (2 m_l) per layer.
    null_scale: Vec<f64>,
    two_mu: f64,
}

pub(crate) fn base_level(ml: &MultilayerNetwork) -> Result<(Level, Objective)> {
    let (degrees, two_m) = layer_strengths(ml)?;
    let n = ml.n_nodes();
    let t = ml.n_layers();
    let omega = ml.omega();
    let total = n * t;

    let mut offsets = Vec::with_capacity(total + 1);
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for l in 0..t {
        let a = ml.layer(l);
        for i in 0..n {
            if omega > 0.0 && l > 0 {
                targets.push((l - 1) * n + i);
                weights.push(omega);
            }
            for (j, w) in a.row(i).iter().enumerate() {
                if j != i && *w > 0.0 {
                    targets.push(l * n + j);
                    weights.push(*w);
                }
            }
            if omega > 0.0 && l + 1 < t {
                targets.push((l + 1) * n + i);
                weights.push(omega);
            }
            offsets.push(targets.len());
        }
    }
    let strength_offsets = (0..=total).collect();
    let strength_layers = (0..total).map(|u| u / n).collect();
    let strength_values = (0..total).map(|u| degrees[u / n][u % n]).collect();
    let two_mu = weights.iter().sum();
    let null_scale = two_m.iter().map(|m| ml.gamma() / m).collect();
    Ok((
        Level {
            n: total,
            offsets,
            targets,
            weights,
            self_weight: vec![0.0; total],
            strength_offsets,
            strength_layers,
            strength_values,
        },
        Objective {
            n_layers: t,
            null_scale,
            two_mu,
        },
    ))
}

/// Q_M of `community` (indexed by level node) on this level.
pub(crate) fn level_quality(level: &Level, obj: &Objective, community: &[usize]) -> f64 {
    let k = community.iter().max().map_or(0, |m| m + 1);
    let mut internal = 0.0;
    let mut strength = vec![0.0; k * obj.n_layers];
    for u in 0..level.n {
        let c = community[u];
        internal += level.self_weight[u];
        for (v, w) in level.neighbors(u) {
            if community[v] == c {
                internal += w;
            }
        }
        for (l, s) in level.strengths(u) {
            strength[c * obj.n_layers + l] += s;
        }
    }
    let mut null = 0.0;
    for c in 0..k {
        for l in 0..obj.n_layers {
            let s = strength[c * obj.n_layers + l];
            null += obj.null_scale[l] * s * s;
        }
    }
    (internal - null) / obj.two_mu
}

/// Community strength per layer, `values[c * t + l]`, sized for the base
/// network once per run. Only touched entries are reset between uses.
struct Strengths {
    t: usize,
    values: Vec<f64>,
    dirty: Vec<usize>,
}

impl Strengths {
    fn new(n: usize, t: usize) -> Self {
        Strengths {
            t,
            values: vec![0.0; n * t],
            dirty: Vec::new(),
        }
    }

    fn get(&self, c: usize, l: usize) -> f64 {
        self.values[c * self.t + l]
    }

    fn add(&mut self, c: usize, l: usize, v: f64) {
        let i = c * self.t + l;
        if self.values[i] == 0.0 {
            self.dirty.push(i);
        }
        self.values[i] += v;
    }

    fn clear(&mut self) {
        for i in self.dirty.drain(..) {
            self.values[i] = 0.0;
        }
    }
}

/// Greedy local moves from `community` (labels below `level.n`) until a full
/// pass makes no move. Returns the community of each level node (not yet
/// renumbered) and whether anything moved.
fn local_moves(
    level: &Level,
    obj: &Objective,
    rule: MoveRule,
    rng: &mut seed::Rng,
    strength: &mut Strengths,
    mut community: Vec<usize>,
) -> (Vec<usize>, bool) {
    let n = level.n;
    let mut size = vec![0usize; n];
    strength.clear();
    for u in 0..n {
        size[community[u]] += 1;
        for (l, s) in level.strengths(u) {
            strength.add(community[u], l, s);
        }
    }
    let mut free: Vec<usize> = (0..n).rev().filter(|c| size[*c] == 0).collect();
    let mut link = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut gains: Vec<(usize, f64)> = Vec::new();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let gain_threshold = MIN_GAIN * obj.two_mu / 2.0;
    let mut any_move = false;
    // a node is revisited when a neighbor moves; every round ends with a
    // full sweep that must make no move
    let mut queue: VecDeque<usize> = VecDeque::with_capacity(n);
    let mut queued = vec![false; n];
    loop {
        let mut moved = false;
        queue.extend(order.iter().copied());
        queued.fill(true);
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for (v, w) in level.neighbors(u) {
                let c = community[v];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            let home = community[u];
            for (l, s) in level.strengths(u) {
                strength.add(home, l, -s);
            }
            size[home] -= 1;

            let score = |c: usize, link_c: f64| -> f64 {
                let mut null = 0.0;
                for (l, s) in level.strengths(u) {
                    null += obj.null_scale[l] * s * strength.get(c, l);
                }
                link_c - null
            };
            let home_score = score(home, link[home]);
            let mut best = home;
            let mut best_score = home_score;
            gains.clear();
            for &c in &touched {
                if c == home {
                    continue;
                }
                let s = score(c, link[c]);
                if s - home_score > gain_threshold {
                    gains.push((c, s));
                }
                if s > best_score {
                    best = c;
                    best_score = s;
                }
            }
            // an empty community scores exactly zero
            if size[home] > 0 && -home_score > gain_threshold {
                gains.push((*free.last().expect("an empty community slot exists"), 0.0));
            }
            if size[home] > 0 && best_score < 0.0 {
                best = *free.last().expect("an empty community slot exists");
                best_score = 0.0;
            }
            if rule == MoveRule::Weighted && gains.len() > 1 {
                let total: f64 = gains.iter().map(|(_, s)| s - home_score).sum();
                let mut x = rng.random::<f64>() * total;
                for &(c, s) in &gains {
                    best = c;
                    best_score = s;
                    x -= s - home_score;
                    if x <= 0.0 {
                        break;
                    }
                }
            }

            let target = if best != home && best_score - home_score > gain_threshold {
                best
            } else {
                home
            };
            if target != home {
                moved = true;
                for (v, _) in level.neighbors(u) {
                    if !queued[v] && community[v] != target {
                        queued[v] = true;
                        queue.push_back(v);
                    }
                }
                if size[target] == 0 {
                    let pos = free.iter().rposition(|c| *c == target).expect("slot is free");
                    free.swap_remove(pos);
                }
                if size[home] == 0 {
                    free.push(home);
                }
            }
            community[u] = target;
            size[target] += 1;
            for (l, s) in level.strengths(u) {
                strength.add(target, l, s);
            }

            for &c in &touched {
                link[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
        any_move = true;
    }
    (community, any_move)
}

/// Collapse each community into one node.
fn aggregate(level: &Level, obj: &Objective, community: &[usize], k: usize) -> Level {
    let t = obj.n_layers;
    // members of community c are order[start[c]..start[c + 1]]
    let mut start = vec![0usize; k + 1];
    for c in community {
        start[c + 1] += 1;
    }
    for c in 0..k {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut order = vec![0usize; community.len()];
    for (u, c) in community.iter().enumerate() {
        order[fill[*c]] = u;
        fill[*c] += 1;
    }
    let mut offsets = Vec::with_capacity(k + 1);
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    let mut self_weight = vec![0.0; k];
    let mut strength_offsets = Vec::with_capacity(k + 1);
    let mut strength_layers = Vec::new();
    let mut strength_values = Vec::new();
    offsets.push(0);
    strength_offsets.push(0);

    let mut acc = vec![0.0; k];
    let mut seen = vec![false; k];
    let mut touched = Vec::new();
    let mut layer_acc = vec![0.0; t];
    let mut layer_seen = vec![false; t];
    let mut layer_touched = Vec::new();

    for c in 0..k {
        for &u in &order[start[c]..start[c + 1]] {
            self_weight[c] += level.self_weight[u];
            for (v, w) in level.neighbors(u) {
                let d = community[v];
                if d == c {
                    self_weight[c] += w;
                } else {
                    if !seen[d] {
                        seen[d] = true;
                        touched.push(d);
                    }
                    acc[d] += w;
                }
            }
            for (l, s) in level.strengths(u) {
                if !layer_seen[l] {
                    layer_seen[l] = true;
                    layer_touched.push(l);
                }
                layer_acc[l] += s;
            }
        }
        touched.sort_unstable();
        for &d in &touched {
            targets.push(d);
            weights.push(acc[d]);
            acc[d] = 0.0;
            seen[d] = false;
        }
        touched.clear();
        offsets.push(targets.len());

        layer_touched.sort_unstable();
        for &l in &layer_touched {
            strength_layers.push(l);
            strength_values.push(layer_acc[l]);
            layer_acc[l] = 0.0;
            layer_seen[l] = false;
        }
        layer_touched.clear();
        strength_offsets.push(strength_layers.len());
    }
    Level {
        n: k,
        offsets,
        targets,
        weights,
        self_weight,
        strength_offsets,
        strength_layers,
        strength_values,
    }
}

/// Renumber communities densely in order of first appearance by node index.
fn renumber(community: &[usize]) -> (Vec<usize>, usize) {
    let relabeled = canonicalize(community);
    let k = relabeled.iter().max().map_or(0, |m| m + 1);
    (relabeled, k)
}

pub(crate) fn optimize(
    base: &Level,
    obj: &Objective,
    rule: MoveRule,
    seed: u64,
    traced: bool,
) -> (Vec<usize>, f64, LouvainTrace) {
    let mut rng = seed::rng(seed);
    let mut strength = Strengths::new(base.n, obj.n_layers);
    // None while working on the base network
    let mut coarse: Option<Level> = None;
    // base node -> node of the current level
    let mut membership: Vec<usize> = (0..base.n).collect();
    let mut community: Vec<usize> = (0..base.n).collect();
    let mut trace = LouvainTrace {
        phases: Vec::new(),
        aggregation_checks: Vec::new(),
    };
    if traced {
        trace.phases.push(level_quality(base, obj, &community));
    }
    let mut revisit = false;
    loop {
        let level = coarse.as_ref().unwrap_or(base);
        let (moved_to, moved) = local_moves(level, obj, rule, &mut rng, &mut strength, community);
        let (part, k) = renumber(&moved_to);
        if moved && traced {
            trace.phases.push(level_quality(level, obj, &part));
        }
        if revisit && !moved {
            membership = part;
            break;
        }
        if k == level.n {
            let full: Vec<usize> = membership.iter().map(|m| part[*m]).collect();
            if coarse.is_none() {
                membership = full;
                break;
            }
            // single-node moves on the base network can still improve a
            // converged hierarchy
            coarse = None;
            community = full;
            membership = (0..base.n).collect();
            revisit = true;
            continue;
        }
        revisit = false;
        let (refined, r) = renumber(&refine(level, obj, rule, &mut rng, &mut strength, &part));
        let (groups, n_groups) = if r == level.n { (part.clone(), k) } else { (refined, r) };
        let mut start = vec![0; n_groups];
        for (u, g) in groups.iter().enumerate() {
            start[*g] = part[u];
        }
        let next = aggregate(level, obj, &groups, n_groups);
        if traced {
            let q = level_quality(level, obj, &part);
            trace.aggregation_checks.push((level_quality(&next, obj, &start), q));
        }
        for m in membership.iter_mut() {
            *m = groups[*m];
        }
        coarse = Some(next);
        community = start;
    }
    let quality = level_quality(base, obj, &membership);
    (membership, quality, trace)
}

/// Split each community of `part` into well-linked pieces: one pass in which
/// every node still alone merges into a piece of its own community when
/// that raises Q_M.
fn refine(
    level: &Level,
    obj: &Objective,
    rule: MoveRule,
    rng: &mut seed::Rng,
    strength: &mut Strengths,
    part: &[usize],
) -> Vec<usize> {
    let n = level.n;
    let mut refined: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    strength.clear();
    for u in 0..n {
        for (l, s) in level.strengths(u) {
            strength.add(u, l, s);
        }
    }
    let mut link = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut gains: Vec<(usize, f64)> = Vec::new();
    let gain_threshold = MIN_GAIN * obj.two_mu / 2.0;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for &u in &order {
        let home = refined[u];
        if size[home] != 1 {
            continue;
        }
        for (v, w) in level.neighbors(u) {
            if part[v] != part[u] {
                continue;
            }
            let c = refined[v];
            if c == home {
                continue;
            }
            if !seen[c] {
                seen[c] = true;
                touched.push(c);
            }
            link[c] += w;
        }
        gains.clear();
        for &c in &touched {
            let mut null = 0.0;
            for (l, s) in level.strengths(u) {
                null += obj.null_scale[l] * s * strength.get(c, l);
            }
            let g = link[c] - null;
            if g > gain_threshold {
                gains.push((c, g));
            }
            link[c] = 0.0;
            seen[c] = false;
        }
        touched.clear();
        let pick = match rule {
            _ if gains.is_empty() => None,
            MoveRule::Greedy => gains
                .iter()
                .fold(None, |b: Option<(usize, f64)>, &(c, g)| match b {
                    Some((_, bg)) if bg >= g => b,
                    _ => Some((c, g)),
                })
                .map(|(c, _)| c),
            MoveRule::Weighted => {
                let total: f64 = gains.iter().map(|(_, g)| g).sum();
                let mut x = rng.random::<f64>() * total;
                let mut chosen = gains[gains.len() - 1].0;
                for &(c, g) in &gains {
                    x -= g;
                    if x <= 0.0 {
                        chosen = c;
                        break;
                    }
                }
                Some(chosen)
            }
        };
        if let Some(c) = pick {
            refined[u] = c;
            size[home] = 0;
            size[c] += 1;
            for (l, s) in level.strengths(u) {
                strength.add(home, l, -s);
                strength.add(c, l, s);
            }
        }
    }
    refined
}

/// One optimizer run. Returns the canonical assignment and its Q_M.
pub fn louvain_multilayer(ml: &MultilayerNetwork, seed: u64) -> Result<(CommunityAssignment, f64)> {
    let (ca, q, _) = louvain_multilayer_traced(ml, seed)?;
    Ok((ca, q))
}

/// Like [`louvain_multilayer`], also returning the per-phase Q_M trace.
pub fn louvain_multilayer_traced(
    ml: &MultilayerNetwork,
    seed: u64,
) -> Result<(CommunityAssignment, f64, LouvainTrace)> {
    let (level, obj) = base_level(ml)?;
    let (membership, q, trace) = optimize(&level, &obj, MoveRule::Greedy, seed, true);
    let ca = CommunityAssignment::new(ml.n_layers(), ml.n_nodes(), membership)?;
    Ok((ca, q, trace))
}

/// `params.restarts` independent runs; run `r` is seeded with
/// `derive(params.seed, r)`. Output is ordered by run index.
pub fn run_ensemble(ml: &MultilayerNetwork, params: &ModularityParams) -> Result<Vec<CommunityAssignment>> {
    params.validate()?;
    let (level, obj) = base_level(ml)?;
    let runs: Vec<Vec<usize>> = (0..params.restarts)
        .into_par_iter()
        .map(|r| optimize(&level, &obj, MoveRule::Greedy, seed::derive(params.seed, r as u64), false).0)
        .collect();
    runs.into_iter()
        .map(|m| CommunityAssignment::new(ml.n_layers(), ml.n_nodes(), m))
        .collect()
}

/// Best of `restarts` runs by Q_M; ties go to the lowest run index.
pub(crate) fn best_of(ml: &MultilayerNetwork, restarts: usize, seed: u64) -> Result<(CommunityAssignment, f64)> {
    let (level, obj) = base_level(ml)?;
    let runs: Vec<(Vec<usize>, f64)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let rule = if r == 0 { MoveRule::Greedy } else { MoveRule::Weighted };
            let (m, q, _) = optimize(&level, &obj, rule, seed::derive(seed, r as u64), false);
            (m, q)
        })
        .collect();
    let mut best = 0;
    for (i, (_, q)) in runs.iter().enumerate() {
        if *q > runs[best].1 {
            best = i;
        }
    }
    let (m, q) = runs.into_iter().nth(best).expect("at least one run");
    Ok((CommunityAssignment::new(ml.n_layers(), ml.n_nodes(), m)?, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{ConnectivityKind, ConnectivityMatrix};
    use crate::multilayer::{multilayer_modularity, partition_similarity};
    use rand::{Rng, SeedableRng};

    fn random_layer(n: usize, rng: &mut impl Rng) -> ConnectivityMatrix {
        let upper: Vec<f64> = (0..n * (n - 1) / 2)
            .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() })
            .collect();
        ConnectivityMatrix::from_upper(n, &upper, ConnectivityKind::FisherZPositive).unwrap()
    }

    fn planted_layer(blocks: &[usize]) -> ConnectivityMatrix {
        let n = blocks.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i * n + j] = if blocks[i] == blocks[j] { 1.0 } else { 0.05 };
                }
            }
        }
        ConnectivityMatrix::from_dense(n, values, ConnectivityKind::FisherZPositive).unwrap()
    }

    #[test]
    fn phases_are_monotone_and_aggregation_preserves_quality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let layers = (0..4).map(|_| random_layer(10, &mut rng)).collect();
            let ml = MultilayerNetwork::new(layers, 1.0, 0.3).unwrap();
            let (ca, q, trace) = louvain_multilayer_traced(&ml, case).unwrap();
            for w in trace.phases.windows(2) {
                assert!(w[1] >= w[0] - 1e-15, "phase decreased: {:?}", trace.phases);
            }
            for (agg, orig) in &trace.aggregation_checks {
                assert!((agg - orig).abs() < 1e-10);
            }
            let direct = multilayer_modularity(&ml, &ca).unwrap();
            assert!((q - direct).abs() < 1e-10, "{q} vs {direct}");
        }
    }

    #[test]
    fn planted_stable_structure_is_recovered() {
        let blocks = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
        let layers = vec![planted_layer(&blocks); 6];
        let ml = MultilayerNetwork::new(layers, 1.0, 1.0).unwrap();
        let planted: Vec<usize> = (0..6).flat_map(|_| blocks).collect();
        let planted = CommunityAssignment::new(6, 12, planted).unwrap();
        for s in 0..10 {
            let (ca, _) = louvain_multilayer(&ml, s).unwrap();
            assert_eq!(ca, planted);
        }
    }

    #[test]
    fn ensemble_is_deterministic_and_ordered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let layers = (0..3).map(|_| random_layer(8, &mut rng)).collect();
        let ml = MultilayerNetwork::new(layers, 1.0, 0.5).unwrap();
        let params = ModularityParams { gamma: 1.0, omega: 0.5, restarts: 6, seed: 99 };
        let a = run_ensemble(&ml, &params).unwrap();
        let b = run_ensemble(&ml, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        let single = louvain_multilayer(&ml, seed::derive(99, 3)).unwrap().0;
        assert_eq!(a[3], single);

        let one = ModularityParams { restarts: 1, ..params };
        assert_eq!(run_ensemble(&ml, &one).unwrap()[0], a[0]);
        assert!(run_ensemble(&ml, &ModularityParams { restarts: 0, ..params }).is_err());
    }

    #[test]
    fn planted_ensemble_agrees() {
        let blocks = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
        let ml = MultilayerNetwork::new(vec![planted_layer(&blocks); 5], 1.0, 1.0).unwrap();
        let params = ModularityParams { gamma: 1.0, omega: 1.0, restarts: 100, seed: 1 };
        let runs = run_ensemble(&ml, &params).unwrap();
        for r in &runs[1..] {
            assert_eq!(partition_similarity(&runs[0], r).unwrap(), 1.0);
        }
    }
}
