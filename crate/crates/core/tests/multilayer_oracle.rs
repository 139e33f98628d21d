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

//! Multilayer modularity against brute force over every supra-node
//! partition, and the uncoupled (ω = 0) decomposition into layers.

use dynmod::connectivity::{ConnectivityKind, ConnectivityMatrix};
use dynmod::multilayer::{louvain_multilayer, multilayer_modularity};
use dynmod::static_mod::{newman_modularity, Partition};
use dynmod::{seed, CommunityAssignment, MultilayerNetwork};
use rand::{Rng, SeedableRng};

fn random_layer(n: usize, rng: &mut impl Rng) -> ConnectivityMatrix {
    loop {
        let upper: Vec<f64> = (0..n * (n - 1) / 2)
            .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() })
            .collect();
        if upper.iter().any(|w| *w > 0.0) {
            return ConnectivityMatrix::from_upper(n, &upper, ConnectivityKind::FisherZPositive).unwrap();
        }
    }
}

/// Dense modularity matrix of the supra-graph, node `(l, i)` at `l·N + i`.
fn supra_b(layers: &[ConnectivityMatrix], gamma: f64, omega: f64) -> (Vec<Vec<f64>>, f64) {
    let n = layers[0].n();
    let t = layers.len();
    let dim = n * t;
    let mut b = vec![vec![0.0; dim]; dim];
    let mut two_mu = 0.0;
    for (l, a) in layers.iter().enumerate() {
        let k: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect();
        let two_m: f64 = k.iter().sum();
        two_mu += two_m;
        for i in 0..n {
            for j in 0..n {
                b[l * n + i][l * n + j] = a.get(i, j) - gamma * k[i] * k[j] / two_m;
            }
        }
    }
    for l in 0..t {
        for r in 0..t {
            if l.abs_diff(r) == 1 {
                for i in 0..n {
                    b[l * n + i][r * n + i] = omega;
                    two_mu += omega;
                }
            }
        }
    }
    (b, two_mu)
}

/// Maximum of Σ_{same community} B_uv over all set partitions, by DFS over
/// restricted growth strings with incremental scores.
fn brute_force_max(b: &[Vec<f64>]) -> f64 {
    fn go(u: usize, b: &[Vec<f64>], labels: &mut Vec<usize>, k: usize, score: f64, best: &mut f64) {
        if u == b.len() {
            *best = best.max(score);
            return;
        }
        for c in 0..=k {
            let mut inc = b[u][u];
            for v in 0..u {
                if labels[v] == c {
                    inc += 2.0 * b[u][v];
                }
            }
            labels.push(c);
            go(u + 1, b, labels, k.max(c + 1), score + inc, best);
            labels.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(0, b, &mut Vec::new(), 0, 0.0, &mut best);
    best
}

fn direct_q(b: &[Vec<f64>], two_mu: f64, labels: &[usize]) -> f64 {
    let mut s = 0.0;
    for u in 0..b.len() {
        for v in 0..b.len() {
            if labels[u] == labels[v] {
                s += b[u][v];
            }
        }
    }
    s / two_mu
}

#[test]
fn brute_force_small_instances() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for case in 0..6 {
        let n = if case % 2 == 0 { 3 } else { 4 };
        let t = if case < 4 { 2 } else { 3 };
        let layers: Vec<_> = (0..t).map(|_| random_layer(n, &mut rng)).collect();
        let gamma = 1.0;
        let omega = [0.3, 1.0][case % 2];
        let ml = MultilayerNetwork::new(layers.clone(), gamma, omega).unwrap();
        let (b, two_mu) = supra_b(&layers, gamma, omega);
        let oracle = brute_force_max(&b) / two_mu;
        let mut best = f64::NEG_INFINITY;
        for r in 0..100 {
            let (ca, q) = louvain_multilayer(&ml, seed::derive(case as u64, r)).unwrap();
            let again = multilayer_modularity(&ml, &ca).unwrap();
            assert!((q - again).abs() < 1e-10);
            assert!((direct_q(&b, two_mu, ca.labels()) - q).abs() < 1e-10);
            best = best.max(q);
        }
        assert!((best - oracle).abs() < 1e-10, "case {case}: best {best}, oracle {oracle}");
    }
}

#[test]
fn modularity_matches_dense_definition() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(2..6);
        let t = rng.random_range(1..5);
        let layers: Vec<_> = (0..t).map(|_| random_layer(n, &mut rng)).collect();
        let gamma = rng.random_range(0.5..1.5);
        let omega = rng.random_range(0.0..2.0);
        let ml = MultilayerNetwork::new(layers.clone(), gamma, omega).unwrap();
        let labels: Vec<usize> = (0..n * t).map(|_| rng.random_range(0..3)).collect();
        let ca = CommunityAssignment::new(t, n, labels.clone()).unwrap();
        let (b, two_mu) = supra_b(&layers, gamma, omega);
        let q = multilayer_modularity(&ml, &ca).unwrap();
        assert!((q - direct_q(&b, two_mu, &labels)).abs() < 1e-12);
    }
}

#[test]
fn uncoupled_layers_decompose() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let n = 5;
        let t = 3;
        let layers: Vec<_> = (0..t).map(|_| random_layer(n, &mut rng)).collect();
        let ml = MultilayerNetwork::new(layers.clone(), 1.0, 0.0).unwrap();
        let labels: Vec<usize> = (0..n * t).map(|_| rng.random_range(0..3)).collect();
        let ca = CommunityAssignment::new(t, n, labels).unwrap();
        let total: f64 = layers.iter().map(|a| a.total_weight()).sum();
        let weighted: f64 = layers
            .iter()
            .enumerate()
            .map(|(l, a)| {
                let p = Partition::new(ca.layer(l).to_vec()).unwrap();
                a.total_weight() / total * newman_modularity(a, &p, 1.0).unwrap()
            })
            .sum();
        assert!((multilayer_modularity(&ml, &ca).unwrap() - weighted).abs() < 1e-12);
    }
}

#[test]
fn single_layer_equals_newman() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let a = random_layer(6, &mut rng);
        let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
        let ml = MultilayerNetwork::new(vec![a.clone()], 0.8, 1.0).unwrap();
        let ca = CommunityAssignment::new(1, 6, labels.clone()).unwrap();
        let p = Partition::new(labels).unwrap();
        let q = multilayer_modularity(&ml, &ca).unwrap();
        assert!((q - newman_modularity(&a, &p, 0.8).unwrap()).abs() < 1e-12);
    }
}
