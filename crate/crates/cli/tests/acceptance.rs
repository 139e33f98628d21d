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

//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts on the same condition.

mod common;

use std::fs;
use std::io::Write;
use std::time::{Duration, Instant};

use common::*;
use dynmod::connectivity::{dfc_estimate, fisher_z, make_taper, ConnectivityKind, ConnectivityMatrix};
use dynmod::measures::{self, SystemPartition};
use dynmod::multilayer::{build_supra, louvain_multilayer, multilayer_modularity, partition_similarity, run_ensemble};
use dynmod::static_mod::{newman_modularity, optimize_static_best, Partition};
use dynmod::stats::{bonferroni, fdr_bh, oneway_anova};
use dynmod::synth::{generate_subject, Epoch, PlantedDynamics};
use dynmod::{atlas, io, seed, CommunityAssignment, ModularityParams, MultilayerNetwork};
use rand::{Rng, SeedableRng};

/// Written to the process stdout directly so the line shows without
/// `--nocapture`.
fn report(name: &str, ok: bool, detail: String) {
    let line = format!("{} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{name}: {detail}");
}

fn rng(s: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(s)
}

fn random_graph(n: usize, r: &mut impl Rng) -> ConnectivityMatrix {
    loop {
        let upper: Vec<f64> = (0..n * (n - 1) / 2)
            .map(|_| if r.random::<f64>() < 0.35 { 0.0 } else { r.random::<f64>() })
            .collect();
        if upper.iter().any(|w| *w > 0.0) {
            return ConnectivityMatrix::from_upper(n, &upper, ConnectivityKind::FisherZPositive).unwrap();
        }
    }
}

/// Newman Q from the dense definition.
fn q_direct(w: &ConnectivityMatrix, labels: &[usize]) -> f64 {
    let n = w.n();
    let k: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w.get(i, j)).sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += w.get(i, j) - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Every set partition of `n` items as a restricted growth string.
fn for_each_partition(n: usize, f: &mut impl FnMut(&[usize])) {
    fn go(labels: &mut Vec<usize>, n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
        if labels.len() == n {
            f(labels);
            return;
        }
        for c in 0..=k {
            labels.push(c);
            go(labels, n, k.max(c + 1), f);
            labels.pop();
        }
    }
    go(&mut Vec::new(), n, 0, f);
}

#[test]
fn static_exhaustive_oracle() {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    let graphs = 24;
    let mut louvain_time = Duration::ZERO;
    for g in 0..graphs {
        let n = 5 + g % 4;
        let w = random_graph(n, &mut r);
        let mut best = f64::NEG_INFINITY;
        for_each_partition(n, &mut |l| best = best.max(q_direct(&w, l)));
        let t0 = Instant::now();
        let (p, q) = optimize_static_best(&w, 1.0, 100, g as u64).unwrap();
        louvain_time += t0.elapsed();
        worst = worst.max((best - q).abs()).max((q_direct(&w, p.labels()) - q).abs());
    }
    let elapsed = start.elapsed();
    report(
        "static exhaustive oracle",
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("{graphs} graphs (5-8 nodes), max |Q - Q*| = {worst:.1e}, optimizer {louvain_time:?}, total {elapsed:?}"),
    );
}

/// Supra-graph modularity matrix, node `(l, i)` at `l·N + i`.
fn supra_b(layers: &[ConnectivityMatrix], gamma: f64, omega: f64) -> (Vec<Vec<f64>>, f64) {
    let n = layers[0].n();
    let t = layers.len();
    let mut b = vec![vec![0.0; n * t]; n * t];
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

#[test]
fn multilayer_exhaustive_oracle() {
    let start = Instant::now();
    let mut r = rng(202);
    let shapes = [(3, 2), (4, 2), (3, 3), (4, 3)];
    let mut worst_gap = 0.0f64;
    let mut worst_eval = 0.0f64;
    let instances = 12;
    for case in 0..instances {
        let (n, t) = shapes[case % shapes.len()];
        let layers: Vec<_> = (0..t).map(|_| random_graph(n, &mut r)).collect();
        let gamma = [1.0, 0.8, 1.2][case % 3];
        let omega = [0.5, 1.0, 2.0][(case / 3) % 3];
        let ml = MultilayerNetwork::new(layers.clone(), gamma, omega).unwrap();
        let (b, two_mu) = supra_b(&layers, gamma, omega);
        let oracle = brute_force_max(&b) / two_mu;
        let mut best = f64::NEG_INFINITY;
        for run in 0..100 {
            let (ca, q) = louvain_multilayer(&ml, seed::derive(case as u64, run)).unwrap();
            worst_eval = worst_eval.max((multilayer_modularity(&ml, &ca).unwrap() - q).abs());
            best = best.max(q);
        }
        worst_gap = worst_gap.max(oracle - best);
    }
    let elapsed = start.elapsed();
    report(
        "multilayer exhaustive oracle",
        worst_gap <= 1e-10 && worst_eval <= 1e-10 && elapsed < Duration::from_secs(60),
        format!(
            "{instances} instances (N<=4, T<=3), max gap {worst_gap:.1e}, max re-evaluation error {worst_eval:.1e}, {elapsed:?}"
        ),
    );
}

#[test]
fn analytic_fixtures() {
    let mut v = vec![0.0; 36];
    for (i, j) in [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)] {
        v[i * 6 + j] = 1.0;
        v[j * 6 + i] = 1.0;
    }
    let w = ConnectivityMatrix::from_dense(6, v, ConnectivityKind::FisherZPositive).unwrap();
    let q_tri = newman_modularity(&w, &Partition::new(vec![0, 0, 0, 1, 1, 1]).unwrap(), 1.0).unwrap();
    let q_one = newman_modularity(&w, &Partition::single(6), 1.0).unwrap();
    let z = fisher_z(0.5).unwrap();
    report(
        "analytic fixtures",
        (q_tri - 0.5).abs() <= 1e-12 && q_one.abs() <= 1e-12 && (z - 0.549306).abs() <= 1e-6,
        format!("two triangles Q = {q_tri}, one community Q = {q_one}, fisher_z(0.5) = {z}"),
    );
}

#[test]
fn measure_oracle() {
    let mut r = rng(303);
    let mut mismatches = 0;
    let cases = 100;
    for _ in 0..cases {
        let n = r.random_range(2..=6);
        let t = r.random_range(2..=5);
        let k = r.random_range(2..=n);
        let mut sys_lab: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
        sys_lab.sort_unstable();
        let c = r.random_range(1..=n);
        let g: Vec<Vec<usize>> = (0..t).map(|_| (0..n).map(|_| r.random_range(0..c)).collect()).collect();
        let sys = SystemPartition::new(
            (0..n).map(|i| format!("r{i}")).collect(),
            sys_lab.clone(),
            (0..k).map(|s| format!("S{s}")).collect(),
        )
        .unwrap();
        let ca = CommunityAssignment::from_rows(&g).unwrap();
        let p = measures::allegiance(&ca);
        let rec = measures::recruitment(&p, &sys).unwrap();
        let integ = measures::integration_within(&p, &sys).unwrap();
        let flex = measures::flexibility(&ca, &sys).unwrap();

        let together = |i: usize, j: usize| g.iter().filter(|l| l[i] == l[j]).count();
        let mean = |a: &[usize], b: &[usize]| {
            let s: usize = a.iter().map(|i| b.iter().map(|j| together(*i, *j)).sum::<usize>()).sum();
            s as f64 / (t * a.len() * b.len()) as f64
        };
        let changes = |i: usize| (1..t).filter(|l| g[*l][i] != g[l - 1][i]).count();
        let inside = |s: usize| (0..n).filter(|i| sys_lab[*i] == s).collect::<Vec<_>>();
        let outside = |s: usize| (0..n).filter(|i| sys_lab[*i] != s).collect::<Vec<_>>();
        for s in 0..k {
            let (m, o) = (inside(s), outside(s));
            mismatches += usize::from(rec.system[s] != mean(&m, &m));
            mismatches += usize::from(integ.system[s] != mean(&m, &o));
            let f: usize = m.iter().map(|i| changes(*i)).sum();
            mismatches += usize::from(flex.system[s] != f as f64 / ((t - 1) * m.len()) as f64);
            for l in (s + 1)..k {
                let b = measures::integration_between_pair(&p, &sys, s, l).unwrap();
                mismatches += usize::from(b != mean(&m, &inside(l)));
            }
        }
        for i in 0..n {
            let s = sys_lab[i];
            mismatches += usize::from(rec.region[i] != mean(&[i], &inside(s)));
            mismatches += usize::from(integ.region[i] != mean(&[i], &outside(s)));
            mismatches += usize::from(flex.region[i] != changes(i) as f64 / (t - 1) as f64);
        }
    }
    report(
        "measure oracle",
        mismatches == 0,
        format!("{cases} random assignments (N<=6, T<=5), {mismatches} mismatching values"),
    );
}

/// Default atlas; in the second half four regions move to another system.
fn planted_switch() -> (PlantedDynamics, Vec<usize>, Vec<usize>) {
    // four blocks of eight; two regions of block 0 join block 1 and two
    // regions of block 2 join block 3 at the midpoint
    let before: Vec<usize> = (0..32).map(|i| i / 8).collect();
    let mut after = before.clone();
    for i in [6, 7] {
        after[i] = 1;
    }
    for i in [22, 23] {
        after[i] = 3;
    }
    let mut spec = dynmod::synth::atlas_template(200, 0.7, 0.0);
    spec.epochs = vec![
        Epoch { start: 0, end: 100, partition: before.clone() },
        Epoch { start: 100, end: 200, partition: after.clone() },
    ];
    spec.noise_seed = 17;
    (spec, before, after)
}

fn rows_of(ca: &CommunityAssignment, layers: std::ops::Range<usize>) -> CommunityAssignment {
    CommunityAssignment::from_rows(&layers.map(|l| ca.layer(l).to_vec()).collect::<Vec<_>>()).unwrap()
}

fn constant(rows: &[usize], layers: usize) -> CommunityAssignment {
    CommunityAssignment::from_rows(&vec![rows.to_vec(); layers]).unwrap()
}

#[test]
fn planted_dynamics_recovery() {
    let start = Instant::now();
    let (spec, before, after) = planted_switch();
    let sys = atlas::default_systems();
    let ts = generate_subject(&spec, 1).unwrap();
    let w = 50;
    let dfc = dfc_estimate(&ts, &make_taper(w, 3.0).unwrap(), 1).unwrap();
    let ml = build_supra(&dfc, 1.0, 1.0).unwrap();
    let params = ModularityParams { gamma: 1.0, omega: 1.0, restarts: 100, seed: 5 };
    let cas = run_ensemble(&ml, &params).unwrap();
    let table = measures::ensemble_measures(&cas, &sys).unwrap();
    let t = dfc.n_layers();
    let mut wrong = Vec::new();
    for i in 0..32 {
        let f = table.get(measures::MeasureKind::Flexibility, measures::Target::Region(i)).unwrap().raw;
        if (f > 0.0) != (before[i] != after[i]) {
            wrong.push(format!("{}={f:.4}", sys.region_labels[i]));
        }
    }
    // layers whose window lies entirely inside one epoch
    let first = 0..(100 - w + 1);
    let second = 100..t;
    let mut min_sim = f64::INFINITY;
    let mut mean_sim = 0.0;
    for ca in &cas {
        let a = partition_similarity(&rows_of(ca, first.clone()), &constant(&before, first.len())).unwrap();
        let b = partition_similarity(&rows_of(ca, second.clone()), &constant(&after, second.len())).unwrap();
        min_sim = min_sim.min(a.min(b));
        mean_sim += (a + b) / (2.0 * cas.len() as f64);
    }
    let elapsed = start.elapsed();
    report(
        "planted dynamics recovery",
        wrong.is_empty() && min_sim >= 0.9 && elapsed < Duration::from_secs(120),
        format!(
            "flexibility misclassified: {wrong:?}; per-epoch similarity min {min_sim:.4} mean {mean_sim:.4} over 100 runs; {elapsed:?}"
        ),
    );
}

#[test]
fn statistics_oracles() {
    let (bh, _) = fdr_bh(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
    let bh_ok = bh == vec![true; 4];

    let mut r = rng(303);
    let mut bonf_ok = true;
    let mut superset_ok = true;
    for _ in 0..1000 {
        let m = r.random_range(1..40);
        let pv: Vec<f64> = (0..m)
            .map(|_| if r.random::<f64>() < 0.3 { r.random::<f64>() * 0.01 } else { r.random::<f64>() })
            .collect();
        let (b_rej, b_adj) = bonferroni(&pv, 0.05).unwrap();
        let (f_rej, _) = fdr_bh(&pv, 0.05).unwrap();
        bonf_ok &= pv.iter().zip(&b_adj).all(|(p, a)| *a == (m as f64 * p).min(1.0));
        superset_ok &= b_rej.iter().zip(&f_rej).all(|(b, f)| !b || *f);
    }

    let mut worst_f = 0.0f64;
    for _ in 0..200 {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let y: Vec<f64> = labels.iter().map(|g| *g as f64 * 0.3 + r.random::<f64>()).collect();
        let a: f64 = r.random_range(-5.0..5.0);
        let a = if a.abs() < 0.1 { 1.0 } else { a };
        let b = r.random_range(-100.0..100.0);
        let z: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let f1 = oneway_anova(&y, &labels).unwrap().statistic;
        let f2 = oneway_anova(&z, &labels).unwrap().statistic;
        worst_f = worst_f.max((f1 - f2).abs());
    }
    report(
        "statistics oracles",
        bh_ok && bonf_ok && superset_ok && worst_f <= 1e-10,
        format!(
            "BH example rejects all: {bh_ok}; Bonferroni exact: {bonf_ok}; FDR covers Bonferroni on 1000 vectors: {superset_ok}; max ANOVA F change under affine maps {worst_f:.1e}"
        ),
    );
}

/// Every setting at its default.
const DEFAULT_CONFIG: &str = "";

/// Lighter settings used for the replicates after the first.
const REPLICATE_CONFIG: &str = "restarts = 20\nn_perm = 200\n";

/// Held by the full-cohort tests so the timed run has the machine to itself.
static HEAVY: std::sync::Mutex<()> = std::sync::Mutex::new(());

fn run_cohort(dir: &std::path::Path, seed: u64, config: &str, jobs: usize) -> (std::path::PathBuf, Duration) {
    let raw = dir.join(format!("raw-{seed}"));
    let out = dir.join(format!("out-{seed}-{jobs}"));
    let cfg = dir.join(format!("config-{seed}-{jobs}.toml"));
    fs::write(&cfg, config).unwrap();
    let seed_s = seed.to_string();
    let jobs_s = jobs.to_string();
    let start = Instant::now();
    if !raw.exists() {
        assert_eq!(run(&["--seed", &seed_s, "synth", "--out", p(&raw)]), 0);
    }
    let code = run(&[
        "--seed", &seed_s, "--jobs", &jobs_s, "--config", p(&cfg), "pipeline", "--input", p(&raw), "--out", p(&out),
    ]);
    assert_eq!(code, 0, "pipeline exit code");
    (out, start.elapsed())
}

fn san_recruitment_rejected(out: &std::path::Path) -> bool {
    let rows = io::read_stats_csv(fs::File::open(out.join("stats.csv")).unwrap()).unwrap();
    rows.iter()
        .any(|r| r.contrast == "control-vs-severe" && r.target == "recruitment:system:SAN" && r.rejected)
}

#[test]
fn synthetic_cohort_effect_recovery() {
    let _heavy = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let full = std::env::var("DYNMOD_ACCEPT_FULL").is_ok();
    let dir = tempfile::tempdir().unwrap();
    let replicates = 20u64;
    let mut hits = 0;
    let mut first_time = Duration::ZERO;
    let mut misses = Vec::new();
    for rep in 0..replicates {
        let config = if rep == 0 || full { DEFAULT_CONFIG } else { REPLICATE_CONFIG };
        let (out, elapsed) = run_cohort(dir.path(), 1000 + rep, config, 1);
        if rep == 0 {
            first_time = elapsed;
        }
        if san_recruitment_rejected(&out) {
            hits += 1;
        } else {
            misses.push(rep);
        }
        fs::remove_dir_all(&out).unwrap();
    }
    let rate = hits as f64 / replicates as f64;
    report(
        "synthetic cohort effect recovery",
        rate >= 0.8 && first_time < Duration::from_secs(300),
        format!(
            "SAN recruitment control-vs-severe FDR-significant in {hits}/{replicates} replicates (missed {misses:?}); default-config cohort {first_time:?}{}",
            if full { "" } else { "; replicates 1-19 use restarts = 20, n_perm = 200" }
        ),
    );
}

#[test]
fn determinism() {
    let _heavy = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = run_cohort(dir.path(), 77, DEFAULT_CONFIG, 1);
    let (b, _) = run_cohort(dir.path(), 77, DEFAULT_CONFIG, 2);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let differing: Vec<_> = sa
        .keys()
        .chain(sb.keys())
        .filter(|k| sa.get(*k) != sb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    report(
        "determinism",
        differing.is_empty() && !sa.is_empty(),
        format!("{} output files compared across --jobs 1 and --jobs 2, differing: {differing:?}", sa.len()),
    );
}
