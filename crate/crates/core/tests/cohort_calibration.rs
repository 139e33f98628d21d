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

//! Repeated-cohort calibration of the synthetic generator through
//! detection and measures.

use dynmod::measures::{ensemble_measures, MeasureKind, Target};
use dynmod::multilayer::{build_supra, run_ensemble};
use dynmod::stats::{adjusted_ttest, group_anova, Group};
use dynmod::synth::{atlas_template, default_cohort_spec, generate_cohort, CohortSpec};
use dynmod::{atlas, dfc_estimate, make_taper, ModularityParams};
use rayon::prelude::*;

const REPLICATES: u64 = 50;

/// Default 15/6/9 design on shorter scans.
fn cohort(with_effect: bool) -> CohortSpec {
    let mut spec = default_cohort_spec();
    for g in spec.groups.iter_mut() {
        g.template = atlas_template(100, 0.6, 0.1);
        if !with_effect {
            g.effects.clear();
        }
    }
    spec
}

/// Raw salience-network recruitment per subject.
fn san_recruitment(spec: &CohortSpec, seed: u64) -> (Vec<f64>, dynmod::CohortMetadata) {
    let sys = atlas::default_systems();
    let san = sys.system_names.iter().position(|s| s == "SAN").unwrap();
    let (subjects, meta) = generate_cohort(spec, seed).unwrap();
    let taper = make_taper(25, 3.0).unwrap();
    let y = subjects
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let dfc = dfc_estimate(&s.series, &taper, 1).unwrap();
            let ml = build_supra(&dfc, 1.0, 1.0).unwrap();
            let params = ModularityParams { gamma: 1.0, omega: 1.0, restarts: 2, seed: seed ^ k as u64 };
            let cas = run_ensemble(&ml, &params).unwrap();
            ensemble_measures(&cas, &sys).unwrap().get(MeasureKind::Recruitment, Target::System(san)).unwrap().raw
        })
        .collect();
    (y, meta)
}

/// Asymptotic Kolmogorov-Smirnov p-value against U(0, 1).
fn ks_uniform_p(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let d = p
        .iter()
        .enumerate()
        .map(|(i, x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    s.clamp(0.0, 1.0)
}

#[test]
fn no_effect_gives_uniform_anova_p() {
    let spec = cohort(false);
    let p: Vec<f64> = (0..REPLICATES)
        .map(|r| {
            let (y, meta) = san_recruitment(&spec, 500 + r);
            group_anova(&y, &meta).unwrap().p
        })
        .collect();
    let ks = ks_uniform_p(p.clone());
    let small = p.iter().filter(|x| **x < 0.05).count();
    println!("KS p {ks:.3}, {small} below 0.05");
    assert!(ks > 0.01, "KS p = {ks}, p-values {p:?}");
    assert!(small <= 8, "{small} of {REPLICATES} below 0.05");
}

#[test]
fn planted_reduction_has_power() {
    let spec = cohort(true);
    let hits = (0..REPLICATES)
        .filter(|r| {
            let (y, meta) = san_recruitment(&spec, 900 + r);
            adjusted_ttest(&y, &meta, (Group::Control, Group::Severe)).unwrap().p < 0.05
        })
        .count();
    println!("power {hits}/{REPLICATES}");
    assert!(hits as f64 >= 0.8 * REPLICATES as f64, "power {hits}/{REPLICATES}");
}

#[test]
fn ks_reference_values() {
    let even: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
    assert!(ks_uniform_p(even) > 0.99);
    let crowded: Vec<f64> = (0..100).map(|i| i as f64 / 1000.0).collect();
    assert!(ks_uniform_p(crowded) < 1e-10);
}
