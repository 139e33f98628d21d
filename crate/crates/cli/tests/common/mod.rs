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

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dynmod::stats::Group;
use dynmod::synth::{self, CohortSpec, EffectModifier, GroupSpec};

pub fn run(args: &[&str]) -> i32 {
    run_env(args, &BTreeMap::new())
}

pub fn run_env(args: &[&str], env: &BTreeMap<String, String>) -> i32 {
    let mut full = vec!["dynmod"];
    full.extend_from_slice(args);
    dynmod_cli::run(full, env)
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// A small cohort over the default atlas with reduced severe-group
/// recruitment in the salience network.
pub fn small_cohort(per_group: usize, n_samples: usize, reduction: f64) -> CohortSpec {
    let mut spec = synth::default_cohort_spec();
    let sys = dynmod::atlas::default_systems();
    let san = sys.system_names.iter().position(|s| s == "SAN").unwrap();
    for g in spec.groups.iter_mut() {
        g.n_subjects = per_group;
        g.template = synth::atlas_template(n_samples, 0.6, 0.1);
        g.effects = if g.group == Group::Severe && reduction > 0.0 {
            vec![EffectModifier {
                regions: sys.members(san),
                recruitment_reduction: reduction,
            }]
        } else {
            Vec::new()
        };
    }
    spec
}

pub fn write_cohort_spec(dir: &Path, spec: &CohortSpec) -> PathBuf {
    let path = dir.join("cohort.json");
    fs::write(&path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    path
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

pub const FAST_CONFIG: &str = "window_width = 20\nrestarts = 3\nn_perm = 20\ndensities = [0.1, 0.2]\n";

pub fn group_spec_names(spec: &CohortSpec) -> Vec<&'static str> {
    spec.groups.iter().map(|g: &GroupSpec| g.group.name()).collect()
}
