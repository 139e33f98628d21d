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

//! Pipeline configuration: a TOML file, `DYNMOD_` environment overrides and
//! command-line flags, applied in that order over the defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dynmod::stats::TTestKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const ENV_PREFIX: &str = "DYNMOD_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    Fdr,
    Bonferroni,
}

/// Multiple-comparison policy per test family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionPolicy {
    pub static_modularity: Correction,
    pub measures: Correction,
}

impl Default for CorrectionPolicy {
    fn default() -> Self {
        CorrectionPolicy {
            static_modularity: Correction::Bonferroni,
            measures: Correction::Fdr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    /// Shuffle node labels of the detected assignments.
    Relabel,
    /// Shuffle connectivity and rerun detection per permutation.
    Redetect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsValue {
    Raw,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub window_width: usize,
    pub step: usize,
    pub taper_sigma: f64,
    pub gamma: f64,
    pub omega: f64,
    pub restarts: usize,
    pub n_perm: usize,
    pub densities: Vec<f64>,
    /// Densities averaged for the static modularity contrast; empty means all.
    pub density_subset: Vec<f64>,
    pub seed: u64,
    /// Seconds per sample of the input time series.
    pub sample_period: f64,
    pub null_mode: NullMode,
    pub stats_value: StatsValue,
    pub alpha: f64,
    pub fdr_q: f64,
    /// Run post-hoc tests only when the ANOVA is significant.
    pub posthoc_gate: bool,
    pub gate_alpha: f64,
    pub ttest: TTestKind,
    pub correction: CorrectionPolicy,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_width: 50,
            step: 1,
            taper_sigma: 3.0,
            gamma: 1.0,
            omega: 1.0,
            restarts: 100,
            n_perm: 1000,
            densities: dynmod::static_mod::default_densities(),
            density_subset: Vec::new(),
            seed: 0,
            sample_period: 2.0,
            null_mode: NullMode::Relabel,
            stats_value: StatsValue::Normalized,
            alpha: 0.05,
            fdr_q: 0.05,
            posthoc_gate: true,
            gate_alpha: 0.05,
            ttest: TTestKind::Pooled,
            correction: CorrectionPolicy::default(),
            paths: Paths::default(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Defaults, then the optional file, then environment overrides.
    pub fn load(path: Option<&Path>, env: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut value: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                text.parse().map_err(|e| usage(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        apply_env(&mut value, env)?;
        let cfg: PipelineConfig = value.try_into().map_err(|e| usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(usage(format!("config: {m}")));
        if self.window_width < 2 {
            return bad("window_width must be at least 2");
        }
        if self.step == 0 {
            return bad("step must be at least 1");
        }
        if !(self.taper_sigma > 0.0) {
            return bad("taper_sigma must be positive");
        }
        if !(self.gamma > 0.0) || !(self.omega >= 0.0) {
            return bad("gamma must be positive and omega non-negative");
        }
        if self.restarts == 0 || self.n_perm == 0 {
            return bad("restarts and n_perm must be at least 1");
        }
        if self.densities.is_empty() || self.densities.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return bad("densities must be non-empty and lie in (0, 1]");
        }
        if self.densities.windows(2).any(|w| w[1] <= w[0]) {
            return bad("densities must be strictly increasing");
        }
        if self.density_subset.iter().any(|d| !self.densities.iter().any(|x| (x - d).abs() < 1e-12)) {
            return bad("density_subset must be drawn from densities");
        }
        if !(self.sample_period > 0.0) {
            return bad("sample_period must be positive");
        }
        for (name, v) in [("alpha", self.alpha), ("fdr_q", self.fdr_q), ("gate_alpha", self.gate_alpha)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(&format!("{name} must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML with paths removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        hex::encode(Sha256::digest(c.to_toml_string().as_bytes()))
    }
}

/// `DYNMOD_GAMMA=0.8` sets `gamma`; a double underscore descends into a
/// table, as in `DYNMOD_CORRECTION__MEASURES=bonferroni`. Values are parsed
/// as TOML and fall back to plain strings.
pub fn apply_env(table: &mut toml::Table, env: &BTreeMap<String, String>) -> Result<(), CliError> {
    for (key, raw) in env {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let path: Vec<String> = rest.split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(String::is_empty) {
            return Err(usage(format!("malformed override {key}")));
        }
        let value = parse_env_value(raw);
        let mut cur = &mut *table;
        for p in &path[..path.len() - 1] {
            let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| usage(format!("override {key}: `{p}` is not a table")))?;
        }
        cur.insert(path[path.len() - 1].clone(), value);
    }
    Ok(())
}

fn parse_env_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// `DYNMOD_*` variables from the process environment.
pub fn process_env() -> BTreeMap<String, String> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}
