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

//! Synthetic subjects and cohorts with planted community structure.
//!
//! Each sample is drawn from a factor model: a global factor with loading
//! `√between`, a block factor with loading `a_i = s_i √(within − between)`,
//! and independent noise filling the remaining variance. Regions in the same
//! block then correlate at `between + a_i a_j` and across blocks at `between`.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::atlas;
use crate::connectivity::TimeSeries;
use crate::error::{invalid, Error, Result};
use crate::seed;
use crate::stats::{CohortMetadata, Group, SubjectMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub start: usize,
    pub end: usize,
    /// Block label per region.
    pub partition: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDynamics {
    pub n_regions: usize,
    pub n_samples: usize,
    pub tr: f64,
    pub epochs: Vec<Epoch>,
    pub within_corr: f64,
    pub between_corr: f64,
    #[serde(default)]
    pub noise_seed: u64,
    /// Per-region multiplier on the block loading (default 1).
    #[serde(default)]
    pub region_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub region_labels: Option<Vec<String>>,
}

impl PlantedDynamics {
    pub fn validate(&self) -> Result<()> {
        if self.n_regions < 2 || self.n_samples < 2 {
            return Err(invalid("planted dynamics needs >= 2 regions and >= 2 samples"));
        }
        let mut next = 0;
        for (k, e) in self.epochs.iter().enumerate() {
            if e.start != next || e.end <= e.start {
                return Err(invalid(format!("epoch {k} does not continue the tiling at sample {next}")));
            }
            if e.partition.len() != self.n_regions {
                return Err(Error::ShapeMismatch(format!(
                    "epoch {k} partition has {} labels for {} regions",
                    e.partition.len(),
                    self.n_regions
                )));
            }
            next = e.end;
        }
        if next != self.n_samples {
            return Err(invalid(format!("epochs cover {next} of {} samples", self.n_samples)));
        }
        let (w, b) = (self.within_corr, self.between_corr);
        if !(0.0..1.0).contains(&b) || !(b <= w && w < 1.0) {
            return Err(Error::InfeasibleSpec(format!(
                "need 0 <= between ({b}) <= within ({w}) < 1"
            )));
        }
        if let Some(s) = &self.region_scale {
            if s.len() != self.n_regions {
                return Err(Error::ShapeMismatch("region_scale length".into()));
            }
        }
        if let Some(l) = &self.region_labels {
            if l.len() != self.n_regions {
                return Err(Error::ShapeMismatch("region_labels length".into()));
            }
        }
        if !(self.tr > 0.0) {
            return Err(invalid("tr must be positive"));
        }
        Ok(())
    }

    fn loadings(&self) -> Vec<f64> {
        let base = (self.within_corr - self.between_corr).sqrt();
        (0..self.n_regions)
            .map(|i| base * self.region_scale.as_ref().map_or(1.0, |s| s[i]))
            .collect()
    }

    /// Correlation matrix implied by the factor model for one epoch.
    pub fn implied_correlation(&self, epoch: usize) -> DMatrix<f64> {
        let a = self.loadings();
        let p = &self.epochs[epoch].partition;
        let b = self.between_corr;
        DMatrix::from_fn(self.n_regions, self.n_regions, |i, j| {
            if i == j {
                1.0
            } else if p[i] == p[j] {
                b + a[i] * a[j]
            } else {
                b
            }
        })
    }

    /// Every epoch's implied correlation matrix must be positive semidefinite
    /// and the noise variances non-negative.
    pub fn check_feasible(&self) -> Result<()> {
        self.validate()?;
        for (i, a) in self.loadings().iter().enumerate() {
            if self.between_corr + a * a > 1.0 + 1e-12 {
                return Err(Error::InfeasibleSpec(format!(
                    "region {i}: loadings exceed unit variance"
                )));
            }
        }
        for e in 0..self.epochs.len() {
            let eig = self.implied_correlation(e).symmetric_eigenvalues();
            if eig.min() < -1e-10 {
                return Err(Error::InfeasibleSpec(format!(
                    "epoch {e} correlation matrix is not positive semidefinite (min eigenvalue {})",
                    eig.min()
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.region_labels
            .clone()
            .unwrap_or_else(|| (0..self.n_regions).map(|i| format!("r{i:02}")).collect())
    }
}

/// Draw one subject. Identical spec and seed give bitwise identical output.
pub fn generate_subject(spec: &PlantedDynamics, seed: u64) -> Result<TimeSeries> {
    spec.check_feasible()?;
    let n = spec.n_regions;
    let mut rng = seed::rng(seed::derive(spec.noise_seed, seed));
    let a = spec.loadings();
    let g_load = spec.between_corr.sqrt();
    let noise: Vec<f64> = a.iter().map(|x| (1.0 - spec.between_corr - x * x).max(0.0).sqrt()).collect();
    let mut values = Vec::with_capacity(spec.n_samples * n);
    for e in &spec.epochs {
        let n_blocks = e.partition.iter().max().map_or(0, |m| m + 1);
        let mut block = vec![0.0; n_blocks];
        for _ in e.start..e.end {
            let global: f64 = StandardNormal.sample(&mut rng);
            for f in block.iter_mut() {
                *f = StandardNormal.sample(&mut rng);
            }
            for i in 0..n {
                let eps: f64 = StandardNormal.sample(&mut rng);
                values.push(g_load * global + a[i] * block[e.partition[i]] + noise[i] * eps);
            }
        }
    }
    TimeSeries::new(values, spec.labels(), spec.tr)
}

/// Lower a set of regions' block loadings by `recruitment_reduction`
/// (a fraction in [0, 1]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectModifier {
    pub regions: Vec<usize>,
    pub recruitment_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group: Group,
    pub n_subjects: usize,
    pub template: PlantedDynamics,
    pub age_mean: f64,
    pub age_sd: f64,
    /// Probability of sex indicator 1.
    pub sex_ratio: f64,
    pub fd_mean: f64,
    pub fd_sd: f64,
    #[serde(default)]
    pub effects: Vec<EffectModifier>,
    /// Standard deviation of per-subject jitter on `within_corr`.
    #[serde(default)]
    pub within_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub groups: Vec<GroupSpec>,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(invalid("cohort has no groups"));
        }
        for g in &self.groups {
            if g.n_subjects < 2 {
                return Err(invalid(format!("group {} needs at least 2 subjects", g.group.name())));
            }
            g.template.validate()?;
            for e in &g.effects {
                if !(0.0..=1.0).contains(&e.recruitment_reduction) {
                    return Err(invalid("recruitment_reduction must lie in [0, 1]"));
                }
                if e.regions.iter().any(|r| *r >= g.template.n_regions) {
                    return Err(invalid("effect modifier names a region out of range"));
                }
            }
        }
        Ok(())
    }

    pub fn n_subjects(&self) -> usize {
        self.groups.iter().map(|g| g.n_subjects).sum()
    }
}

/// A synthetic subject: id and signals.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub series: TimeSeries,
}

pub fn subject_id(index: usize) -> String {
    format!("sub-{index:03}")
}

fn subject_dynamics(g: &GroupSpec, rng: &mut seed::Rng) -> PlantedDynamics {
    let mut d = g.template.clone();
    if g.within_jitter > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        let lo = d.between_corr + 0.01;
        d.within_corr = (d.within_corr + g.within_jitter * z).clamp(lo.min(0.98), 0.98);
    }
    if !g.effects.is_empty() {
        let mut scale = d.region_scale.clone().unwrap_or_else(|| vec![1.0; d.n_regions]);
        for e in &g.effects {
            for r in &e.regions {
                scale[*r] *= 1.0 - e.recruitment_reduction;
            }
        }
        d.region_scale = Some(scale);
    }
    d
}

/// Subjects are numbered across groups in spec order; subject `k` draws its
/// signals from `derive(seed, k)` and its covariates from a separate stream.
pub fn generate_cohort(spec: &CohortSpec, seed: u64) -> Result<(Vec<Subject>, CohortMetadata)> {
    spec.validate()?;
    let mut subjects = Vec::with_capacity(spec.n_subjects());
    let mut meta = Vec::with_capacity(spec.n_subjects());
    let mut k = 0usize;
    for g in &spec.groups {
        for _ in 0..g.n_subjects {
            let mut crng = seed::child_rng(seed, (k as u64) | (1 << 62));
            let dynamics = subject_dynamics(g, &mut crng);
            let series = generate_subject(&dynamics, seed::derive(seed, k as u64))?;
            let age_z: f64 = StandardNormal.sample(&mut crng);
            let fd_z: f64 = StandardNormal.sample(&mut crng);
            let sex = u8::from(crng.random::<f64>() < g.sex_ratio);
            let id = subject_id(k);
            meta.push(SubjectMeta {
                id: id.clone(),
                group: g.group,
                age: g.age_mean + g.age_sd * age_z,
                sex,
                fd: (g.fd_mean + g.fd_sd * fd_z).abs().max(0.01),
            });
            subjects.push(Subject { id, series });
            k += 1;
        }
    }
    Ok((subjects, CohortMetadata { subjects: meta }))
}

/// Stationary template over the default 32-region atlas: one epoch whose
/// blocks are the 8 functional systems.
pub fn atlas_template(n_samples: usize, within_corr: f64, between_corr: f64) -> PlantedDynamics {
    let sys = atlas::default_systems();
    PlantedDynamics {
        n_regions: sys.n_regions(),
        n_samples,
        tr: 2.0,
        epochs: vec![Epoch {
            start: 0,
            end: n_samples,
            partition: sys.assignment.clone(),
        }],
        within_corr,
        between_corr,
        noise_seed: 0,
        region_scale: None,
        region_labels: Some(sys.region_labels.clone()),
    }
}

/// 15 controls, 6 mild and 9 severe subjects over the default atlas; the
/// severe group has reduced salience-network (`SAN`) recruitment.
pub fn default_cohort_spec() -> CohortSpec {
    let sys = atlas::default_systems();
    let san = sys.system_names.iter().position(|s| s == "SAN").expect("atlas has SAN");
    let template = atlas_template(200, 0.6, 0.1);
    let group = |group, n_subjects, fd_mean, effects| GroupSpec {
        group,
        n_subjects,
        template: template.clone(),
        age_mean: 58.0,
        age_sd: 8.0,
        sex_ratio: 0.6,
        fd_mean,
        fd_sd: 0.04,
        effects,
        within_jitter: 0.05,
    };
    CohortSpec {
        groups: vec![
            group(Group::Control, 15, 0.15, vec![]),
            group(Group::Mild, 6, 0.17, vec![]),
            group(
                Group::Severe,
                9,
                0.18,
                vec![EffectModifier {
                    regions: sys.members(san),
                    recruitment_reduction: 0.5,
                }],
            ),
        ],
    }
}
