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

//! Allegiance-based dynamic measures: recruitment, integration and
//! flexibility, ensemble averaging and permutation-null normalization.
//!
//! Recruitment and integration are reported in their mean-allegiance form
//! (bounded in [0, 1]). The unnormalized sums scaled by `1/n_S` and
//! `1/(N − n_S)` are available as `scaled_sum`.

mod null;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::multilayer::CommunityAssignment;

pub use null::{normalize, permutation_null, permutation_null_redetect, NullMeans};

/// Assignment of regions to predefined functional systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemPartition {
    pub region_labels: Vec<String>,
    /// System index of each region.
    pub assignment: Vec<usize>,
    pub system_names: Vec<String>,
}

impl SystemPartition {
    pub fn new(region_labels: Vec<String>, assignment: Vec<usize>, system_names: Vec<String>) -> Result<Self> {
        let s = Self {
            region_labels,
            assignment,
            system_names,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.region_labels.len() != self.assignment.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} region labels for {} assignments",
                self.region_labels.len(),
                self.assignment.len()
            )));
        }
        let k = self.system_names.len();
        if k == 0 {
            return Err(invalid("system partition needs at least one system"));
        }
        let mut sizes = vec![0usize; k];
        for (r, s) in self.assignment.iter().enumerate() {
            if *s >= k {
                return Err(invalid(format!("region {r} assigned to unknown system {s}")));
            }
            sizes[*s] += 1;
        }
        if let Some(empty) = sizes.iter().position(|c| *c == 0) {
            return Err(invalid(format!("system `{}` has no regions", self.system_names[empty])));
        }
        Ok(())
    }

    pub fn n_regions(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_systems(&self) -> usize {
        self.system_names.len()
    }

    pub fn members(&self, system: usize) -> Vec<usize> {
        (0..self.n_regions()).filter(|r| self.assignment[*r] == system).collect()
    }

    pub fn size(&self, system: usize) -> usize {
        self.assignment.iter().filter(|s| **s == system).count()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.n_regions() != n {
            return Err(Error::ShapeMismatch(format!(
                "system partition covers {} regions, data has {n}",
                self.n_regions()
            )));
        }
        Ok(())
    }
}

/// Fraction of layers in which two regions share a community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllegianceMatrix {
    n: usize,
    n_layers: usize,
    /// Co-assignment counts; the diagonal holds `n_layers`.
    counts: Vec<u32>,
    p: Vec<f64>,
}

impl AllegianceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    /// Number of layers in which `i` and `j` share a community.
    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    /// Summed counts over a block divided once by `n_layers · per`.
    fn block_mean(&self, rows: &[usize], cols: &[usize], per: f64) -> f64 {
        let total: u64 = rows
            .iter()
            .map(|i| cols.iter().map(|j| u64::from(self.count(*i, *j))).sum::<u64>())
            .sum();
        total as f64 / (self.n_layers as f64 * per)
    }

    /// Mean over ordered pairs `i ≠ j`.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n;
        if n < 2 {
            return 1.0;
        }
        let mut s = 0u64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += u64::from(self.count(i, j));
                }
            }
        }
        s as f64 / (self.n_layers as f64 * (n * (n - 1)) as f64)
    }
}

pub fn allegiance(ca: &CommunityAssignment) -> AllegianceMatrix {
    let n = ca.n_nodes();
    let t = ca.n_layers();
    let mut counts = vec![0u32; n * n];
    for l in 0..t {
        let g = ca.layer(l);
        for i in 0..n {
            for j in (i + 1)..n {
                if g[i] == g[j] {
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        counts[i * n + i] = t as u32;
        p[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let c = counts[i * n + j];
            counts[j * n + i] = c;
            let v = f64::from(c) / t as f64;
            p[i * n + j] = v;
            p[j * n + i] = v;
        }
    }
    AllegianceMatrix { n, n_layers: t, counts, p }
}

/// Per-system and per-region values of one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemValues {
    pub system: Vec<f64>,
    pub region: Vec<f64>,
    /// Sums scaled as `1/n_S` (recruitment) or `1/(N − n_S)` (integration).
    /// Empty for flexibility.
    pub scaled_sum: Vec<f64>,
}

/// `R_S = (1/n_S²) Σ_{i,j∈S} P_ij` (diagonal included); nodal
/// `R_i = (1/n_S(i)) Σ_{j∈S(i)} P_ij`.
pub fn recruitment(p: &AllegianceMatrix, sys: &SystemPartition) -> Result<SystemValues> {
    sys.check(p.n())?;
    let mut system = Vec::with_capacity(sys.n_systems());
    let mut scaled_sum = Vec::with_capacity(sys.n_systems());
    for s in 0..sys.n_systems() {
        let m = sys.members(s);
        let ns = m.len() as f64;
        system.push(p.block_mean(&m, &m, ns * ns));
        scaled_sum.push(p.block_mean(&m, &m, ns));
    }
    let region = (0..p.n())
        .map(|i| {
            let m = sys.members(sys.assignment[i]);
            p.block_mean(&[i], &m, m.len() as f64)
        })
        .collect();
    Ok(SystemValues {
        system,
        region,
        scaled_sum,
    })
}

/// `I_S = (1/(n_S (N − n_S))) Σ_{i∈S} Σ_{j∉S} P_ij`; nodal
/// `I_i = (1/(N − n_S(i))) Σ_{j∉S(i)} P_ij`.
pub fn integration_within(p: &AllegianceMatrix, sys: &SystemPartition) -> Result<SystemValues> {
    sys.check(p.n())?;
    let n = p.n();
    let outside = |s: usize| -> Vec<usize> { (0..n).filter(|r| sys.assignment[*r] != s).collect() };
    let mut system = Vec::with_capacity(sys.n_systems());
    let mut scaled_sum = Vec::with_capacity(sys.n_systems());
    for s in 0..sys.n_systems() {
        let m = sys.members(s);
        let o = outside(s);
        if o.is_empty() {
            return Err(Error::UndefinedMeasure(format!(
                "integration of system `{}` which covers every region",
                sys.system_names[s]
            )));
        }
        system.push(p.block_mean(&m, &o, (m.len() * o.len()) as f64));
        scaled_sum.push(p.block_mean(&m, &o, o.len() as f64));
    }
    let region = (0..n)
        .map(|i| {
            let o = outside(sys.assignment[i]);
            p.block_mean(&[i], &o, o.len() as f64)
        })
        .collect();
    Ok(SystemValues {
        system,
        region,
        scaled_sum,
    })
}

/// `I_{S_k S_l}` for a single pair of distinct systems.
pub fn integration_between_pair(p: &AllegianceMatrix, sys: &SystemPartition, k: usize, l: usize) -> Result<f64> {
    sys.check(p.n())?;
    if k == l {
        return Err(Error::UndefinedMeasure(
            "between-system integration of a system with itself; use recruitment".into(),
        ));
    }
    if k >= sys.n_systems() || l >= sys.n_systems() {
        return Err(invalid(format!("system index out of range: ({k}, {l})")));
    }
    let a = sys.members(k);
    let b = sys.members(l);
    Ok(p.block_mean(&a, &b, (a.len() * b.len()) as f64))
}

/// Between-system integration for every pair `k < l`, in row-major pair order.
pub fn integration_between(p: &AllegianceMatrix, sys: &SystemPartition) -> Result<Vec<((usize, usize), f64)>> {
    let k = sys.n_systems();
    let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for a in 0..k {
        for b in (a + 1)..k {
            out.push(((a, b), integration_between_pair(p, sys, a, b)?));
        }
    }
    Ok(out)
}

/// Nodal `f_i` = community changes between consecutive layers / (T − 1);
/// system value is the mean over its regions.
pub fn flexibility(ca: &CommunityAssignment, sys: &SystemPartition) -> Result<SystemValues> {
    sys.check(ca.n_nodes())?;
    let t = ca.n_layers();
    if t < 2 {
        return Err(Error::UndefinedMeasure(format!("flexibility needs at least 2 layers, got {t}")));
    }
    let changes: Vec<usize> = (0..ca.n_nodes())
        .map(|i| (0..t - 1).filter(|l| ca.get(*l, i) != ca.get(l + 1, i)).count())
        .collect();
    let region = changes.iter().map(|c| *c as f64 / (t - 1) as f64).collect();
    let system = (0..sys.n_systems())
        .map(|s| {
            let m = sys.members(s);
            let total: usize = m.iter().map(|i| changes[*i]).sum();
            total as f64 / ((t - 1) * m.len()) as f64
        })
        .collect();
    Ok(SystemValues {
        system,
        region,
        scaled_sum: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Recruitment,
    IntegrationWithin,
    IntegrationBetween,
    Flexibility,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [
        MeasureKind::Recruitment,
        MeasureKind::IntegrationWithin,
        MeasureKind::IntegrationBetween,
        MeasureKind::Flexibility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Recruitment => "recruitment",
            MeasureKind::IntegrationWithin => "integration_within",
            MeasureKind::IntegrationBetween => "integration_between",
            MeasureKind::Flexibility => "flexibility",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    System(usize),
    Region(usize),
    SystemPair(usize, usize),
}

impl Target {
    /// Printable name: `system:<name>`, `region:<label>`, `pair:<a>|<b>`.
    pub fn label(&self, sys: &SystemPartition) -> String {
        match *self {
            Target::System(s) => format!("system:{}", sys.system_names[s]),
            Target::Region(r) => format!("region:{}", sys.region_labels[r]),
            Target::SystemPair(a, b) => format!("pair:{}|{}", sys.system_names[a], sys.system_names[b]),
        }
    }
}

/// Fixed ordering of every (measure, target) slot for a system partition.
pub fn layout(sys: &SystemPartition) -> Vec<(MeasureKind, Target)> {
    let k = sys.n_systems();
    let n = sys.n_regions();
    let mut out = Vec::new();
    for kind in MeasureKind::ALL {
        match kind {
            MeasureKind::IntegrationBetween => {
                for a in 0..k {
                    for b in (a + 1)..k {
                        out.push((kind, Target::SystemPair(a, b)));
                    }
                }
            }
            _ => {
                out.extend((0..k).map(|s| (kind, Target::System(s))));
                out.extend((0..n).map(|r| (kind, Target::Region(r))));
            }
        }
    }
    out
}

/// All measures of one assignment, in [`layout`] order.
pub fn measure_vector(ca: &CommunityAssignment, sys: &SystemPartition) -> Result<Vec<f64>> {
    let p = allegiance(ca);
    let rec = recruitment(&p, sys)?;
    // single-system partitions have no integration; leave those slots empty
    let integ = if sys.n_systems() > 1 {
        Some(integration_within(&p, sys)?)
    } else {
        None
    };
    let between = integration_between(&p, sys)?;
    let flex = flexibility(ca, sys)?;
    let mut out = Vec::new();
    out.extend(&rec.system);
    out.extend(&rec.region);
    if let Some(i) = integ {
        out.extend(&i.system);
        out.extend(&i.region);
    }
    out.extend(between.iter().map(|(_, v)| *v));
    out.extend(&flex.system);
    out.extend(&flex.region);
    Ok(out)
}

fn measure_layout(sys: &SystemPartition) -> Vec<(MeasureKind, Target)> {
    let mut l = layout(sys);
    if sys.n_systems() == 1 {
        l.retain(|(k, _)| *k != MeasureKind::IntegrationWithin);
    }
    l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEntry {
    pub kind: MeasureKind,
    pub target: Target,
    pub raw: f64,
    /// `raw / null mean`; `None` when the null mean is zero.
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureTable {
    pub entries: Vec<MeasureEntry>,
}

impl MeasureTable {
    pub fn get(&self, kind: MeasureKind, target: Target) -> Option<&MeasureEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.target == target)
    }

    /// Degenerate normalizations, one error per affected target.
    pub fn normalization_errors(&self, sys: &SystemPartition) -> Vec<Error> {
        self.entries
            .iter()
            .filter(|e| e.normalized.is_none())
            .map(|e| Error::NormalizationDegenerate(format!("{} {}", e.kind.name(), e.target.label(sys))))
            .collect()
    }
}

fn check_shapes(cas: &[CommunityAssignment], sys: &SystemPartition) -> Result<()> {
    let first = cas.first().ok_or_else(|| Error::EmptyInput("no community assignments".into()))?;
    for (r, ca) in cas.iter().enumerate() {
        if ca.n_layers() != first.n_layers() || ca.n_nodes() != first.n_nodes() {
            return Err(Error::ShapeMismatch(format!("run {r} differs in shape from run 0")));
        }
    }
    sys.check(first.n_nodes())
}

/// Each measure per run, averaged over runs in run order. Normalized values
/// are left empty.
pub fn ensemble_measures(cas: &[CommunityAssignment], sys: &SystemPartition) -> Result<MeasureTable> {
    check_shapes(cas, sys)?;
    let mut sum: Option<Vec<f64>> = None;
    for ca in cas {
        let v = measure_vector(ca, sys)?;
        match sum.as_mut() {
            None => sum = Some(v),
            Some(s) => s.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
        }
    }
    let r = cas.len() as f64;
    let entries = measure_layout(sys)
        .into_iter()
        .zip(sum.expect("non-empty"))
        .map(|((kind, target), s)| MeasureEntry {
            kind,
            target,
            raw: s / r,
            normalized: None,
        })
        .collect();
    Ok(MeasureTable { entries })
}
