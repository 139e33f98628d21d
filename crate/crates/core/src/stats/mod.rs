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

//! Group-level inference: covariate-adjusted two-sample t-tests, one-way
//! ANOVA, post-hoc contrasts and multiple-comparison corrections.

mod correction;
mod dist;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use correction::{bonferroni, fdr_bh};
pub use dist::{f_upper_p, t_two_sided_p};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Control,
    Mild,
    Severe,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Control, Group::Mild, Group::Severe];

    pub fn name(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Mild => "mild",
            Group::Severe => "severe",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Group::Control => 0,
            Group::Mild => 1,
            Group::Severe => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub id: String,
    pub group: Group,
    pub age: f64,
    /// 0/1 indicator.
    pub sex: u8,
    /// Mean framewise displacement in mm.
    pub fd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMetadata {
    pub subjects: Vec<SubjectMeta>,
}

impl CohortMetadata {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(invalid(format!("duplicate subject id `{}`", s.id)));
            }
            if !(s.age.is_finite() && s.fd.is_finite()) || s.sex > 1 {
                return Err(invalid(format!("subject `{}` has invalid covariates", s.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.subjects.iter().map(|s| s.group).collect()
    }

    pub fn count(&self, g: Group) -> usize {
        self.subjects.iter().filter(|s| s.group == g).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// t or F.
    pub statistic: f64,
    pub p: f64,
    /// Residual (denominator) degrees of freedom.
    pub dof: f64,
    /// Numerator degrees of freedom for F tests.
    pub dof_num: Option<f64>,
    pub contrast: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestKind {
    /// Pooled-variance OLS with covariates.
    #[default]
    Pooled,
    /// Welch test on covariate-residualized values.
    Welch,
}

struct OlsFit {
    beta: DVector<f64>,
    residuals: DVector<f64>,
    xtx_inv: DMatrix<f64>,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: &[&str]) -> Result<OlsFit> {
    let p = x.ncols();
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) || x.nrows() < p {
        return Err(Error::Collinearity(format!("design columns [{}] are not full rank", names.join(", "))));
    }
    let xtx = x.transpose() * x;
    let xtx_inv = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Collinearity("X'X is not positive definite".into()))?
        .inverse();
    let beta = &xtx_inv * (x.transpose() * y);
    let residuals = y - x * &beta;
    Ok(OlsFit {
        beta,
        residuals,
        xtx_inv,
    })
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Covariate columns (age, sex, fd) of the given subjects, dropping any that
/// are constant over them.
fn covariate_columns(meta: &CohortMetadata, idx: &[usize]) -> Vec<(&'static str, Vec<f64>)> {
    let cols: [(&'static str, Vec<f64>); 3] = [
        ("age", idx.iter().map(|i| meta.subjects[*i].age).collect()),
        ("sex", idx.iter().map(|i| f64::from(meta.subjects[*i].sex)).collect()),
        ("fd", idx.iter().map(|i| meta.subjects[*i].fd).collect()),
    ];
    cols.into_iter().filter(|(_, c)| !is_constant(c)).collect()
}

fn pair_indices(meta: &CohortMetadata, y: &[f64], groups: (Group, Group)) -> Result<(Vec<usize>, Vec<usize>)> {
    if y.len() != meta.len() {
        return Err(Error::ShapeMismatch(format!("{} values for {} subjects", y.len(), meta.len())));
    }
    if groups.0 == groups.1 {
        return Err(invalid("contrast needs two different groups"));
    }
    let a: Vec<usize> = (0..meta.len()).filter(|i| meta.subjects[*i].group == groups.0).collect();
    let b: Vec<usize> = (0..meta.len()).filter(|i| meta.subjects[*i].group == groups.1).collect();
    for (g, v) in [(groups.0, &a), (groups.1, &b)] {
        if v.len() < 2 {
            return Err(Error::SampleSize(format!("group {} has {} subjects, need 2", g.name(), v.len())));
        }
    }
    if let Some(i) = a.iter().chain(&b).find(|i| !y[**i].is_finite()) {
        return Err(invalid(format!("non-finite value for subject `{}`", meta.subjects[*i].id)));
    }
    Ok((a, b))
}

fn contrast_name(groups: (Group, Group)) -> String {
    format!("{}-vs-{}", groups.0.name(), groups.1.name())
}

/// OLS of `y` on `[1, group indicator, age, sex, fd]` over the subjects of
/// the two groups; t and two-sided p for the indicator (1 = second group).
/// Covariates that are constant over those subjects are dropped.
pub fn adjusted_ttest(y: &[f64], meta: &CohortMetadata, groups: (Group, Group)) -> Result<TestResult> {
    let (a, b) = pair_indices(meta, y, groups)?;
    let idx: Vec<usize> = a.iter().chain(&b).copied().collect();
    let covs = covariate_columns(meta, &idx);
    let n = idx.len();
    let p = 2 + covs.len();
    if n <= p {
        return Err(Error::SampleSize(format!("{n} subjects for {p} regression parameters")));
    }
    let mut names = vec!["intercept", "group"];
    names.extend(covs.iter().map(|(n, _)| *n));
    let x = DMatrix::from_fn(n, p, |r, c| match c {
        0 => 1.0,
        1 => f64::from(u8::from(r >= a.len())),
        _ => covs[c - 2].1[r],
    });
    let yv = DVector::from_iterator(n, idx.iter().map(|i| y[*i]));
    let fit = ols(&x, &yv, &names)?;
    let dof = (n - p) as f64;
    let rss = fit.residuals.norm_squared();
    let coef = fit.beta[1];
    let scale = yv.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let statistic = if rss <= 1e-24 * scale {
        if coef.abs() <= 1e-12 * scale.sqrt() {
            0.0
        } else {
            coef.signum() * f64::INFINITY
        }
    } else {
        let se = (rss / dof * fit.xtx_inv[(1, 1)]).sqrt();
        coef / se
    };
    Ok(TestResult {
        statistic,
        p: t_two_sided_p(statistic, dof),
        dof,
        dof_num: None,
        contrast: contrast_name(groups),
    })
}

/// Welch's unequal-variance t-test of `b` against `a` (positive when `b`
/// has the larger mean).
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::SampleSize("welch test needs 2 values per group".into()));
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, var)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let statistic = if ma == mb { 0.0 } else { (mb - ma).signum() * f64::INFINITY };
        return Ok(TestResult {
            statistic,
            p: if ma == mb { 1.0 } else { 0.0 },
            dof: na + nb - 2.0,
            dof_num: None,
            contrast: "welch".into(),
        });
    }
    let statistic = (mb - ma) / se2.sqrt();
    let dof = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    Ok(TestResult {
        statistic,
        p: t_two_sided_p(statistic, dof),
        dof,
        dof_num: None,
        contrast: "welch".into(),
    })
}

/// Welch test after regressing the covariates (not the group) out of `y`.
pub fn residualized_welch(y: &[f64], meta: &CohortMetadata, groups: (Group, Group)) -> Result<TestResult> {
    let (a, b) = pair_indices(meta, y, groups)?;
    let idx: Vec<usize> = a.iter().chain(&b).copied().collect();
    let covs = covariate_columns(meta, &idx);
    let n = idx.len();
    let x = DMatrix::from_fn(n, 1 + covs.len(), |r, c| if c == 0 { 1.0 } else { covs[c - 1].1[r] });
    let yv = DVector::from_iterator(n, idx.iter().map(|i| y[*i]));
    let fit = ols(&x, &yv, &["intercept", "age", "sex", "fd"][..1 + covs.len()])?;
    let res: Vec<f64> = fit.residuals.iter().copied().collect();
    let mut out = welch_ttest(&res[..a.len()], &res[a.len()..])?;
    out.contrast = contrast_name(groups);
    Ok(out)
}

/// One-way ANOVA over `labels` (level index per observation).
///
/// Zero within-group variance with a non-zero between-group spread reports
/// `F = +inf, p = 0`; all-equal data reports `F = 0, p = 1`.
pub fn oneway_anova(y: &[f64], labels: &[usize]) -> Result<TestResult> {
    if y.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} values for {} labels", y.len(), labels.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite observation"));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::SampleSize("ANOVA needs at least 2 levels".into()));
    }
    let mut count = vec![0usize; k];
    let mut sum = vec![0.0; k];
    for (v, l) in y.iter().zip(labels) {
        count[*l] += 1;
        sum[*l] += v;
    }
    if let Some(l) = count.iter().position(|c| *c < 2) {
        return Err(Error::SampleSize(format!("level {l} has {} observations, need 2", count[l])));
    }
    let n = y.len();
    let grand = y.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = sum.iter().zip(&count).map(|(s, c)| s / *c as f64).collect();
    let ss_between: f64 = means.iter().zip(&count).map(|(m, c)| *c as f64 * (m - grand).powi(2)).sum();
    let ss_within: f64 = y.iter().zip(labels).map(|(v, l)| (v - means[*l]).powi(2)).sum();
    let d1 = (k - 1) as f64;
    let d2 = (n - k) as f64;
    let scale = y.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
    let (statistic, p) = if scale == 0.0 || ss_between <= 1e-14 * scale {
        (0.0, 1.0)
    } else if ss_within <= 1e-14 * scale {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_between / d1) / (ss_within / d2);
        (f, f_upper_p(f, d1, d2))
    };
    Ok(TestResult {
        statistic,
        p,
        dof: d2,
        dof_num: Some(d1),
        contrast: "anova".into(),
    })
}

/// Three-level ANOVA over the cohort's groups.
pub fn group_anova(y: &[f64], meta: &CohortMetadata) -> Result<TestResult> {
    let labels: Vec<usize> = meta.subjects.iter().map(|s| s.group.index()).collect();
    oneway_anova(y, &labels)
}

/// The three pairwise contrasts, in this order.
pub const POSTHOC_PAIRS: [(Group, Group); 3] = [
    (Group::Control, Group::Mild),
    (Group::Control, Group::Severe),
    (Group::Mild, Group::Severe),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Posthoc {
    /// The ANOVA gate was enabled and not passed.
    GateSkipped { anova: TestResult },
    Ran { anova: Option<TestResult>, tests: Vec<TestResult> },
}

impl Posthoc {
    pub fn tests(&self) -> &[TestResult] {
        match self {
            Posthoc::GateSkipped { .. } => &[],
            Posthoc::Ran { tests, .. } => tests,
        }
    }
}

/// Control–mild, control–severe and mild–severe tests. With `gate =
/// Some(alpha)` they only run when the three-level ANOVA has `p < alpha`.
pub fn posthoc_ttests(y: &[f64], meta: &CohortMetadata, gate: Option<f64>, kind: TTestKind) -> Result<Posthoc> {
    let anova = match gate {
        Some(alpha) => {
            let a = group_anova(y, meta)?;
            if !(a.p < alpha) {
                return Ok(Posthoc::GateSkipped { anova: a });
            }
            Some(a)
        }
        None => None,
    };
    let tests = POSTHOC_PAIRS
        .iter()
        .map(|g| match kind {
            TTestKind::Pooled => adjusted_ttest(y, meta, *g),
            TTestKind::Welch => residualized_welch(y, meta, *g),
        })
        .collect::<Result<_>>()?;
    Ok(Posthoc::Ran { anova, tests })
}
