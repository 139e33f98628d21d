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

//! Multiple-comparison corrections.

use crate::error::{invalid, Error, Result};

fn check(pvals: &[f64]) -> Result<()> {
    if pvals.is_empty() {
        return Err(Error::EmptyInput("no p-values to correct".into()));
    }
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("p-value {p} outside [0, 1]")));
    }
    Ok(())
}

/// Benjamini–Hochberg step-up at level `q`. Returns the rejection mask and
/// adjusted p-values in input order.
pub fn fdr_bh(pvals: &[f64], q: f64) -> Result<(Vec<bool>, Vec<f64>)> {
    check(pvals)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("FDR level {q} must lie in (0, 1)")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| pvals[*a].total_cmp(&pvals[*b]).then(a.cmp(b)));

    let mut cutoff = 0;
    for (rank, &i) in order.iter().enumerate() {
        if pvals[i] <= (rank + 1) as f64 * q / m as f64 {
            cutoff = rank + 1;
        }
    }
    let mut reject = vec![false; m];
    for &i in &order[..cutoff] {
        reject[i] = true;
    }

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(pvals[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok((reject, adjusted))
}

/// Bonferroni: adjusted `min(1, m·p)`, reject when adjusted `< alpha`.
pub fn bonferroni(pvals: &[f64], alpha: f64) -> Result<(Vec<bool>, Vec<f64>)> {
    check(pvals)?;
    let m = pvals.len() as f64;
    let adjusted: Vec<f64> = pvals.iter().map(|p| (p * m).min(1.0)).collect();
    let reject = adjusted.iter().map(|p| *p < alpha).collect();
    Ok((reject, adjusted))
}
