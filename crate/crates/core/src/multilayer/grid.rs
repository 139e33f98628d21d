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

//! Stability-driven choice of (γ, ω).

use serde::{Deserialize, Serialize};

use super::{build_supra, partition_similarity, run_ensemble, ModularityParams};
use crate::connectivity::DynamicConnectivity;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub gamma: f64,
    pub omega: f64,
    /// Mean pairwise partition similarity across restarts.
    pub stability: f64,
    /// True when every run put all node-layers in one community.
    pub trivial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ModularityParams,
    pub cells: Vec<GridCell>,
}

fn mean_pairwise_similarity(runs: &[super::CommunityAssignment]) -> Result<f64> {
    if runs.len() < 2 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..runs.len() {
        for j in (i + 1)..runs.len() {
            total += partition_similarity(&runs[i], &runs[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Evaluate every (γ, ω) cell and pick the most stable one.
///
/// Cells whose runs all collapse to a single community are only eligible when
/// every cell does. Ties go to the smaller γ, then the smaller ω.
pub fn grid_search_detailed(
    dfc: &DynamicConnectivity,
    gamma_grid: &[f64],
    omega_grid: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if gamma_grid.is_empty() || omega_grid.is_empty() {
        return Err(invalid("grid search needs non-empty gamma and omega grids"));
    }
    let mut cells = Vec::with_capacity(gamma_grid.len() * omega_grid.len());
    for &gamma in gamma_grid {
        for &omega in omega_grid {
            let ml = build_supra(dfc, gamma, omega)?;
            let params = ModularityParams { gamma, omega, restarts, seed };
            let runs = run_ensemble(&ml, &params)?;
            let trivial = runs.iter().all(|r| r.n_communities() == 1);
            cells.push(GridCell {
                gamma,
                omega,
                stability: mean_pairwise_similarity(&runs)?,
                trivial,
            });
        }
    }
    let all_trivial = cells.iter().all(|c| c.trivial);
    let mut best: Option<&GridCell> = None;
    for c in cells.iter().filter(|c| all_trivial || !c.trivial) {
        best = match best {
            None => Some(c),
            Some(b) => {
                let better = c.stability > b.stability
                    || (c.stability == b.stability
                        && (c.gamma < b.gamma || (c.gamma == b.gamma && c.omega < b.omega)));
                Some(if better { c } else { b })
            }
        };
    }
    let best = best.expect("at least one eligible cell");
    Ok(GridSearchResult {
        best: ModularityParams {
            gamma: best.gamma,
            omega: best.omega,
            restarts,
            seed,
        },
        cells,
    })
}

pub fn grid_search(
    dfc: &DynamicConnectivity,
    gamma_grid: &[f64],
    omega_grid: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<ModularityParams> {
    Ok(grid_search_detailed(dfc, gamma_grid, omega_grid, restarts, seed)?.best)
}
