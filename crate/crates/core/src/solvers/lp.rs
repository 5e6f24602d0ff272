use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::GapInstance;

use super::simplex::{maximize, LinearProgram};

pub const DEFAULT_LP_VAR_LIMIT: usize = 20_000;
/// Tableau cells allowed regardless of the variable count (about 1 GiB).
const CELL_LIMIT: usize = 1 << 27;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapLpSolution {
    pub value: f64,
    /// Fractional assignment `y[i][j]`, zero for pairs that do not fit.
    pub y: Vec<Vec<f64>>,
    /// Multipliers of the item rows `sum_j y_ij <= 1`.
    pub item_duals: Vec<f64>,
    /// Multipliers of the capacity rows.
    pub knapsack_duals: Vec<f64>,
    pub pivots: usize,
}

/// LP relaxation of the GAP with the default size limit.
pub fn gap_lp(inst: &GapInstance) -> Result<GapLpSolution> {
    gap_lp_with_limit(inst, DEFAULT_LP_VAR_LIMIT)
}

pub fn gap_lp_with_limit(inst: &GapInstance, var_limit: usize) -> Result<GapLpSolution> {
    let (n, m) = (inst.n(), inst.m());
    let mut var_of = vec![usize::MAX; n * m];
    let mut objective = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if inst.fits(i, j) {
                var_of[i * m + j] = objective.len();
                objective.push(inst.value(i, j));
            }
        }
    }
    let nv = objective.len();
    let nr = n + m;
    if nv > var_limit || (nr + 1).saturating_mul(nv + nr + 1) > CELL_LIMIT {
        return Err(Error::LpTooLarge {
            vars: nv,
            limit: var_limit,
        });
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nr];
    for i in 0..n {
        for j in 0..m {
            let k = var_of[i * m + j];
            if k != usize::MAX {
                rows[i].push((k, 1.0));
                rows[n + j].push((k, inst.weight(i, j)));
            }
        }
    }
    let mut rhs = vec![1.0; n];
    rhs.extend_from_slice(inst.capacities());
    let sol = maximize(&LinearProgram {
        num_vars: nv,
        objective,
        rows,
        rhs,
    })?;
    let y = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| match var_of[i * m + j] {
                    usize::MAX => 0.0,
                    k => sol.x[k],
                })
                .collect()
        })
        .collect();
    Ok(GapLpSolution {
        value: sol.value,
        y,
        item_duals: sol.duals[..n].to_vec(),
        knapsack_duals: sol.duals[n..].to_vec(),
        pivots: sol.pivots,
    })
}
