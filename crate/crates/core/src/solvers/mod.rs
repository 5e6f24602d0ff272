//! Exact and relaxed solvers sized for desk-scale instances.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};
use crate::instance::{assignment_value, Assignment, GapInstance};
use crate::stats::{mean_estimate, MeanEstimate};

mod bnb;
mod dp;
mod lp;
pub mod simplex;

pub use bnb::{gap_exact, gap_exact_with, ExactOptions, TieBreak};
pub use dp::kp_dp;
pub use lp::{gap_lp, gap_lp_with_limit, GapLpSolution, DEFAULT_LP_VAR_LIMIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// A node or time limit stopped the search; the assignment is the best incumbent.
    BudgetExceeded,
    /// Items exist but none of them fits anywhere.
    InfeasibleEmpty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub value: f64,
    pub assignment: Assignment,
    pub status: SolveStatus,
    pub nodes: u64,
    pub wall_time: f64,
    /// False when the tie-break pass was cut short and the assignment is an
    /// optimum but not necessarily the lexicographically smallest one.
    #[serde(default = "default_true")]
    pub canonical: bool,
}

fn default_true() -> bool {
    true
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub(crate) fn from_assignment(
        inst: &GapInstance,
        assignment: Assignment,
        status: SolveStatus,
        nodes: u64,
        wall_time: f64,
    ) -> Self {
        let value = assignment_value(inst, &assignment).expect("solver produced in-range pairs");
        SolveResult {
            value,
            assignment,
            status,
            nodes,
            wall_time,
            canonical: true,
        }
    }
}

/// Search limits. `None` means unlimited.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Budget {
    pub max_nodes: Option<u64>,
    pub max_wall_time: Option<Duration>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn nodes(n: u64) -> Self {
        Budget {
            max_nodes: Some(n),
            max_wall_time: None,
        }
    }

    pub fn time(d: Duration) -> Self {
        Budget {
            max_nodes: None,
            max_wall_time: Some(d),
        }
    }

    pub fn is_unlimited(&self) -> bool {
        self.max_nodes.is_none() && self.max_wall_time.is_none()
    }
}

/// Exact 0/1 knapsack. Uses the DP when weights are integral and the table is
/// small, branch-and-bound otherwise.
pub fn kp_exact(values: &[f64], weights: &[f64], capacity: f64, budget: &Budget) -> Result<SolveResult> {
    let inst = GapInstance::knapsack(values, weights, capacity)?;
    Ok(gap_exact(&inst, budget))
}

/// Optimum of the knapsack LP relaxation: items by density, last one split.
pub fn kp_fractional_greedy(values: &[f64], weights: &[f64], capacity: f64) -> f64 {
    assert_eq!(values.len(), weights.len());
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        (values[b] / weights[b])
            .total_cmp(&(values[a] / weights[a]))
            .then(a.cmp(&b))
    });
    let mut room = capacity;
    let mut total = 0.0;
    for i in order {
        if room <= 0.0 {
            break;
        }
        if weights[i] <= room {
            total += values[i];
            room -= weights[i];
        } else {
            total += values[i] * room / weights[i];
            room = 0.0;
        }
    }
    total
}

/// Monte Carlo estimate of the expected optimum over active sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOpt {
    pub estimate: MeanEstimate,
    pub trials: usize,
    /// Realizations whose solve hit the budget; excluded from the mean.
    pub flagged: usize,
}

/// Estimates `E_R[OPT(R)]`. `p = 1` performs a single exact solve.
pub fn expected_opt(inst: &GapInstance, p: f64, trials: usize, seed: u64, budget: &Budget) -> Result<ExpectedOpt> {
    let per = expected_opt_per_knapsack(inst, p, trials, seed, budget)?;
    Ok(ExpectedOpt {
        estimate: per.total,
        trials: per.trials,
        flagged: per.flagged,
    })
}

/// Per-knapsack decomposition of the canonical optimum, averaged over active sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerKnapsackOpt {
    pub total: MeanEstimate,
    pub per_knapsack: Vec<MeanEstimate>,
    pub trials: usize,
    pub flagged: usize,
}

pub fn expected_opt_per_knapsack(
    inst: &GapInstance,
    p: f64,
    trials: usize,
    seed: u64,
    budget: &Budget,
) -> Result<PerKnapsackOpt> {
    use rayon::prelude::*;

    crate::stochastic::check_probability(p)?;
    if trials == 0 {
        return Err(invalid_param("trials", "must be at least 1"));
    }
    let trials = if p == 1.0 { 1 } else { trials };
    let m = inst.m();
    let outcomes: Vec<Option<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let active = crate::stochastic::sample_active(inst.n(), p, crate::stochastic::trial_seed(seed, t))
                .expect("probability already checked");
            let (sub, _) = inst.restrict(&active.included);
            let res = gap_exact(&sub, budget);
            if res.status == SolveStatus::BudgetExceeded {
                return None;
            }
            let mut per = vec![0.0; m];
            for &(i, j) in res.assignment.pairs() {
                per[j] += sub.value(i, j);
            }
            Some(per)
        })
        .collect();
    let done: Vec<&Vec<f64>> = outcomes.iter().flatten().collect();
    let flagged = trials - done.len();
    let totals: Vec<f64> = done.iter().map(|v| v.iter().sum()).collect();
    let per_knapsack = (0..m)
        .map(|j| mean_estimate(&done.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect();
    Ok(PerKnapsackOpt {
        total: mean_estimate(&totals),
        per_knapsack,
        trials,
        flagged,
    })
}
