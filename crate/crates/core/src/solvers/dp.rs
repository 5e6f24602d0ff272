use std::time::Instant;

use crate::instance::{Assignment, GapInstance};

use super::{SolveResult, SolveStatus};

const MAX_CAPACITY: f64 = 1e6;
const MAX_CELLS: usize = 200_000_000;

/// Knapsack DP over integer weights for single-knapsack instances.
///
/// Returns `None` when the instance has `m != 1`, non-integral weights, a
/// capacity above 10^6 or a decision table above the cell limit. Among equal
/// optima the returned set is lexicographically smallest in the
/// item-indexed "knapsack or unassigned" order, i.e. earlier items are
/// packed whenever that keeps the optimum.
pub fn kp_dp(inst: &GapInstance) -> Option<SolveResult> {
    if inst.m() != 1 || !inst.has_integer_weights() || inst.capacity(0) > MAX_CAPACITY {
        return None;
    }
    let start = Instant::now();
    let cap = inst.capacity(0).floor() as usize;
    let n = inst.n();
    let width = cap + 1;
    if n.checked_mul(width)? > MAX_CELLS {
        return None;
    }

    // best[c]: optimum over the suffix of items processed so far with room c.
    // take bit (i, c): item i is packed in an optimum of suffix i.. at room c.
    let mut best = vec![0.0f64; width];
    let mut take = vec![0u64; (n * width).div_ceil(64)];
    for i in (0..n).rev() {
        let w = inst.weight(i, 0) as usize;
        let v = inst.value(i, 0);
        if w > cap {
            continue;
        }
        for c in (w..=cap).rev() {
            let with = v + best[c - w];
            if with >= best[c] {
                best[c] = with;
                let bit = i * width + c;
                take[bit / 64] |= 1 << (bit % 64);
            }
        }
    }

    let mut pairs = Vec::new();
    let mut c = cap;
    for i in 0..n {
        let bit = i * width + c;
        if take[bit / 64] >> (bit % 64) & 1 == 1 {
            pairs.push((i, 0));
            c -= inst.weight(i, 0) as usize;
        }
    }
    let status = if n > 0 && inst.infeasible_items().len() == n {
        SolveStatus::InfeasibleEmpty
    } else {
        SolveStatus::Optimal
    };
    Some(SolveResult::from_assignment(
        inst,
        Assignment::from_pairs(pairs),
        status,
        0,
        start.elapsed().as_secs_f64(),
    ))
}
