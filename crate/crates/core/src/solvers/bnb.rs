//! Depth-first branch-and-bound for the GAP.
//!
//! The upper bound at a node is the current value plus the smallest of
//! three relaxations of the free items:
//!
//! - sum over items of their best value in a bin with enough room,
//! - one fractional knapsack per bin on the raw values,
//! - the Lagrangian bound relaxing "each item at most once" with root
//!   multipliers from subgradient optimization.
//!
//! The search runs twice. The first pass proves the optimal value `V*` with
//! items ordered by density. The second pass walks items in index order and
//! bins in index order and stops at the first leaf worth `V*`, which is the
//! lexicographically smallest optimal assignment vector (unassigned sorts
//! last).

use std::time::Instant;

use crate::instance::{Assignment, GapInstance};

use super::dp::kp_dp;
use super::{Budget, SolveResult, SolveStatus};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// Return the lexicographically smallest optimal assignment.
    #[default]
    Lexicographic,
    /// Return whichever optimum the search proves first.
    FirstFound,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExactOptions {
    pub tie_break: TieBreak,
}

const FREE: usize = usize::MAX;
const SKIP: usize = usize::MAX - 1;
const TIME_CHECK_EVERY: u64 = 1024;
const SUBGRADIENT_ITERS: usize = 200;

/// Exact GAP optimum with the canonical tie-break.
pub fn gap_exact(inst: &GapInstance, budget: &Budget) -> SolveResult {
    gap_exact_with(inst, budget, ExactOptions::default())
}

pub fn gap_exact_with(inst: &GapInstance, budget: &Budget, opts: ExactOptions) -> SolveResult {
    let start = Instant::now();
    let n = inst.n();
    if n == 0 {
        return SolveResult::from_assignment(inst, Assignment::new(), SolveStatus::Optimal, 0, 0.0);
    }
    if inst.infeasible_items().len() == n {
        return SolveResult::from_assignment(
            inst,
            Assignment::new(),
            SolveStatus::InfeasibleEmpty,
            0,
            start.elapsed().as_secs_f64(),
        );
    }
    if let Some(mut r) = kp_dp(inst) {
        r.wall_time = start.elapsed().as_secs_f64();
        return r;
    }

    let mut s = Search::new(inst, *budget, start);
    s.run_value_pass();
    let phase1_complete = !s.stopped;
    let mut canonical = true;
    if phase1_complete && opts.tie_break == TieBreak::Lexicographic {
        s.run_lex_pass();
        if s.stopped || !s.found {
            // Keep the proven optimum from the first pass.
            canonical = false;
        }
    }
    let status = if phase1_complete {
        SolveStatus::Optimal
    } else {
        SolveStatus::BudgetExceeded
    };
    let mut r = SolveResult::from_assignment(
        inst,
        Assignment::from_vector(&s.best),
        status,
        s.nodes,
        start.elapsed().as_secs_f64(),
    );
    r.canonical = canonical && phase1_complete && opts.tie_break == TieBreak::Lexicographic;
    r
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pass {
    Value,
    Lex,
}

struct Search<'a> {
    inst: &'a GapInstance,
    n: usize,
    m: usize,
    lambda: Vec<f64>,
    use_lagrangian: bool,
    /// Per bin: fitting items with positive value, by density descending.
    plain_lists: Vec<Vec<usize>>,
    /// Per bin: fitting items with positive reduced value, by reduced density.
    lagr_lists: Vec<Vec<(usize, f64)>>,

    order: Vec<usize>,
    bin_order: Vec<usize>,

    decision: Vec<usize>,
    residual: Vec<f64>,
    value: f64,
    /// Residual and value before item `i` was assigned; restoring them
    /// avoids drift from adding and subtracting the same weight.
    saved: Vec<(f64, f64)>,

    best_value: f64,
    best: Vec<Option<usize>>,
    target: f64,
    found: bool,

    budget: Budget,
    start: Instant,
    nodes: u64,
    stopped: bool,
}

fn tolerance(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

fn by_density_desc(a: (usize, f64, f64), b: (usize, f64, f64)) -> std::cmp::Ordering {
    (b.1 / b.2).total_cmp(&(a.1 / a.2)).then(a.0.cmp(&b.0))
}

impl<'a> Search<'a> {
    fn new(inst: &'a GapInstance, budget: Budget, start: Instant) -> Self {
        let (n, m) = (inst.n(), inst.m());
        let mut plain_lists = Vec::with_capacity(m);
        for j in 0..m {
            let mut items: Vec<(usize, f64, f64)> = (0..n)
                .filter(|&i| inst.fits(i, j) && inst.value(i, j) > 0.0)
                .map(|i| (i, inst.value(i, j), inst.weight(i, j)))
                .collect();
            items.sort_by(|&a, &b| by_density_desc(a, b));
            plain_lists.push(items.into_iter().map(|t| t.0).collect());
        }

        let mut s = Search {
            inst,
            n,
            m,
            lambda: vec![0.0; n],
            use_lagrangian: false,
            plain_lists,
            lagr_lists: Vec::new(),
            order: Vec::new(),
            bin_order: Vec::new(),
            decision: vec![FREE; n],
            residual: inst.capacities().to_vec(),
            value: 0.0,
            saved: vec![(0.0, 0.0); n],
            best_value: 0.0,
            best: vec![None; n],
            target: 0.0,
            found: false,
            budget,
            start,
            nodes: 0,
            stopped: false,
        };
        s.greedy_incumbent();
        if m > 1 {
            s.lambda = subgradient_multipliers(inst, s.best_value, SUBGRADIENT_ITERS);
            s.lagr_lists = (0..m)
                .map(|j| {
                    let mut items: Vec<(usize, f64, f64)> = (0..n)
                        .filter(|&i| inst.fits(i, j))
                        .map(|i| (i, inst.value(i, j) - s.lambda[i], inst.weight(i, j)))
                        .filter(|t| t.1 > 0.0)
                        .collect();
                    items.sort_by(|&a, &b| by_density_desc(a, b));
                    items.into_iter().map(|t| (t.0, t.1)).collect()
                })
                .collect();
            s.use_lagrangian = true;
        }
        s
    }

    fn density_key(&self, i: usize) -> f64 {
        (0..self.m)
            .filter(|&j| self.inst.fits(i, j))
            .map(|j| self.inst.value(i, j) / self.inst.weight(i, j))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn greedy_incumbent(&mut self) {
        let inst = self.inst;
        let mut order: Vec<usize> = (0..self.n).collect();
        let keys: Vec<f64> = order.iter().map(|&i| self.density_key(i)).collect();
        order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
        let mut room = inst.capacities().to_vec();
        let mut best = vec![None; self.n];
        for &i in &order {
            let pick = (0..self.m)
                .filter(|&j| inst.weight(i, j) <= room[j] && inst.value(i, j) > 0.0)
                .max_by(|&a, &b| inst.value(i, a).total_cmp(&inst.value(i, b)).then(b.cmp(&a)));
            if let Some(j) = pick {
                room[j] -= inst.weight(i, j);
                best[i] = Some(j);
            }
        }
        self.best_value = best
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| inst.value(i, j)))
            .sum();
        self.best = best;
    }

    fn reset_state(&mut self) {
        self.decision.fill(FREE);
        self.residual.copy_from_slice(self.inst.capacities());
        self.value = 0.0;
    }

    fn run_value_pass(&mut self) {
        let m = self.m;
        let mut order: Vec<usize> = (0..self.n).collect();
        let keys: Vec<f64> = order.iter().map(|&i| self.density_key(i)).collect();
        order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
        self.order = order;
        let inst = self.inst;
        self.bin_order = (0..self.n)
            .flat_map(|i| {
                let mut bins: Vec<usize> = (0..m).collect();
                bins.sort_by(|&a, &b| inst.value(i, b).total_cmp(&inst.value(i, a)).then(a.cmp(&b)));
                bins
            })
            .collect();
        self.reset_state();
        self.dfs(Pass::Value);
    }

    fn run_lex_pass(&mut self) {
        self.order = (0..self.n).collect();
        self.bin_order = (0..self.n).flat_map(|_| 0..self.m).collect();
        self.target = self.best_value;
        self.found = false;
        self.reset_state();
        self.dfs(Pass::Lex);
    }

    #[inline]
    fn assign(&mut self, i: usize, j: usize) {
        self.decision[i] = j;
        self.saved[i] = (self.residual[j], self.value);
        self.residual[j] -= self.inst.weight(i, j);
        self.value += self.inst.value(i, j);
    }

    #[inline]
    fn undo(&mut self, i: usize) {
        let j = self.decision[i];
        if j < self.m {
            (self.residual[j], self.value) = self.saved[i];
        }
        self.decision[i] = FREE;
    }

    fn record_current(&mut self) {
        for i in 0..self.n {
            let d = self.decision[i];
            self.best[i] = if d < self.m { Some(d) } else { None };
        }
        // Re-sum in item order so the stored value matches assignment_value.
        self.best_value = self
            .best
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| self.inst.value(i, j)))
            .sum();
    }

    fn out_of_budget(&mut self) -> bool {
        if self.stopped {
            return true;
        }
        if let Some(limit) = self.budget.max_nodes {
            if self.nodes > limit {
                self.stopped = true;
            }
        }
        if let Some(limit) = self.budget.max_wall_time {
            if self.nodes % TIME_CHECK_EVERY == 0 && self.start.elapsed() >= limit {
                self.stopped = true;
            }
        }
        self.stopped
    }

    /// Upper bound on the value still obtainable from free items.
    fn bound(&self) -> f64 {
        let inst = self.inst;
        let mut item_bound = 0.0;
        let mut lambda_sum = 0.0;
        for i in 0..self.n {
            if self.decision[i] != FREE {
                continue;
            }
            let mut best = -1.0;
            for j in 0..self.m {
                if inst.weight(i, j) <= self.residual[j] && inst.value(i, j) > best {
                    best = inst.value(i, j);
                }
            }
            if best >= 0.0 {
                item_bound += best;
                lambda_sum += self.lambda[i];
            }
        }
        if item_bound == 0.0 {
            return 0.0;
        }

        let mut plain = 0.0;
        for j in 0..self.m {
            plain += self.fractional(j, self.plain_lists[j].iter().map(|&i| (i, inst.value(i, j))));
        }
        let mut b = item_bound.min(plain);
        if self.use_lagrangian {
            let mut lagr = lambda_sum;
            for j in 0..self.m {
                lagr += self.fractional(j, self.lagr_lists[j].iter().copied());
            }
            b = b.min(lagr);
        }
        b
    }

    /// Fractional knapsack on bin `j`'s residual over free items from a
    /// density-sorted list of (item, profit).
    #[inline]
    fn fractional(&self, j: usize, list: impl Iterator<Item = (usize, f64)>) -> f64 {
        let mut room = self.residual[j];
        let mut total = 0.0;
        for (i, profit) in list {
            if room <= 0.0 {
                break;
            }
            if self.decision[i] != FREE {
                continue;
            }
            let w = self.inst.weight(i, j);
            if w > self.residual[j] {
                continue;
            }
            if w <= room {
                total += profit;
                room -= w;
            } else {
                total += profit * room / w;
                room = 0.0;
            }
        }
        total
    }

    /// Visits the node whose first `pos` positions are decided. Returns true
    /// when its children should be explored.
    fn enter(&mut self, pos: usize, pass: Pass) -> bool {
        self.nodes += 1;
        if self.out_of_budget() {
            return false;
        }
        match pass {
            Pass::Value => {
                if self.value > self.best_value + tolerance(self.best_value) {
                    self.record_current();
                }
                if pos == self.n {
                    return false;
                }
                let b = self.bound();
                b > 0.0 && self.value + b > self.best_value + tolerance(self.best_value)
            }
            Pass::Lex => {
                let goal = self.target - tolerance(self.target);
                if self.value >= goal {
                    // Extending with first-fit keeps the value and is the
                    // first leaf of this subtree in lexicographic order.
                    for p in pos..self.n {
                        let i = self.order[p];
                        if let Some(j) = (0..self.m).find(|&j| self.inst.weight(i, j) <= self.residual[j]) {
                            self.assign(i, j);
                        } else {
                            self.decision[i] = SKIP;
                        }
                    }
                    self.record_current();
                    self.found = true;
                    return false;
                }
                if pos == self.n {
                    return false;
                }
                self.value + self.bound() >= goal
            }
        }
    }

    fn dfs(&mut self, pass: Pass) {
        if !self.enter(0, pass) {
            return;
        }
        // (position, next choice); choice c < m is the c-th bin in bin_order, c == m is skip.
        let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
        while let Some(&(pos, cursor)) = stack.last() {
            let item = self.order[pos];
            if self.decision[item] != FREE {
                self.undo(item);
            }
            if self.stopped || self.found {
                break;
            }
            let mut c = cursor;
            let mut chosen = false;
            while c <= self.m {
                let choice = c;
                c += 1;
                if choice < self.m {
                    let j = self.bin_order[item * self.m + choice];
                    if self.inst.weight(item, j) <= self.residual[j] {
                        self.assign(item, j);
                        chosen = true;
                        break;
                    }
                } else {
                    self.decision[item] = SKIP;
                    chosen = true;
                }
            }
            let top = stack.len() - 1;
            stack[top].1 = c;
            if !chosen {
                stack.pop();
                continue;
            }
            if self.enter(pos + 1, pass) {
                stack.push((pos + 1, 0));
            }
        }
    }
}

/// Multipliers for the item constraints minimizing the Lagrangian bound,
/// by subgradient descent with Polyak steps toward `lower_bound`.
fn subgradient_multipliers(inst: &GapInstance, lower_bound: f64, iters: usize) -> Vec<f64> {
    let n = inst.n();
    let mut lambda = vec![0.0; n];
    let mut best = lambda.clone();
    let mut best_val = f64::INFINITY;
    let mut theta = 2.0;
    let mut stall = 0;
    let mut g = vec![0.0; n];
    for _ in 0..iters {
        let val = lagrangian(inst, &lambda, &mut g);
        if val < best_val - 1e-12 * best_val.abs().max(1.0) {
            best_val = val;
            best.copy_from_slice(&lambda);
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                theta /= 2.0;
                stall = 0;
            }
        }
        let norm2: f64 = g.iter().map(|x| x * x).sum();
        let gap = val - lower_bound;
        if norm2 < 1e-12 || theta < 1e-4 || gap <= tolerance(lower_bound) {
            break;
        }
        let step = theta * gap / norm2;
        for (l, gi) in lambda.iter_mut().zip(&g) {
            *l = (*l - step * gi).max(0.0);
        }
    }
    best
}

/// Lagrangian bound for multipliers `lambda`; writes the subgradient into `g`.
fn lagrangian(inst: &GapInstance, lambda: &[f64], g: &mut [f64]) -> f64 {
    let (n, m) = (inst.n(), inst.m());
    let mut total = 0.0;
    for i in 0..n {
        let fits_somewhere = (0..m).any(|j| inst.fits(i, j));
        g[i] = if fits_somewhere { 1.0 } else { 0.0 };
        if fits_somewhere {
            total += lambda[i];
        }
    }
    let mut items: Vec<(usize, f64, f64)> = Vec::with_capacity(n);
    for j in 0..m {
        items.clear();
        items.extend(
            (0..n)
                .filter(|&i| inst.fits(i, j))
                .map(|i| (i, inst.value(i, j) - lambda[i], inst.weight(i, j)))
                .filter(|t| t.1 > 0.0),
        );
        items.sort_by(|&a, &b| by_density_desc(a, b));
        let mut room = inst.capacity(j);
        for &(i, profit, w) in &items {
            if room <= 0.0 {
                break;
            }
            let x = if w <= room { 1.0 } else { room / w };
            total += profit * x;
            room -= w * x;
            g[i] -= x;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ProblemKind;
    use std::time::Duration;

    fn diagonal() -> GapInstance {
        GapInstance::new(
            ProblemKind::Gap,
            vec![vec![9.0, 1.0], vec![1.0, 9.0]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn diagonal_example() {
        let r = gap_exact(&diagonal(), &Budget::unlimited());
        assert_eq!(r.value, 18.0);
        assert_eq!(r.assignment.pairs(), &[(0, 0), (1, 1)]);
        assert!(r.canonical);
    }

    #[test]
    fn continuous_knapsack_uses_search() {
        let inst = GapInstance::knapsack(&[10.0, 6.0, 5.0], &[5.0, 4.0, 3.5], 7.5).unwrap();
        let r = gap_exact(&inst, &Budget::unlimited());
        assert_eq!(r.value, 11.0);
        assert_eq!(r.assignment.items(), vec![1, 2]);
    }

    #[test]
    fn lexicographic_tie_break() {
        // Every single item is worth the same; one bin holds one item.
        let inst = GapInstance::new(
            ProblemKind::Gap,
            vec![vec![4.0, 4.0]; 3],
            vec![vec![1.5, 1.5]; 3],
            vec![2.0, 2.0],
        )
        .unwrap();
        let r = gap_exact(&inst, &Budget::unlimited());
        assert_eq!(r.value, 8.0);
        assert_eq!(r.assignment.pairs(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn infeasible_and_empty() {
        let inst = GapInstance::knapsack(&[3.0], &[5.0], 4.0).unwrap();
        let r = gap_exact(&inst, &Budget::unlimited());
        assert_eq!(r.status, SolveStatus::InfeasibleEmpty);
        assert_eq!(r.value, 0.0);

        let (empty, _) = inst.restrict(&crate::ItemSet::empty());
        assert_eq!(gap_exact(&empty, &Budget::unlimited()).status, SolveStatus::Optimal);
    }

    #[test]
    fn node_budget_stops_and_keeps_incumbent() {
        let p = crate::gen::GenParams::new(60, 2, 0.5, 3.0, 8);
        let inst = crate::gen::generate(&p).unwrap();
        let r = gap_exact(&inst, &Budget::nodes(5));
        assert_eq!(r.status, SolveStatus::BudgetExceeded);
        assert!(r.value > 0.0);
        assert!(crate::instance::validate_assignment(&inst, &r.assignment).unwrap());
        let full = gap_exact(&inst, &Budget::unlimited());
        assert!(full.value >= r.value);
    }

    #[test]
    fn zero_time_budget_returns_greedy_incumbent() {
        let p = crate::gen::GenParams::new(200, 2, 0.0, 5.0, 3);
        let inst = crate::gen::generate(&p).unwrap();
        let r = gap_exact_with(
            &inst,
            &Budget::time(Duration::ZERO),
            ExactOptions {
                tie_break: TieBreak::FirstFound,
            },
        );
        assert!(r.value > 0.0);
        assert!(crate::instance::validate_assignment(&inst, &r.assignment).unwrap());
    }

    #[test]
    fn lagrangian_bound_is_valid() {
        let p = crate::gen::GenParams::new(30, 3, -0.3, 2.0, 4);
        let inst = crate::gen::generate(&p).unwrap();
        let opt = gap_exact(&inst, &Budget::unlimited()).value;
        let lambda = subgradient_multipliers(&inst, 0.0, 100);
        let mut g = vec![0.0; inst.n()];
        assert!(lagrangian(&inst, &lambda, &mut g) >= opt - 1e-9);
        assert!(lagrangian(&inst, &vec![0.0; inst.n()], &mut g) >= opt - 1e-9);
    }
}
