//! Exact and relaxed solvers against enumeration.

mod common;

use common::{brute_force_gap, brute_force_kp, close, small_instance, small_knapsack};
use knapsparse::instance::{assignment_value, validate_assignment};
use knapsparse::solvers::{
    gap_exact, gap_exact_with, gap_lp, kp_exact, kp_fractional_greedy, Budget, ExactOptions, TieBreak,
};
use knapsparse::{Assignment, GapInstance, ItemSet, ProblemKind};

#[test]
fn gap_exact_matches_enumeration() {
    for seed in 0..150 {
        let inst = small_instance(seed, 10, 3);
        let res = gap_exact(&inst, &Budget::unlimited());
        assert!(res.is_optimal());
        assert!(validate_assignment(&inst, &res.assignment).unwrap());
        let truth = brute_force_gap(&inst);
        assert!(close(res.value, truth), "seed {seed}: {} vs {truth}", res.value);
    }
}

#[test]
fn kp_exact_matches_subset_enumeration() {
    for seed in 0..100 {
        let inst = small_knapsack(1000 + seed, 14);
        let v: Vec<f64> = (0..inst.n()).map(|i| inst.value(i, 0)).collect();
        let w: Vec<f64> = (0..inst.n()).map(|i| inst.weight(i, 0)).collect();
        let res = kp_exact(&v, &w, inst.capacity(0), &Budget::unlimited()).unwrap();
        assert!(
            close(res.value, brute_force_kp(&v, &w, inst.capacity(0))),
            "seed {seed}"
        );
    }
}

#[test]
fn integral_weights_use_the_same_optimum() {
    // Integral weights take the dynamic program; fractional ones do not.
    for seed in 0..40 {
        let base = small_knapsack(7000 + seed, 12);
        let v: Vec<f64> = (0..base.n()).map(|i| base.value(i, 0)).collect();
        let w: Vec<f64> = (0..base.n()).map(|i| base.weight(i, 0).ceil()).collect();
        let cap = base.capacity(0).floor().max(1.0);
        let inst = GapInstance::knapsack(&v, &w, cap).unwrap();
        assert!(inst.has_integer_weights());
        let res = gap_exact(&inst, &Budget::unlimited());
        assert!(close(res.value, brute_force_kp(&v, &w, cap)), "seed {seed}");
    }
}

/// Lexicographically smallest optimal assignment vector, unassigned last.
/// Counting in base m+1 with item 0 as the top digit walks vectors in
/// lexicographic order.
fn lex_min_optimum(inst: &GapInstance, best: f64) -> Vec<Option<usize>> {
    let (n, m) = (inst.n(), inst.m());
    let total = (m as u64 + 1).pow(n as u32);
    for code in 0..total {
        let mut rest = code;
        let mut digits = vec![0usize; n];
        for i in (0..n).rev() {
            digits[i] = (rest % (m as u64 + 1)) as usize;
            rest /= m as u64 + 1;
        }
        let a = Assignment::from_pairs((0..n).filter(|&i| digits[i] < m).map(|i| (i, digits[i])));
        if validate_assignment(inst, &a).unwrap() && close(assignment_value(inst, &a).unwrap(), best) {
            return a.to_vector(n);
        }
    }
    panic!("no assignment reaches {best}");
}

#[test]
fn lexicographic_tie_break_is_canonical() {
    // Equal values make ties common.
    for seed in 0..60 {
        let g = small_instance(300 + seed, 6, 2);
        let rows_v: Vec<Vec<f64>> = (0..g.n())
            .map(|i| g.value_row(i).iter().map(|v| (v / 25.0).ceil()).collect())
            .collect();
        let rows_w: Vec<Vec<f64>> = (0..g.n())
            .map(|i| g.weight_row(i).iter().map(|w| w.ceil()).collect())
            .collect();
        let caps: Vec<f64> = g.capacities().iter().map(|c| c.ceil()).collect();
        let inst = GapInstance::new(ProblemKind::Gap, rows_v, rows_w, caps).unwrap();
        let res = gap_exact(&inst, &Budget::unlimited());
        assert!(res.canonical);
        let want = lex_min_optimum(&inst, res.value);
        assert_eq!(res.assignment.to_vector(inst.n()), want, "seed {seed}");
    }
}

#[test]
fn lp_sandwich_and_greedy_agreement() {
    for seed in 0..150 {
        let inst = small_instance(5000 + seed, 10, 3);
        let lp = gap_lp(&inst).unwrap().value;
        let ip = gap_exact(&inst, &Budget::unlimited()).value;
        assert!(lp >= ip - 1e-9 * lp.max(1.0), "seed {seed}: lp {lp} < ip {ip}");
        if inst.is_individually_feasible() {
            assert!(ip >= lp / 2.0 - 1e-9, "seed {seed}: ip {ip} < lp/2 {lp}");
        }
        if inst.m() == 1 {
            let v: Vec<f64> = (0..inst.n()).map(|i| inst.value(i, 0)).collect();
            let w: Vec<f64> = (0..inst.n()).map(|i| inst.weight(i, 0)).collect();
            assert!(close(lp, kp_fractional_greedy(&v, &w, inst.capacity(0))), "seed {seed}");
        }
    }
}

#[test]
fn restriction_never_improves_the_optimum() {
    for seed in 0..60 {
        let inst = small_instance(9000 + seed, 10, 3);
        let full = brute_force_gap(&inst);
        let keep = ItemSet::new((0..inst.n()).filter(|i| (seed as usize + i) % 3 != 0), inst.n()).unwrap();
        let (sub, map) = inst.restrict(&keep);
        let res = gap_exact(&sub, &Budget::unlimited());
        assert!(res.value <= full + 1e-9);
        let back = res.assignment.remap(&map);
        assert!(validate_assignment(&inst, &back).unwrap());
        assert!(close(assignment_value(&inst, &back).unwrap(), res.value));
    }
}

#[test]
fn budget_monotone_and_deterministic() {
    for seed in 0..20 {
        let inst = small_instance(11_000 + seed, 12, 3);
        let first = ExactOptions {
            tie_break: TieBreak::FirstFound,
        };
        let mut last = f64::NEG_INFINITY;
        for nodes in [1u64, 5, 50, 500, 5000] {
            let r = gap_exact_with(&inst, &Budget::nodes(nodes), first);
            assert!(r.value >= last, "seed {seed}: {} after {last}", r.value);
            assert!(validate_assignment(&inst, &r.assignment).unwrap());
            last = r.value;
        }
        let a = gap_exact(&inst, &Budget::unlimited());
        let b = gap_exact(&inst, &Budget::unlimited());
        assert_eq!(a.assignment, b.assignment);
        assert!(a.value >= last - 1e-9);
    }
}
