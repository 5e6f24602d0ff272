//! Active sets and Monte Carlo evaluation of query sets.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};
use crate::instance::{GapInstance, ItemSet};
use crate::rng::{derive_seed, stream_rng};
use crate::solvers::{gap_exact_with, Budget, ExactOptions, SolveStatus, TieBreak};
use crate::stats::{covariance, mean_estimate, MeanEstimate};

/// Default number of realizations for [`eval_sparsifier`].
pub const DEFAULT_EVAL_TRIALS: usize = 500;
/// Default number of realizations when a sparsifier estimates `E[OPT]`.
pub const DEFAULT_ORACLE_TRIALS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub included: ItemSet,
    pub p: f64,
    pub seed: u64,
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid_param("p", format!("must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Includes each of `0..n` independently with probability `p`.
pub fn sample_active(n: usize, p: f64, seed: u64) -> Result<ActiveSet> {
    check_probability(p)?;
    let included = if p == 1.0 {
        ItemSet::full(n)
    } else {
        let mut rng = stream_rng(seed, 0);
        let items = (0..n).filter(|_| rng.random::<f64>() < p).collect();
        ItemSet::from_sorted_unchecked(items)
    };
    Ok(ActiveSet { included, p, seed })
}

/// Seed of realization `t` in a run keyed by `seed`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, t as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// mean(OPT on Q∩R) / mean(OPT on R).
    pub ratio: f64,
    /// Delta-method standard error of the ratio from the paired samples.
    pub ratio_stderr: f64,
    pub numerator: MeanEstimate,
    pub denominator: MeanEstimate,
    pub trials: usize,
    pub completed: usize,
    /// Realizations excluded because a solve ran out of budget.
    pub flagged: usize,
}

/// Estimates the approximation ratio of query set `q` using the same active
/// set for the numerator and the denominator of every realization.
pub fn eval_sparsifier(
    inst: &GapInstance,
    q: &ItemSet,
    p: f64,
    trials: usize,
    seed: u64,
    budget: &Budget,
) -> Result<EvalReport> {
    check_probability(p)?;
    if trials == 0 {
        return Err(invalid_param("trials", "must be at least 1"));
    }
    if let Some(bad) = q.iter().find(|&i| i >= inst.n()) {
        return Err(crate::Error::ItemOutOfRange {
            index: bad,
            n: inst.n(),
        });
    }
    let opts = ExactOptions {
        tie_break: TieBreak::FirstFound,
    };
    let samples: Vec<Option<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let active = sample_active(inst.n(), p, trial_seed(seed, t)).expect("p checked");
            let (full, _) = inst.restrict(&active.included);
            let den = gap_exact_with(&full, budget, opts);
            let (sub, _) = inst.restrict(&active.included.intersect(q));
            let num = gap_exact_with(&sub, budget, opts);
            let over = |s: SolveStatus| s == SolveStatus::BudgetExceeded;
            if over(den.status) || over(num.status) {
                None
            } else {
                Some((num.value, den.value))
            }
        })
        .collect();
    let done: Vec<(f64, f64)> = samples.into_iter().flatten().collect();
    let nums: Vec<f64> = done.iter().map(|d| d.0).collect();
    let dens: Vec<f64> = done.iter().map(|d| d.1).collect();
    let numerator = mean_estimate(&nums);
    let denominator = mean_estimate(&dens);
    let (ratio, ratio_stderr) = ratio_of_means(&nums, &dens);
    Ok(EvalReport {
        ratio,
        ratio_stderr,
        numerator,
        denominator,
        trials,
        completed: done.len(),
        flagged: trials - done.len(),
    })
}

/// Ratio of sample means with its delta-method standard error.
pub fn ratio_of_means(nums: &[f64], dens: &[f64]) -> (f64, f64) {
    let k = nums.len() as f64;
    let a = mean_estimate(nums);
    let b = mean_estimate(dens);
    if b.mean == 0.0 {
        return (if a.mean == 0.0 { 1.0 } else { f64::INFINITY }, 0.0);
    }
    let r = a.mean / b.mean;
    let var = (crate::stats::variance(nums) - 2.0 * r * covariance(nums, dens) + r * r * crate::stats::variance(dens))
        / (k * b.mean * b.mean);
    (r, var.max(0.0).sqrt())
}

/// Fraction of `trials` activations in which the active weight of `weights`
/// reaches `threshold`.
pub fn activation_weight_frequency(weights: &[f64], threshold: f64, p: f64, trials: usize, seed: u64) -> Result<f64> {
    check_probability(p)?;
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = stream_rng(trial_seed(seed, t), 0);
            let active: f64 = weights.iter().filter(|_| rng.random::<f64>() < p).sum();
            active >= threshold
        })
        .count();
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_probability_gives_full_set() {
        assert_eq!(sample_active(7, 1.0, 3).unwrap().included, ItemSet::full(7));
        assert!(sample_active(7, 0.0, 3).is_err());
        assert!(sample_active(7, 1.5, 3).is_err());
    }

    #[test]
    fn sample_size_concentrates() {
        let a = sample_active(10_000, 0.5, 12).unwrap();
        assert!((a.included.len() as i64 - 5000).abs() <= 150);
        assert_eq!(a, sample_active(10_000, 0.5, 12).unwrap());
    }

    #[test]
    fn full_query_has_ratio_one() {
        let inst = GapInstance::knapsack(&[10.0, 6.0, 5.0], &[5.0, 4.0, 3.0], 7.0).unwrap();
        let r = eval_sparsifier(&inst, &ItemSet::full(3), 0.5, 200, 1, &Budget::unlimited()).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.flagged, 0);
    }

    #[test]
    fn three_item_ratio_matches_enumeration() {
        let inst = GapInstance::knapsack(&[10.0, 6.0, 5.0], &[5.0, 4.0, 3.0], 7.0).unwrap();
        let q = ItemSet::new([0, 1], 3).unwrap();
        let r = eval_sparsifier(&inst, &q, 0.5, 10_000, 5, &Budget::unlimited()).unwrap();
        let truth = 6.5 / 7.875;
        assert!((r.ratio - truth).abs() <= 3.0 * r.ratio_stderr, "{r:?}");
        assert!((r.numerator.mean - 6.5).abs() <= 3.0 * r.numerator.stderr);
    }

    #[test]
    fn degenerate_ratio_of_means() {
        assert_eq!(ratio_of_means(&[0.0, 0.0], &[0.0, 0.0]).0, 1.0);
        let (r, se) = ratio_of_means(&[1.0, 2.0], &[2.0, 4.0]);
        assert_eq!(r, 0.5);
        assert!(se < 1e-12);
    }
}
