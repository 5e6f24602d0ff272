//! Replay of the charging argument behind the GAP sparsifier.
//!
//! Given an instance, an active set `R`, a query result and the canonical
//! optimum on `R`, [`reconstruct`] rebuilds two assignments bucket by
//! bucket: `OPT̄`, which grows into the optimum, and `ALG`, which only uses
//! queried active items. [`verify_lemmas`] then checks the per-call weight
//! domination, feasibility and bookkeeping invariants, and accumulates the
//! value inequalities that only hold in expectation.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{knapsack_loads, validate_assignment, Assignment, GapInstance, ItemSet};
use crate::solvers::{gap_exact, Budget, SolveStatus};
use crate::sparsifier::QueryResult;
use crate::stochastic::{sample_active, trial_seed};

/// Slack for inequalities between sums of doubles.
pub const LEMMA_SLACK: f64 = 1e-9;

fn slack(x: f64) -> f64 {
    LEMMA_SLACK * x.abs().max(1.0)
}

/// Items of the optimum split by bucket: `queried` is keyed by the bucket
/// that queried the item, `missed` by the bucket of the item's own
/// assignment pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptPartition {
    pub queried: BTreeMap<(usize, usize), Vec<usize>>,
    pub missed: BTreeMap<(usize, usize), Vec<usize>>,
}

impl OptPartition {
    pub fn item_count(&self) -> usize {
        self.queried.values().chain(self.missed.values()).map(Vec::len).sum()
    }

    fn queried_at(&self, j: usize, k: usize) -> &[usize] {
        self.queried.get(&(j, k)).map_or(&[], Vec::as_slice)
    }

    fn missed_at(&self, j: usize, k: usize) -> &[usize] {
        self.missed.get(&(j, k)).map_or(&[], Vec::as_slice)
    }
}

/// Checks that `query` belongs to `inst` and maps every queried item to its
/// (knapsack, bucket, round).
fn selection_index(inst: &GapInstance, query: &QueryResult) -> Result<Vec<Option<(usize, usize, usize)>>> {
    let (n, m) = (inst.n(), inst.m());
    if query.grid.scales.len() != m {
        return Err(Error::Inconsistent(format!(
            "query result has {} scales for an instance with {m} knapsacks",
            query.grid.scales.len()
        )));
    }
    let mut sel = vec![None; n];
    for s in &query.buckets {
        if s.knapsack >= m {
            return Err(Error::KnapsackOutOfRange { index: s.knapsack, m });
        }
        for &i in &s.items {
            if i >= n {
                return Err(Error::ItemOutOfRange { index: i, n });
            }
            if sel[i].is_some() {
                return Err(Error::Inconsistent(format!("item {i} selected by two buckets")));
            }
            if !inst.fits(i, s.knapsack) || query.grid.bucket_of(s.knapsack, inst.value(i, s.knapsack)) != s.bucket {
                return Err(Error::Inconsistent(format!(
                    "pair ({i}, {}) does not belong to bucket {}; query result is not from this instance",
                    s.knapsack, s.bucket
                )));
            }
            sel[i] = Some((s.knapsack, s.bucket, s.round));
        }
    }
    for i in query.query.iter() {
        if i >= n || sel[i].is_none() {
            return Err(Error::Inconsistent(format!("query item {i} has no bucket selection")));
        }
    }
    Ok(sel)
}

fn check_opt(inst: &GapInstance, active: &ItemSet, opt: &Assignment) -> Result<()> {
    if !validate_assignment(inst, opt)? {
        return Err(Error::Inconsistent("optimum is not a feasible assignment".into()));
    }
    if let Some(&(i, _)) = opt.pairs().iter().find(|&&(i, _)| !active.contains(i)) {
        return Err(Error::Inconsistent(format!("optimum uses inactive item {i}")));
    }
    Ok(())
}

/// Splits the optimum into queried and missed items per bucket.
pub fn partition_opt(
    inst: &GapInstance,
    active: &ItemSet,
    query: &QueryResult,
    opt: &Assignment,
) -> Result<OptPartition> {
    let sel = selection_index(inst, query)?;
    check_opt(inst, active, opt)?;
    partition_with(inst, query, opt, &sel)
}

fn partition_with(
    inst: &GapInstance,
    query: &QueryResult,
    opt: &Assignment,
    sel: &[Option<(usize, usize, usize)>],
) -> Result<OptPartition> {
    let mut part = OptPartition::default();
    for &(i, j) in opt.pairs() {
        match sel[i] {
            Some((qj, qk, _)) => part.queried.entry((qj, qk)).or_default().push(i),
            None => {
                let k = query.grid.bucket_of(j, inst.value(i, j));
                if k > query.grid.top_bucket() {
                    return Err(Error::Inconsistent(format!(
                        "item {i} falls in no bucket of knapsack {j}"
                    )));
                }
                part.missed.entry((j, k)).or_default().push(i);
            }
        }
    }
    if part.item_count() != opt.len() {
        return Err(Error::Inconsistent("partition does not cover the optimum".into()));
    }
    Ok(part)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subroutine {
    FillLarge,
    FillSmall,
    FillSuper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseLabel {
    DirectSub,
    ValueRejection,
    ValueSubstitution,
    /// A missed large item with no substitute in any round; only `OPT̄` grows.
    EmptyBundle,
    ExactSub,
    #[serde(rename = "DensitySub-1")]
    DensitySub1,
    #[serde(rename = "DensitySub-2")]
    DensitySub2,
    SuperQueried,
    SuperMissed,
}

/// One step of a subroutine call and the pairs it added.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Index of the subroutine call this step belongs to.
    pub call: usize,
    pub subroutine: Subroutine,
    pub knapsack: usize,
    pub bucket: usize,
    pub case_label: CaseLabel,
    pub missed_item: Option<usize>,
    pub alg_added: Vec<(usize, usize)>,
    pub opt_added: Vec<(usize, usize)>,
    pub delta_w_alg: Vec<f64>,
    pub delta_w_opt: Vec<f64>,
    pub delta_v_alg: f64,
    pub delta_v_opt: f64,
}

/// Whether the active part of `B̄_{j,k,t}` weighs at least `C_j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessEvent {
    pub knapsack: usize,
    pub bucket: usize,
    pub round: usize,
    pub active_weight: f64,
    pub active_count: usize,
    pub holds: bool,
}

/// The prefix `S` chosen by a density substitution, for the ordering check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityPrefix {
    pub knapsack: usize,
    /// (item, v_OPT / w, v / w) for items in `S`.
    pub prefix: Vec<(usize, f64, f64)>,
    /// (item, v_OPT / w) for the rest of the bucket.
    pub rest: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionTrace {
    pub steps: Vec<TraceStep>,
    pub final_alg: Assignment,
    pub final_opt_bar: Assignment,
    /// Additions of an item already present in ALG or OPT̄ respectively.
    pub alg_repeats: usize,
    pub opt_bar_repeats: usize,
    pub events: Vec<ExcessEvent>,
    pub density_prefixes: Vec<DensityPrefix>,
    pub partition: OptPartition,
    pub rounds: usize,
}

struct Replay<'a> {
    inst: &'a GapInstance,
    m: usize,
    opt_of: Vec<Option<usize>>,
    in_alg: Vec<bool>,
    in_opt_bar: Vec<bool>,
    alg: Vec<(usize, usize)>,
    opt_bar: Vec<(usize, usize)>,
    alg_repeats: usize,
    opt_bar_repeats: usize,
    steps: Vec<TraceStep>,
    call: usize,
}

impl Replay<'_> {
    fn v_opt(&self, i: usize) -> f64 {
        self.opt_of[i].map_or(0.0, |j| self.inst.value(i, j))
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        subroutine: Subroutine,
        knapsack: usize,
        bucket: usize,
        case_label: CaseLabel,
        missed_item: Option<usize>,
        alg_added: Vec<(usize, usize)>,
        opt_added: Vec<(usize, usize)>,
    ) {
        let inst = self.inst;
        let mut delta_w_alg = vec![0.0; self.m];
        let mut delta_w_opt = vec![0.0; self.m];
        let mut delta_v_alg = 0.0;
        let mut delta_v_opt = 0.0;
        for &(i, j) in &alg_added {
            delta_w_alg[j] += inst.weight(i, j);
            delta_v_alg += inst.value(i, j);
            if std::mem::replace(&mut self.in_alg[i], true) {
                self.alg_repeats += 1;
            }
            self.alg.push((i, j));
        }
        for &(i, j) in &opt_added {
            delta_w_opt[j] += inst.weight(i, j);
            delta_v_opt += inst.value(i, j);
            if std::mem::replace(&mut self.in_opt_bar[i], true) {
                self.opt_bar_repeats += 1;
            }
            self.opt_bar.push((i, j));
        }
        self.steps.push(TraceStep {
            call: self.call,
            subroutine,
            knapsack,
            bucket,
            case_label,
            missed_item,
            alg_added,
            opt_added,
            delta_w_alg,
            delta_w_opt,
            delta_v_alg,
            delta_v_opt,
        });
    }

    fn at_opt(&self, items: impl IntoIterator<Item = usize>) -> Vec<(usize, usize)> {
        items
            .into_iter()
            .map(|i| (i, self.opt_of[i].expect("queried OPT item")))
            .collect()
    }
}

/// Replays the reconstruction. Calls whose bucket holds neither queried nor
/// missed optimal items add nothing and are not recorded.
pub fn reconstruct(
    inst: &GapInstance,
    active: &ItemSet,
    query: &QueryResult,
    opt: &Assignment,
) -> Result<ReconstructionTrace> {
    let sel = selection_index(inst, query)?;
    check_opt(inst, active, opt)?;
    let part = partition_with(inst, query, opt, &sel)?;
    let (n, m) = (inst.n(), inst.m());
    let grid = &query.grid;
    let rounds = query.rounds;

    // Active queried items per (j, k, t), ascending by index.
    let mut bbar: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
    let mut events = Vec::new();
    for s in &query.buckets {
        let mut items: Vec<usize> = s.items.iter().copied().filter(|&i| active.contains(i)).collect();
        items.sort_unstable();
        let active_weight: f64 = items.iter().map(|&i| inst.weight(i, s.knapsack)).sum();
        events.push(ExcessEvent {
            knapsack: s.knapsack,
            bucket: s.bucket,
            round: s.round,
            active_weight,
            active_count: items.len(),
            holds: active_weight >= inst.capacity(s.knapsack),
        });
        bbar.insert((s.knapsack, s.bucket, s.round), items);
    }
    let bbar_all = |j: usize, k: usize| -> Vec<usize> {
        let mut all: Vec<usize> = bbar
            .range((j, k, 0)..=(j, k, usize::MAX))
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        all.sort_unstable();
        all
    };

    let mut r = Replay {
        inst,
        m,
        opt_of: opt.to_vector(n),
        in_alg: vec![false; n],
        in_opt_bar: vec![false; n],
        alg: Vec::new(),
        opt_bar: Vec::new(),
        alg_repeats: 0,
        opt_bar_repeats: 0,
        steps: Vec::new(),
        call: 0,
    };
    let mut density_prefixes = Vec::new();

    for j in 0..m {
        // Low-value bucket.
        let missed = part.missed_at(j, 0).to_vec();
        let queried = part.queried_at(j, 0).to_vec();
        if !missed.is_empty() || !queried.is_empty() {
            if missed.is_empty() {
                let pairs = r.at_opt(queried.iter().copied());
                r.step(
                    Subroutine::FillSmall,
                    j,
                    0,
                    CaseLabel::ExactSub,
                    None,
                    pairs.clone(),
                    pairs,
                );
            } else {
                let ratio = |r: &Replay, i: usize| r.v_opt(i) / inst.weight(i, j);
                let mut order = bbar_all(j, 0);
                order.sort_by(|&a, &b| ratio(&r, a).total_cmp(&ratio(&r, b)).then(a.cmp(&b)));
                let missed_w: f64 = missed.iter().map(|&i| inst.weight(i, j)).sum();
                let mut prefix = Vec::new();
                let mut prefix_w = 0.0;
                let mut first_out = None;
                for &i in &order {
                    let w = inst.weight(i, j);
                    if inst.value(i, j) > r.v_opt(i) && prefix_w + w <= missed_w {
                        prefix.push(i);
                        prefix_w += w;
                    } else {
                        first_out = Some(i);
                        break;
                    }
                }
                let case = match first_out {
                    Some(i) if prefix_w + inst.weight(i, j) < missed_w => CaseLabel::DensitySub2,
                    _ => CaseLabel::DensitySub1,
                };
                density_prefixes.push(DensityPrefix {
                    knapsack: j,
                    prefix: prefix
                        .iter()
                        .map(|&i| (i, ratio(&r, i), inst.value(i, j) / inst.weight(i, j)))
                        .collect(),
                    rest: order[prefix.len()..].iter().map(|&i| (i, ratio(&r, i))).collect(),
                });
                let mut in_prefix: BTreeSet<usize> = prefix.iter().copied().collect();
                let mut alg_add = Vec::new();
                let mut opt_add = Vec::new();
                for &i in &queried {
                    let jp = r.opt_of[i].expect("queried OPT item");
                    opt_add.push((i, jp));
                    if in_prefix.remove(&i) {
                        alg_add.push((i, j));
                    } else {
                        alg_add.push((i, jp));
                    }
                }
                for &i in &prefix {
                    if in_prefix.contains(&i) {
                        alg_add.push((i, j));
                    }
                }
                opt_add.extend(missed.iter().map(|&i| (i, j)));
                r.step(Subroutine::FillSmall, j, 0, case, None, alg_add, opt_add);
            }
            r.call += 1;
        }

        // Large buckets.
        for k in 1..=grid.k {
            let missed = part.missed_at(j, k).to_vec();
            let mut queried: BTreeSet<usize> = part.queried_at(j, k).iter().copied().collect();
            if missed.is_empty() && queried.is_empty() {
                continue;
            }
            let all = bbar_all(j, k);
            for &i in &missed {
                let direct = all
                    .iter()
                    .copied()
                    .filter(|&c| r.opt_of[c].is_none() && !r.in_alg[c])
                    .min_by(|&a, &b| inst.weight(a, j).total_cmp(&inst.weight(b, j)).then(a.cmp(&b)));
                if let Some(sub) = direct {
                    r.step(
                        Subroutine::FillLarge,
                        j,
                        k,
                        CaseLabel::DirectSub,
                        Some(i),
                        vec![(sub, j)],
                        vec![(i, j)],
                    );
                    continue;
                }
                let mut bundle: Vec<(usize, usize)> = Vec::new();
                for t in 1..=rounds {
                    let Some(list) = bbar.get(&(j, k, t)) else { continue };
                    if let Some(&c) = list.iter().find(|&&c| r.opt_of[c].is_some() && !r.in_alg[c]) {
                        bundle.push((c, r.opt_of[c].expect("checked")));
                    }
                }
                let mut opt_add = bundle.clone();
                opt_add.push((i, j));
                let (case, alg_add) = if bundle.is_empty() {
                    (CaseLabel::EmptyBundle, Vec::new())
                } else {
                    let star = (0..bundle.len())
                        .min_by(|&a, &b| r.v_opt(bundle[a].0).total_cmp(&r.v_opt(bundle[b].0)).then(a.cmp(&b)))
                        .expect("non-empty bundle");
                    if r.v_opt(bundle[star].0) >= inst.value(i, j) {
                        (CaseLabel::ValueRejection, bundle.clone())
                    } else {
                        let mut a = bundle.clone();
                        a[star].1 = j;
                        (CaseLabel::ValueSubstitution, a)
                    }
                };
                for &(c, _) in &bundle {
                    queried.remove(&c);
                }
                r.step(Subroutine::FillLarge, j, k, case, Some(i), alg_add, opt_add);
            }
            if !queried.is_empty() || missed.is_empty() {
                let pairs = r.at_opt(queried.iter().copied());
                r.step(
                    Subroutine::FillLarge,
                    j,
                    k,
                    CaseLabel::ExactSub,
                    None,
                    pairs.clone(),
                    pairs,
                );
            }
            r.call += 1;
        }
    }

    // Super buckets, one call for all knapsacks.
    if grid.super_bucket {
        let top = grid.k + 1;
        for j in 0..m {
            let queried = part.queried_at(j, top).to_vec();
            if !queried.is_empty() {
                let pairs = r.at_opt(queried);
                r.step(
                    Subroutine::FillSuper,
                    j,
                    top,
                    CaseLabel::SuperQueried,
                    None,
                    pairs.clone(),
                    pairs,
                );
            }
            let missed = part.missed_at(j, top).to_vec();
            if !missed.is_empty() {
                let pairs: Vec<(usize, usize)> = missed.iter().map(|&i| (i, j)).collect();
                r.step(
                    Subroutine::FillSuper,
                    j,
                    top,
                    CaseLabel::SuperMissed,
                    None,
                    Vec::new(),
                    pairs,
                );
            }
        }
        r.call += 1;
    }

    Ok(ReconstructionTrace {
        final_alg: Assignment::from_pairs(r.alg.iter().copied()),
        final_opt_bar: Assignment::from_pairs(r.opt_bar.iter().copied()),
        alg_repeats: r.alg_repeats,
        opt_bar_repeats: r.opt_bar_repeats,
        steps: r.steps,
        events,
        density_prefixes,
        partition: part,
        rounds,
    })
}

/// Running mean and standard error of a paired difference `D`; the check
/// passes when `mean(D) >= -3 stderr(D)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_alg: f64,
    pub sum_opt: f64,
}

impl ExpectationCheck {
    fn push(&mut self, d: f64, alg: f64, opt: f64) {
        self.count += 1;
        self.sum += d;
        self.sum_sq += d * d;
        self.sum_alg += alg;
        self.sum_opt += opt;
    }

    fn merge(&mut self, o: &ExpectationCheck) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.sum_alg += o.sum_alg;
        self.sum_opt += o.sum_opt;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let k = self.count as f64;
        let var = ((self.sum_sq - self.sum * self.sum / k) / (k - 1.0)).max(0.0);
        (var / k).sqrt()
    }

    /// `mean(D) + 3 stderr(D)`; non-negative when the check passes.
    pub fn margin(&self) -> f64 {
        self.mean() + 3.0 * self.stderr()
    }

    pub fn passes(&self) -> bool {
        self.margin() >= -slack(self.sum_opt / self.count.max(1) as f64)
    }

    pub fn mean_alg(&self) -> f64 {
        self.sum_alg / self.count.max(1) as f64
    }

    pub fn mean_opt(&self) -> f64 {
        self.sum_opt / self.count.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub alg_outside_query: usize,
    pub alg_not_unique: usize,
    pub weight_domination: usize,
    pub capacity: usize,
    pub opt_bar_mismatch: usize,
    pub claim1_ordering: usize,
    pub bucket_filled: usize,
    pub alternative_exists: usize,
    pub size_match: usize,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.alg_outside_query
            + self.alg_not_unique
            + self.weight_domination
            + self.capacity
            + self.opt_bar_mismatch
            + self.claim1_ordering
            + self.bucket_filled
            + self.alternative_exists
            + self.size_match
    }

    fn merge(&mut self, o: &ViolationCounts) {
        self.alg_outside_query += o.alg_outside_query;
        self.alg_not_unique += o.alg_not_unique;
        self.weight_domination += o.weight_domination;
        self.capacity += o.capacity;
        self.opt_bar_mismatch += o.opt_bar_mismatch;
        self.claim1_ordering += o.claim1_ordering;
        self.bucket_filled += o.bucket_filled;
        self.alternative_exists += o.alternative_exists;
        self.size_match += o.size_match;
    }
}

const MAX_DETAILS: usize = 50;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub realizations: usize,
    /// Realizations skipped because the optimum could not be certified.
    pub skipped: usize,
    pub violations: ViolationCounts,
    /// The first violations found, with context.
    pub details: Vec<String>,
    pub case_counts: BTreeMap<String, usize>,
    /// (j, k, t) triples where the bucket had missed items and the event held.
    pub conditional_checks: usize,
    pub density_sub_calls: usize,
    /// FillLarge: `alg - (1 - 2e) opt`.
    pub large_value: ExpectationCheck,
    /// FillSmall: `alg - (1 - 2e) opt + e^2 sum_j M_j`.
    pub small_value: ExpectationCheck,
    /// Super buckets: `3e v(OPT) - (opt - alg)`.
    pub super_value: ExpectationCheck,
    /// Set when the scales were estimated rather than exact.
    #[serde(default)]
    pub estimated_scales: bool,
}

impl LemmaReport {
    pub fn merge(&mut self, o: &LemmaReport) {
        self.realizations += o.realizations;
        self.skipped += o.skipped;
        self.violations.merge(&o.violations);
        for d in &o.details {
            if self.details.len() < MAX_DETAILS {
                self.details.push(d.clone());
            }
        }
        for (k, v) in &o.case_counts {
            *self.case_counts.entry(k.clone()).or_default() += v;
        }
        self.conditional_checks += o.conditional_checks;
        self.density_sub_calls += o.density_sub_calls;
        self.large_value.merge(&o.large_value);
        self.small_value.merge(&o.small_value);
        self.super_value.merge(&o.super_value);
        self.estimated_scales |= o.estimated_scales;
    }

    fn flag(&mut self, detail: String) {
        if self.details.len() < MAX_DETAILS {
            self.details.push(detail);
        }
    }

    pub fn expectations_hold(&self) -> bool {
        self.large_value.passes() && self.small_value.passes() && self.super_value.passes()
    }
}

fn label_name(c: CaseLabel) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| format!("{c:?}"))
}

/// Checks one realization. `scales` are the `M_j` used for the small-bucket slack.
pub fn verify_lemmas(
    trace: &ReconstructionTrace,
    inst: &GapInstance,
    active: &ItemSet,
    query: &QueryResult,
    opt: &Assignment,
    scales: &[f64],
    epsilon: f64,
) -> LemmaReport {
    let mut rep = LemmaReport {
        realizations: 1,
        ..LemmaReport::default()
    };
    let m = inst.m();

    // (a) ALG uses queried active items, each once.
    for &(i, j) in trace.final_alg.pairs() {
        if !(query.query.contains(i) && active.contains(i)) {
            rep.violations.alg_outside_query += 1;
            rep.flag(format!("ALG pair ({i}, {j}) uses an item outside Q ∩ R"));
        }
    }
    if trace.alg_repeats > 0 || !trace.final_alg.has_unique_items() {
        rep.violations.alg_not_unique += 1;
        rep.flag(format!("ALG assigns an item twice ({} repeats)", trace.alg_repeats));
    }

    // (b) weight domination per step and per call.
    let mut per_call: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in &trace.steps {
        *rep.case_counts.entry(label_name(s.case_label)).or_default() += 1;
        let e = per_call.entry(s.call).or_insert_with(|| (vec![0.0; m], vec![0.0; m]));
        for jp in 0..m {
            e.0[jp] += s.delta_w_alg[jp];
            e.1[jp] += s.delta_w_opt[jp];
            if s.delta_w_alg[jp] > s.delta_w_opt[jp] + slack(s.delta_w_opt[jp]) {
                rep.violations.weight_domination += 1;
                rep.flag(format!(
                    "{:?} ({}, {}) {:?}: knapsack {jp} gains {} in ALG but {} in OPT̄",
                    s.subroutine, s.knapsack, s.bucket, s.case_label, s.delta_w_alg[jp], s.delta_w_opt[jp]
                ));
            }
        }
    }
    for (call, (a, o)) in &per_call {
        for jp in 0..m {
            if a[jp] > o[jp] + slack(o[jp]) {
                rep.violations.weight_domination += 1;
                rep.flag(format!(
                    "call {call}: knapsack {jp} gains {} in ALG but {} in OPT̄",
                    a[jp], o[jp]
                ));
            }
        }
    }

    // (c) feasibility of ALG.
    match knapsack_loads(inst, &trace.final_alg) {
        Ok(loads) => {
            for (jp, l) in loads.iter().enumerate() {
                if *l > inst.capacity(jp) + slack(inst.capacity(jp)) {
                    rep.violations.capacity += 1;
                    rep.flag(format!(
                        "ALG load {l} exceeds capacity {} of knapsack {jp}",
                        inst.capacity(jp)
                    ));
                }
            }
        }
        Err(e) => {
            rep.violations.capacity += 1;
            rep.flag(format!("ALG has invalid pairs: {e}"));
        }
    }

    // (d) OPT̄ rebuilds the optimum.
    if trace.final_opt_bar != *opt || trace.opt_bar_repeats > 0 {
        rep.violations.opt_bar_mismatch += 1;
        rep.flag(format!(
            "OPT̄ has {} pairs ({} repeats), OPT has {}",
            trace.final_opt_bar.len(),
            trace.opt_bar_repeats,
            opt.len()
        ));
    }

    // (e) ordering inside density substitutions.
    for d in &trace.density_prefixes {
        rep.density_sub_calls += 1;
        let mut ok = d.prefix.iter().all(|&(_, ro, rv)| ro <= rv);
        let max_in = d.prefix.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let min_out = d.rest.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        ok &= max_in <= min_out;
        if !ok {
            rep.violations.claim1_ordering += 1;
            rep.flag(format!(
                "density prefix of knapsack {} is not ordered: max {max_in} > min {min_out}",
                d.knapsack
            ));
        }
    }

    // (f) conditional properties of buckets with missed items.
    let events: BTreeMap<(usize, usize, usize), &ExcessEvent> = trace
        .events
        .iter()
        .map(|e| ((e.knapsack, e.bucket, e.round), e))
        .collect();
    let mut bbar_all: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for s in &query.buckets {
        bbar_all
            .entry((s.knapsack, s.bucket))
            .or_default()
            .extend(s.items.iter().copied().filter(|&i| active.contains(i)));
    }
    for (&(j, k), missed) in &trace.partition.missed {
        if missed.is_empty() {
            continue;
        }
        for t in 1..=trace.rounds {
            let Some(ev) = events.get(&(j, k, t)) else { continue };
            if !ev.holds {
                continue;
            }
            rep.conditional_checks += 1;
            if ev.active_weight < inst.capacity(j) {
                rep.violations.bucket_filled += 1;
            }
            let queried = bbar_all.get(&(j, k)).map_or(&[][..], Vec::as_slice);
            let dominated = queried.iter().all(|&q| {
                missed.iter().all(|&i| {
                    if k == 0 {
                        inst.value(q, j) / inst.weight(q, j) >= inst.value(i, j) / inst.weight(i, j)
                    } else {
                        inst.weight(q, j) <= inst.weight(i, j)
                    }
                })
            });
            if !dominated {
                rep.violations.alternative_exists += 1;
                rep.flag(format!(
                    "bucket ({j}, {k}) round {t}: a queried item is not an alternative for every missed item"
                ));
            }
            if k != 0 && ev.active_count < missed.len() {
                rep.violations.size_match += 1;
                rep.flag(format!(
                    "bucket ({j}, {k}) round {t}: {} active queried items for {} missed",
                    ev.active_count,
                    missed.len()
                ));
            }
        }
    }

    // Value sums for the expectation checks.
    let (mut la, mut lo, mut sa, mut so, mut ua, mut uo) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for s in &trace.steps {
        match s.subroutine {
            Subroutine::FillLarge => {
                la += s.delta_v_alg;
                lo += s.delta_v_opt;
            }
            Subroutine::FillSmall => {
                sa += s.delta_v_alg;
                so += s.delta_v_opt;
            }
            Subroutine::FillSuper => {
                ua += s.delta_v_alg;
                uo += s.delta_v_opt;
            }
        }
    }
    let factor = 1.0 - 2.0 * epsilon;
    let small_slack = epsilon * epsilon * scales.iter().sum::<f64>();
    let v_opt: f64 = opt.pairs().iter().map(|&(i, j)| inst.value(i, j)).sum();
    rep.large_value.push(la - factor * lo, la, lo);
    rep.small_value.push(sa - factor * so + small_slack, sa, so);
    rep.super_value.push(3.0 * epsilon * v_opt - (uo - ua), ua, uo);
    rep
}

/// Samples `trials` active sets, solves each to the canonical optimum,
/// reconstructs and verifies with the value checks at `epsilon`.
/// Realizations are processed in parallel and merged in order.
pub fn verify_query(
    inst: &GapInstance,
    query: &QueryResult,
    p: f64,
    trials: usize,
    epsilon: f64,
    seed: u64,
    budget: &Budget,
) -> Result<LemmaReport> {
    selection_index(inst, query)?;
    let scales = query.grid.scales.clone();
    let reports: Vec<Result<LemmaReport>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let active = sample_active(inst.n(), p, trial_seed(seed, t))?.included;
            verify_realization(inst, query, &active, &scales, epsilon, budget)
        })
        .collect();
    let mut total = LemmaReport {
        estimated_scales: query.scale_stderr.is_some(),
        ..LemmaReport::default()
    };
    for r in reports {
        total.merge(&r?);
    }
    Ok(total)
}

/// Solves, reconstructs and verifies a single realization.
pub fn verify_realization(
    inst: &GapInstance,
    query: &QueryResult,
    active: &ItemSet,
    scales: &[f64],
    epsilon: f64,
    budget: &Budget,
) -> Result<LemmaReport> {
    let (sub, map) = inst.restrict(active);
    let res = gap_exact(&sub, budget);
    if res.status == SolveStatus::BudgetExceeded || !res.canonical {
        return Ok(LemmaReport {
            skipped: 1,
            ..LemmaReport::default()
        });
    }
    let opt = res.assignment.remap(&map);
    let trace = reconstruct(inst, active, query, &opt)?;
    Ok(verify_lemmas(&trace, inst, active, query, &opt, scales, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsifier::{sparsify_gap, OracleMode, SparsifyParams};

    fn one_round(inst: &GapInstance, scale: f64) -> QueryResult {
        let mut params = SparsifyParams::practical(
            0.2,
            1.0,
            OracleMode::PerKnapsack {
                scales: vec![scale; inst.m()],
            },
        );
        params.tau_override = Some(1.0);
        params.rounds_alpha = Some(1);
        params.k_override = Some(20);
        sparsify_gap(inst, &params).unwrap()
    }

    #[test]
    fn direct_substitution_case() {
        // A (v=10, w=5) and B (v=9.9, w=4) share a bucket; a budget of 4
        // queries only B.
        let inst = GapInstance::knapsack(&[10.0, 9.9], &[5.0, 4.0], 5.0).unwrap();
        let mut params = SparsifyParams::practical(0.2, 1.0, OracleMode::PerKnapsack { scales: vec![12.0] });
        params.tau_override = Some(0.8);
        params.rounds_alpha = Some(1);
        params.k_override = Some(100);
        let q = sparsify_gap(&inst, &params).unwrap();
        assert_eq!(q.query.as_slice(), &[1]);
        let grid = &q.grid;
        assert_eq!(grid.bucket_of(0, 10.0), grid.bucket_of(0, 9.9));

        let active = ItemSet::full(2);
        let opt = Assignment::from_pairs([(0, 0)]);
        let trace = reconstruct(&inst, &active, &q, &opt).unwrap();
        let direct: Vec<&TraceStep> = trace
            .steps
            .iter()
            .filter(|s| s.case_label == CaseLabel::DirectSub)
            .collect();
        assert_eq!(direct.len(), 1);
        assert_eq!(direct[0].delta_w_alg, vec![4.0]);
        assert_eq!(direct[0].delta_w_opt, vec![5.0]);
        assert_eq!(direct[0].delta_v_alg, 9.9);
        assert_eq!(trace.final_alg.pairs(), &[(1, 0)]);
        let rep = verify_lemmas(&trace, &inst, &active, &q, &opt, &q.grid.scales, 0.2);
        assert_eq!(rep.violations.total(), 0, "{:?}", rep.details);
    }

    #[test]
    fn missed_super_item_only_enters_opt_bar() {
        // Scale 1 puts a value of 50 far above the top edge of 20 buckets.
        let inst = GapInstance::knapsack(&[50.0, 0.01], &[3.0, 1.0], 3.0).unwrap();
        let grid_q = one_round(&inst, 1.0);
        let top = grid_q.grid.k + 1;
        assert_eq!(grid_q.grid.bucket_of(0, 50.0), top);
        // Drop item 0 from the query by hand to force a miss.
        let mut q = grid_q.clone();
        q.buckets.retain(|s| s.bucket != top);
        q.query = ItemSet::new(q.buckets.iter().flat_map(|s| s.items.iter().copied()), 2).unwrap();
        assert!(!q.query.contains(0));

        let active = ItemSet::full(2);
        let opt = Assignment::from_pairs([(0, 0)]);
        let trace = reconstruct(&inst, &active, &q, &opt).unwrap();
        let s = trace
            .steps
            .iter()
            .find(|s| s.case_label == CaseLabel::SuperMissed)
            .unwrap();
        assert!(s.alg_added.is_empty());
        assert_eq!(s.opt_added, vec![(0, 0)]);
        assert!(trace.final_alg.is_empty());
        assert_eq!(trace.final_opt_bar, opt);
    }

    #[test]
    fn full_query_is_exact() {
        let p = crate::gen::GenParams::new(12, 2, 0.3, 2.0, 21);
        let inst = crate::gen::generate(&p).unwrap();
        let q = one_round(&inst, 1000.0);
        // Give every item to the query by building a query from all buckets.
        let mut params = SparsifyParams::practical(0.2, 1.0, OracleMode::PerKnapsack { scales: vec![100.0; 2] });
        params.tau_override = Some(1000.0);
        params.rounds_alpha = Some(1);
        let full = sparsify_gap(&inst, &params).unwrap();
        assert_eq!(full.query, ItemSet::full(12));
        let opt = gap_exact(&inst, &Budget::unlimited()).assignment;
        let active = ItemSet::full(12);
        let trace = reconstruct(&inst, &active, &full, &opt).unwrap();
        assert_eq!(trace.final_alg, opt);
        assert!(trace
            .steps
            .iter()
            .all(|s| matches!(s.case_label, CaseLabel::ExactSub | CaseLabel::SuperQueried)));
        let rep = verify_lemmas(&trace, &inst, &active, &full, &opt, &full.grid.scales, 0.2);
        assert_eq!(rep.violations.total(), 0);
        assert_eq!(rep.large_value.sum_alg, rep.large_value.sum_opt);
        drop(q);
    }

    #[test]
    fn partition_examples() {
        let inst = GapInstance::knapsack(&[5.0, 6.0, 7.0], &[1.0, 1.0, 1.0], 3.0).unwrap();
        let q = one_round(&inst, 10.0);
        let opt = Assignment::from_pairs([(0, 0), (1, 0), (2, 0)]);
        let part = partition_opt(&inst, &ItemSet::full(3), &q, &opt).unwrap();
        assert_eq!(part.item_count(), 3);
        assert!(part.missed.values().all(Vec::is_empty) || part.missed.is_empty());

        let mut empty = q.clone();
        empty.buckets.clear();
        empty.query = ItemSet::empty();
        let part = partition_opt(&inst, &ItemSet::full(3), &empty, &opt).unwrap();
        assert!(part.queried.is_empty());
        assert_eq!(part.item_count(), 3);
    }

    #[test]
    fn foreign_query_is_rejected() {
        let a = GapInstance::knapsack(&[5.0, 6.0], &[1.0, 1.0], 3.0).unwrap();
        let b = GapInstance::knapsack(&[50.0, 6.0], &[1.0, 1.0], 3.0).unwrap();
        let q = one_round(&a, 100.0);
        assert!(reconstruct(&b, &ItemSet::full(2), &q, &Assignment::new()).is_err());
        let inactive = Assignment::from_pairs([(0, 0)]);
        assert!(reconstruct(&a, &ItemSet::new([1], 2).unwrap(), &q, &inactive).is_err());
    }
}
