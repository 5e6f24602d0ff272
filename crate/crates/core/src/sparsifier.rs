//! Bucket sparsifiers for KP and GAP, and degree accounting.
//!
//! Values are grouped into geometric buckets relative to a per-knapsack
//! scale `M_j`. Each bucket is filled up to a weight budget of
//! `tau * C_j / p`, so enough of it survives activation to stand in for any
//! optimal item of the same value class that was not queried.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::instance::{GapInstance, ItemSet};
use crate::solvers::{expected_opt_per_knapsack, gap_lp, Budget};
use crate::stochastic::{check_probability, DEFAULT_ORACLE_TRIALS};

/// Concentration factor `1 + ln(1/e) + sqrt(ln(1/e)^2 + 2 ln(1/e))`.
///
/// A set of weight at least `tau(e) * C / p`, made of items no heavier than
/// `C`, keeps active weight at least `C` with probability at least `1 - e`.
pub fn tau(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid_param(
            "epsilon",
            format!("tau needs epsilon in (0, 1], got {epsilon}"),
        ));
    }
    let l = (1.0 / epsilon).ln();
    Ok(1.0 + l + (l * l + 2.0 * l).sqrt())
}

/// Bucket count of the knapsack sparsifier: `ceil((1/e) ln(1/(e p)))`.
pub fn kp_bucket_count(epsilon: f64, p: f64) -> usize {
    (((1.0 / (epsilon * p)).ln() / epsilon).ceil() as usize).max(1)
}

/// Bucket count of the GAP sparsifier: `ceil((2/e^2) ln(m / e^3))`, with
/// `m = 1` for per-knapsack scales and the knapsack count for a global scale.
pub fn gap_bucket_count(epsilon: f64, m: usize) -> usize {
    ((2.0 / (epsilon * epsilon) * (m as f64 / epsilon.powi(3)).ln()).ceil() as usize).max(1)
}

/// Bucket count of the LP-driven configuration: `ceil((1/e^2) ln(1/e^2))`.
pub fn lp_driven_bucket_count(epsilon: f64) -> usize {
    let e2 = epsilon * epsilon;
    (((1.0 / e2).ln() / e2).ceil() as usize).max(1)
}

/// `ceil(1/e)`, the number of rounds parameter.
pub fn default_alpha(epsilon: f64) -> usize {
    ((1.0 / epsilon) - 1e-9).ceil().max(1.0) as usize
}

/// Upper limit on `w(Q)/C` guaranteed for the knapsack sparsifier.
pub fn kp_degree_limit(k: usize, tau: f64, p: f64) -> f64 {
    (k as f64 + 1.0) * (tau / p + 1.0)
}

/// Upper limit on `max_j ledger_j / C_j` guaranteed for the GAP sparsifier.
pub fn gap_degree_limit(alpha: usize, k: usize, tau: f64, p: f64) -> f64 {
    alpha as f64 * k as f64 * (tau / p + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum OracleMode {
    /// Scales `M_j` supplied by the caller, one per knapsack.
    PerKnapsack { scales: Vec<f64> },
    /// One global scale `M`; the GAP sparsifier uses `M / m` per knapsack.
    Global { scale: f64 },
    /// The LP relaxation optimum of the full instance for every knapsack.
    LpDriven,
    /// Monte Carlo estimate of the expected (per-knapsack) optimum.
    Sampled { trials: usize, seed: u64 },
}

impl OracleMode {
    pub fn sampled_default(seed: u64) -> Self {
        OracleMode::Sampled {
            trials: DEFAULT_ORACLE_TRIALS,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Parameters exactly as analysed; out-of-range epsilon only warns.
    #[default]
    Theory,
    /// Allows overrides of tau, the round count and the bucket count.
    Practical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsifyParams {
    pub epsilon: f64,
    pub p: f64,
    pub oracle: OracleMode,
    #[serde(default)]
    pub mode: Mode,
    /// Theory mode runs `alpha - 1` rounds with `alpha = ceil(1/e)`;
    /// practical mode runs exactly `alpha` rounds.
    #[serde(default)]
    pub rounds_alpha: Option<usize>,
    #[serde(default)]
    pub tau_override: Option<f64>,
    #[serde(default)]
    pub k_override: Option<usize>,
}

impl SparsifyParams {
    pub fn theory(epsilon: f64, p: f64, oracle: OracleMode) -> Self {
        SparsifyParams {
            epsilon,
            p,
            oracle,
            mode: Mode::Theory,
            rounds_alpha: None,
            tau_override: None,
            k_override: None,
        }
    }

    pub fn practical(epsilon: f64, p: f64, oracle: OracleMode) -> Self {
        SparsifyParams {
            mode: Mode::Practical,
            ..Self::theory(epsilon, p, oracle)
        }
    }

    fn validate(&self, theory_max: f64, warnings: &mut Vec<String>) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid_param(
                "epsilon",
                format!("must lie in (0, 1), got {}", self.epsilon),
            ));
        }
        check_probability(self.p)?;
        if self.mode == Mode::Theory {
            if self.tau_override.is_some() || self.k_override.is_some() || self.rounds_alpha.is_some() {
                return Err(invalid_param(
                    "mode",
                    "tau, K and alpha overrides require practical mode",
                ));
            }
            if self.epsilon >= theory_max {
                let msg = format!(
                    "epsilon = {} is outside the analysed range (0, {theory_max:.4}); guarantees do not apply",
                    self.epsilon
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        if let Some(t) = self.tau_override {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid_param("tau_override", format!("must be positive, got {t}")));
            }
        }
        if self.k_override == Some(0) {
            return Err(invalid_param("k_override", "must be at least 1"));
        }
        if self.rounds_alpha == Some(0) {
            return Err(invalid_param("rounds_alpha", "must be at least 1"));
        }
        Ok(())
    }
}

/// Geometric value buckets for every knapsack.
///
/// Bucket 0 holds values up to `r * M_j`; bucket `k` in `1..=K` holds
/// `(r (1+r)^(k-1) M_j, r (1+r)^k M_j]`. Values above the top edge go to
/// bucket `K + 1` when the grid has a super bucket and to `K` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketGrid {
    pub resolution: f64,
    pub scales: Vec<f64>,
    pub k: usize,
    pub super_bucket: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketInterval {
    pub bucket: usize,
    /// Exclusive lower edge; `None` for bucket 0.
    pub lower: Option<f64>,
    /// Inclusive upper edge; `None` for the super bucket.
    pub upper: Option<f64>,
}

impl BucketGrid {
    /// Upper edge of bucket `k` of knapsack `j`. Falls back to log space when
    /// the direct product overflows.
    pub fn upper(&self, j: usize, k: usize) -> f64 {
        let direct = self.scales[j] * self.resolution * (1.0 + self.resolution).powf(k as f64);
        if direct.is_finite() && direct > 0.0 {
            direct
        } else {
            (self.resolution.ln() + self.scales[j].ln() + k as f64 * self.resolution.ln_1p()).exp()
        }
    }

    pub fn top_bucket(&self) -> usize {
        if self.super_bucket {
            self.k + 1
        } else {
            self.k
        }
    }

    pub fn bucket_of(&self, j: usize, v: f64) -> usize {
        if v <= self.upper(j, 0) {
            return 0;
        }
        let guess = ((v / self.scales[j] / self.resolution).ln() / self.resolution.ln_1p()).ceil();
        let mut k = if guess.is_finite() {
            (guess.max(1.0) as usize).min(self.k + 1)
        } else {
            self.k + 1
        };
        while k > 1 && v <= self.upper(j, k - 1) {
            k -= 1;
        }
        while k <= self.k && v > self.upper(j, k) {
            k += 1;
        }
        k.min(self.top_bucket())
    }

    pub fn intervals(&self, j: usize) -> Vec<BucketInterval> {
        let mut out = vec![BucketInterval {
            bucket: 0,
            lower: None,
            upper: Some(self.upper(j, 0)),
        }];
        for k in 1..=self.k {
            out.push(BucketInterval {
                bucket: k,
                lower: Some(self.upper(j, k - 1)),
                upper: Some(self.upper(j, k)),
            });
        }
        if self.super_bucket {
            out.push(BucketInterval {
                bucket: self.k + 1,
                lower: Some(self.upper(j, self.k)),
                upper: None,
            });
        } else if let Some(last) = out.last_mut() {
            // Values above the top edge are clamped into bucket K.
            last.upper = None;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kp,
    Gap,
}

/// Items queried from bucket `(knapsack, bucket)` in round `round` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSelection {
    pub knapsack: usize,
    pub bucket: usize,
    pub round: usize,
    /// In selection order.
    pub items: Vec<usize>,
    /// Total weight of `items` in `knapsack`.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub p: f64,
    pub tau: f64,
    pub rounds: usize,
    pub grid: BucketGrid,
    pub query: ItemSet,
    pub buckets: Vec<BucketSelection>,
    /// Selected weight per knapsack.
    pub ledger: Vec<f64>,
    pub lp_degree_bound: f64,
    pub integral_degree_bound: f64,
    pub bucket_boundaries: Vec<Vec<BucketInterval>>,
    /// Standard errors of the scales when they were estimated by sampling.
    #[serde(default)]
    pub scale_stderr: Option<Vec<f64>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl QueryResult {
    pub fn selection(&self, j: usize, k: usize, t: usize) -> Option<&BucketSelection> {
        self.buckets
            .iter()
            .find(|s| s.knapsack == j && s.bucket == k && s.round == t)
    }

    /// Checks the structural invariants: disjoint bucket lists whose union
    /// is `query`, and the doubled integral bound.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.buckets {
            for &i in &s.items {
                if !seen.insert(i) {
                    return Err(format!("item {i} appears in two bucket selections"));
                }
            }
        }
        let union: Vec<usize> = seen.into_iter().collect();
        if union != self.query.as_slice() {
            return Err("query set differs from the union of bucket selections".into());
        }
        if self.integral_degree_bound != 2.0 * self.lp_degree_bound {
            return Err("integral bound is not twice the LP bound".into());
        }
        Ok(())
    }
}

struct Scales {
    values: Vec<f64>,
    stderr: Option<Vec<f64>>,
    global: bool,
}

fn resolve_scales(
    inst: &GapInstance,
    params: &SparsifyParams,
    per_knapsack: bool,
    warnings: &mut Vec<String>,
) -> Result<Scales> {
    let m = inst.m();
    let (values, stderr, global) = match &params.oracle {
        OracleMode::PerKnapsack { scales } => {
            let want = if per_knapsack { m } else { 1 };
            if scales.len() != want {
                return Err(invalid_param(
                    "oracle",
                    format!("expected {want} scale(s), got {}", scales.len()),
                ));
            }
            (scales.clone(), None, false)
        }
        OracleMode::Global { scale } => {
            let s = if per_knapsack { *scale / m as f64 } else { *scale };
            (vec![s; if per_knapsack { m } else { 1 }], None, per_knapsack)
        }
        OracleMode::LpDriven => {
            let v = gap_lp(inst)?.value;
            (vec![v; if per_knapsack { m } else { 1 }], None, false)
        }
        OracleMode::Sampled { trials, seed } => {
            let est = expected_opt_per_knapsack(inst, params.p, *trials, *seed, &Budget::unlimited())?;
            if per_knapsack {
                // A knapsack that no sampled optimum uses falls back to the global share.
                let share = est.total.mean / m as f64;
                let mut values = Vec::with_capacity(m);
                for (j, e) in est.per_knapsack.iter().enumerate() {
                    if e.mean > 0.0 {
                        values.push(e.mean);
                    } else {
                        let msg =
                            format!("knapsack {j} is empty in every sampled optimum; using M_j = E[OPT]/m = {share}");
                        log::warn!("{msg}");
                        warnings.push(msg);
                        values.push(share);
                    }
                }
                (values, Some(est.per_knapsack.iter().map(|e| e.stderr).collect()), false)
            } else {
                (vec![est.total.mean], Some(vec![est.total.stderr]), false)
            }
        }
    };
    if let Some((j, &s)) = values.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
        return Err(invalid_param(
            "oracle",
            format!("scale M for knapsack {j} must be positive, got {s}"),
        ));
    }
    Ok(Scales { values, stderr, global })
}

fn degree_bounds(lp: f64) -> (f64, f64) {
    let lp = lp.max(1.0);
    (lp, 2.0 * lp)
}

/// The knapsack sparsifier. `inst` must have a single knapsack.
pub fn sparsify_kp(inst: &GapInstance, params: &SparsifyParams) -> Result<QueryResult> {
    if inst.m() != 1 {
        return Err(Error::InvalidInstance(format!(
            "the knapsack sparsifier needs m = 1, got m = {}",
            inst.m()
        )));
    }
    let mut warnings = Vec::new();
    params.validate(1.0 / 3.0, &mut warnings)?;
    let eps = params.epsilon;
    let scales = resolve_scales(inst, params, false, &mut warnings)?;
    let k = params.k_override.unwrap_or_else(|| kp_bucket_count(eps, params.p));
    let tau = params.tau_override.map_or_else(|| tau(eps), Ok)?;
    let cap = inst.capacity(0);
    let budget = tau * cap / params.p;
    let grid = BucketGrid {
        resolution: eps,
        scales: scales.values.clone(),
        k,
        super_bucket: false,
    };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    for i in 0..inst.n() {
        members[grid.bucket_of(0, inst.value(i, 0))].push(i);
    }
    let (v, w) = (|i: usize| inst.value(i, 0), |i: usize| inst.weight(i, 0));
    let mut buckets = Vec::new();
    for (b, mut items) in members.into_iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        if b == 0 {
            items.sort_by(|&x, &y| (v(y) / w(y)).total_cmp(&(v(x) / w(x))).then(x.cmp(&y)));
        } else {
            items.sort_by(|&x, &y| w(x).total_cmp(&w(y)).then(x.cmp(&y)));
        }
        let mut taken = Vec::new();
        let mut weight = 0.0;
        for i in items {
            if weight >= budget {
                break;
            }
            weight += w(i);
            taken.push(i);
        }
        buckets.push(BucketSelection {
            knapsack: 0,
            bucket: b,
            round: 1,
            items: taken,
            weight,
        });
    }

    let query = ItemSet::new(buckets.iter().flat_map(|s| s.items.iter().copied()), inst.n())?;
    let total: f64 = query.iter().map(w).sum();
    let (lp_degree_bound, integral_degree_bound) = degree_bounds(total / cap);
    Ok(QueryResult {
        algorithm: Algorithm::Kp,
        epsilon: eps,
        p: params.p,
        tau,
        rounds: 1,
        bucket_boundaries: vec![grid.intervals(0)],
        grid,
        query,
        buckets,
        ledger: vec![total],
        lp_degree_bound,
        integral_degree_bound,
        scale_stderr: scales.stderr,
        warnings,
    })
}

/// The GAP sparsifier (also used for MKP and, with `m = 1`, for KP).
pub fn sparsify_gap(inst: &GapInstance, params: &SparsifyParams) -> Result<QueryResult> {
    let mut warnings = Vec::new();
    params.validate(1.0 / 6.0, &mut warnings)?;
    let (n, m) = (inst.n(), inst.m());
    let eps = params.epsilon;
    let e2 = eps * eps;
    let scales = resolve_scales(inst, params, true, &mut warnings)?;
    let k = params
        .k_override
        .unwrap_or_else(|| gap_bucket_count(eps, if scales.global { m } else { 1 }));
    let tau = params.tau_override.map_or_else(|| tau(e2), Ok)?;
    let alpha = params.rounds_alpha.unwrap_or_else(|| default_alpha(eps));
    let rounds = match params.mode {
        Mode::Theory => alpha - 1,
        Mode::Practical => alpha,
    };
    let grid = BucketGrid {
        resolution: e2,
        scales: scales.values.clone(),
        k,
        super_bucket: true,
    };
    let budgets: Vec<f64> = inst.capacities().iter().map(|c| tau * c / params.p).collect();

    // Pairs that can ever be selected, pre-sorted in selection order. A pair
    // only loses eligibility during a round (its item joins Q or its bucket
    // budget runs out), so one pass in this order picks the same pair as
    // repeatedly taking the best remaining one.
    let mut large: Vec<(usize, usize, usize)> = Vec::new();
    let mut small: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if !inst.fits(i, j) {
                continue;
            }
            match grid.bucket_of(j, inst.value(i, j)) {
                0 => small.push((i, j)),
                b => large.push((i, j, b)),
            }
        }
    }
    large.sort_by(|a, b| {
        inst.weight(a.0, a.1)
            .total_cmp(&inst.weight(b.0, b.1))
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    let density = |(i, j): (usize, usize)| inst.value(i, j) / inst.weight(i, j);
    small.sort_by(|&a, &b| density(b).total_cmp(&density(a)).then(a.cmp(&b)));

    let mut in_q = vec![false; n];
    let mut ledger = vec![0.0; m];
    let mut chosen: BTreeMap<(usize, usize, usize), (Vec<usize>, f64)> = BTreeMap::new();
    let width = k + 2;
    let mut remaining = vec![0.0; m * width];
    for t in 1..=rounds {
        for j in 0..m {
            remaining[j * width..(j + 1) * width].fill(budgets[j]);
        }
        let mut picks: Vec<(usize, usize, usize)> = Vec::new();
        for &(i, j, b) in &large {
            if !in_q[i] && remaining[j * width + b] > 0.0 {
                in_q[i] = true;
                remaining[j * width + b] -= inst.weight(i, j);
                picks.push((i, j, b));
            }
        }
        for &(i, j) in &small {
            if !in_q[i] && remaining[j * width] > 0.0 {
                in_q[i] = true;
                remaining[j * width] -= inst.weight(i, j);
                picks.push((i, j, 0));
            }
        }
        for (i, j, b) in picks {
            let w = inst.weight(i, j);
            ledger[j] += w;
            let e = chosen.entry((j, b, t)).or_default();
            e.0.push(i);
            e.1 += w;
        }
    }

    let buckets: Vec<BucketSelection> = chosen
        .into_iter()
        .map(|((knapsack, bucket, round), (items, weight))| BucketSelection {
            knapsack,
            bucket,
            round,
            items,
            weight,
        })
        .collect();
    let query = ItemSet::new((0..n).filter(|&i| in_q[i]), n)?;
    let ratio = ledger
        .iter()
        .zip(inst.capacities())
        .map(|(l, c)| l / c)
        .fold(0.0, f64::max);
    let (lp_degree_bound, integral_degree_bound) = degree_bounds(ratio);
    Ok(QueryResult {
        algorithm: Algorithm::Gap,
        epsilon: eps,
        p: params.p,
        tau,
        rounds,
        bucket_boundaries: (0..m).map(|j| grid.intervals(j)).collect(),
        grid,
        query,
        buckets,
        ledger,
        lp_degree_bound,
        integral_degree_bound,
        scale_stderr: scales.stderr,
        warnings,
    })
}

/// Fixed configuration for the deterministic benchmark: one pass, `p = 1`,
/// `tau = 1`, `e = 0.2`, every scale equal to the LP optimum.
pub fn lp_driven_params(inst: &GapInstance) -> Result<SparsifyParams> {
    const EPS: f64 = 0.2;
    let lp = gap_lp(inst)?.value;
    Ok(SparsifyParams {
        epsilon: EPS,
        p: 1.0,
        oracle: OracleMode::PerKnapsack {
            scales: vec![lp.max(f64::MIN_POSITIVE); inst.m()],
        },
        mode: Mode::Practical,
        rounds_alpha: Some(1),
        tau_override: Some(1.0),
        k_override: Some(lp_driven_bucket_count(EPS)),
    })
}
