//! Synthetic instances: Gaussian-copula coupled value/weight marginals with
//! capacities tuned to a redundancy target.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{invalid_param, Error, Result};
use crate::instance::{GapInstance, ProblemKind};
use crate::rng::{cell_stream, stream_rng};
use crate::stats::quantile;

/// Added to every generated weight to break ties and keep weights positive.
pub const WEIGHT_OFFSET: f64 = 0.01;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile, `u` in (0, 1).
pub fn std_normal_quantile(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { a: f64, b: f64 },
    TruncNormal { mu: f64, sigma: f64, lo: f64, hi: f64 },
}

pub const VALUE_UNIFORM: Marginal = Marginal::Uniform { a: 0.0, b: 100.0 };
pub const VALUE_TRUNC_NORMAL: Marginal = Marginal::TruncNormal {
    mu: 50.0,
    sigma: 15.0,
    lo: 0.0,
    hi: 100.0,
};
pub const WEIGHT_UNIFORM: Marginal = Marginal::Uniform { a: 1.0, b: 20.0 };
pub const WEIGHT_TRUNC_NORMAL: Marginal = Marginal::TruncNormal {
    mu: 10.0,
    sigma: 5.0,
    lo: 1.0,
    hi: 30.0,
};

impl Marginal {
    pub fn validate(&self, name: &'static str) -> Result<()> {
        match *self {
            Marginal::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(invalid_param(
                        name,
                        format!("uniform bounds must satisfy a < b, got ({a}, {b})"),
                    ));
                }
            }
            Marginal::TruncNormal { mu, sigma, lo, hi } => {
                if !(mu.is_finite() && lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(invalid_param(
                        name,
                        format!("truncation bounds must satisfy lo < hi, got ({lo}, {hi})"),
                    ));
                }
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(invalid_param(name, format!("sigma must be positive, got {sigma}")));
                }
                let (flo, fhi) = self.trunc_mass();
                if fhi - flo <= 0.0 {
                    return Err(invalid_param(name, "truncation interval carries no normal mass"));
                }
            }
        }
        Ok(())
    }

    fn trunc_mass(&self) -> (f64, f64) {
        match *self {
            Marginal::TruncNormal { mu, sigma, lo, hi } => {
                (std_normal_cdf((lo - mu) / sigma), std_normal_cdf((hi - mu) / sigma))
            }
            Marginal::Uniform { .. } => (0.0, 1.0),
        }
    }

    pub fn lower_bound(&self) -> f64 {
        match *self {
            Marginal::Uniform { a, .. } => a,
            Marginal::TruncNormal { lo, .. } => lo,
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match *self {
            Marginal::Uniform { b, .. } => b,
            Marginal::TruncNormal { hi, .. } => hi,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Marginal::TruncNormal { mu, sigma, lo, hi } => {
                if x <= lo {
                    return 0.0;
                }
                if x >= hi {
                    return 1.0;
                }
                let (flo, fhi) = self.trunc_mass();
                ((std_normal_cdf((x - mu) / sigma) - flo) / (fhi - flo)).clamp(0.0, 1.0)
            }
        }
    }

    /// Quantile function; `u` must lie strictly inside (0, 1).
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid_param("u", format!("must lie in (0, 1), got {u}")));
        }
        Ok(match *self {
            Marginal::Uniform { a, b } => a + u * (b - a),
            Marginal::TruncNormal { mu, sigma, lo, hi } => {
                let (flo, fhi) = self.trunc_mass();
                let z = std_normal_quantile(flo + u * (fhi - flo));
                (mu + sigma * z).clamp(lo, hi)
            }
        })
    }
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Marginal::Uniform { a, b } => write!(f, "uniform({a},{b})"),
            Marginal::TruncNormal { mu, sigma, lo, hi } => {
                write!(f, "truncnormal({mu},{sigma},{lo},{hi})")
            }
        }
    }
}

impl FromStr for Marginal {
    type Err = Error;

    /// Accepts `uniform(a,b)`, `truncnormal(mu,sigma,lo,hi)` or the same with
    /// a colon instead of parentheses, e.g. `uniform:0,100`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid_param("marginal", format!("cannot parse `{s}`"));
        let t = s.trim().replace('(', ":").replace(')', "");
        let (name, args) = t.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let m = match (name.trim(), nums.as_slice()) {
            ("uniform", &[a, b]) => Marginal::Uniform { a, b },
            ("truncnormal" | "tn", &[mu, sigma, lo, hi]) => Marginal::TruncNormal { mu, sigma, lo, hi },
            _ => return Err(bad()),
        };
        m.validate("marginal")?;
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopulaSample {
    pub u1: f64,
    pub u2: f64,
}

// Largest double below 1 and a matching floor, so quantile functions never
// see 0 or 1 after Φ rounds in the far tails.
const U_MIN: f64 = 1e-16;
const U_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

fn copula_draw(rho: f64, rng: &mut ChaCha8Rng) -> CopulaSample {
    let z1: f64 = rng.sample(StandardNormal);
    let e: f64 = rng.sample(StandardNormal);
    let z2 = rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * e;
    CopulaSample {
        u1: std_normal_cdf(z1).clamp(U_MIN, U_MAX),
        u2: std_normal_cdf(z2).clamp(U_MIN, U_MAX),
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(invalid_param("rho", format!("must lie in [-1, 1], got {rho}")));
    }
    Ok(())
}

/// `count` samples from the Gaussian copula with correlation `rho`. Sample
/// `k` is drawn from its own stream, so any prefix is stable in `count`.
pub fn gaussian_copula_pairs(rho: f64, count: usize, seed: u64) -> Result<Vec<CopulaSample>> {
    check_rho(rho)?;
    Ok((0..count)
        .map(|k| copula_draw(rho, &mut stream_rng(seed, k as u64)))
        .collect())
}

/// Spearman rank correlation of the Gaussian copula.
pub fn copula_spearman(rho: f64) -> f64 {
    6.0 / std::f64::consts::PI * (rho / 2.0).asin()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub redundancy_target: f64,
    pub value_marginal: Marginal,
    pub weight_marginal: Marginal,
    pub seed: u64,
    /// Emit an MKP instance: one draw per item, shared by all knapsacks.
    #[serde(default)]
    pub mkp: bool,
}

impl GenParams {
    pub fn new(n: usize, m: usize, rho: f64, redundancy_target: f64, seed: u64) -> Self {
        GenParams {
            n,
            m,
            rho,
            redundancy_target,
            value_marginal: VALUE_UNIFORM,
            weight_marginal: WEIGHT_UNIFORM,
            seed,
            mkp: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid_param("n", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(invalid_param("m", "must be at least 1"));
        }
        check_rho(self.rho)?;
        if !(self.redundancy_target.is_finite() && self.redundancy_target > 0.0) {
            return Err(invalid_param(
                "redundancy_target",
                format!("must be positive, got {}", self.redundancy_target),
            ));
        }
        self.value_marginal.validate("value_marginal")?;
        self.weight_marginal.validate("weight_marginal")?;
        if self.value_marginal.lower_bound() < 0.0 {
            return Err(invalid_param("value_marginal", "values must be non-negative"));
        }
        if self.weight_marginal.lower_bound() + WEIGHT_OFFSET <= 0.0 {
            return Err(invalid_param(
                "weight_marginal",
                "lower bound plus the 0.01 offset must be positive",
            ));
        }
        Ok(())
    }

    fn kind(&self) -> ProblemKind {
        if self.m == 1 {
            ProblemKind::Kp
        } else if self.mkp {
            ProblemKind::Mkp
        } else {
            ProblemKind::Gap
        }
    }
}

/// A generated instance with generation diagnostics.
#[derive(Clone, Debug)]
pub struct Generated {
    pub instance: GapInstance,
    /// 5% quantile of all weights (after the offset).
    pub weight_quantile: f64,
    /// Items whose smallest weight was clamped down to fit.
    pub clamped_items: usize,
}

pub fn generate(params: &GenParams) -> Result<GapInstance> {
    generate_with_report(params).map(|g| g.instance)
}

pub fn generate_with_report(params: &GenParams) -> Result<Generated> {
    params.validate()?;
    let GenParams { n, m, rho, .. } = *params;
    let draws_per_item = if params.mkp { 1 } else { m };
    let mut values = Vec::with_capacity(n * m);
    let mut weights = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let cell = if j < draws_per_item {
                let mut rng = stream_rng(params.seed, cell_stream(i, j));
                let s = copula_draw(rho, &mut rng);
                (
                    params.value_marginal.inverse_cdf(s.u1)?,
                    params.weight_marginal.inverse_cdf(s.u2)? + WEIGHT_OFFSET,
                )
            } else {
                (values[i * m], weights[i * m])
            };
            values.push(cell.0);
            weights.push(cell.1);
        }
    }

    let q = quantile(&weights, 0.05);
    let cap = q * n as f64 / m as f64 / params.redundancy_target;
    let min_w = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if !(cap >= min_w) {
        return Err(invalid_param(
            "redundancy_target",
            format!(
                "capacity {cap} from target {} is below the smallest weight {min_w}; lower the target",
                params.redundancy_target
            ),
        ));
    }

    let mut clamped_items = 0;
    for i in 0..n {
        let row = &mut weights[i * m..(i + 1) * m];
        if row.iter().all(|&w| w > cap) {
            if params.mkp {
                row.fill(cap);
            } else {
                let j = (0..m).min_by(|&a, &b| row[a].total_cmp(&row[b])).expect("m >= 1");
                row[j] = cap;
            }
            clamped_items += 1;
        }
    }
    if clamped_items > 0 {
        log::debug!("generator clamped {clamped_items} item(s) to capacity {cap}");
    }

    let instance = GapInstance::from_flat(params.kind(), n, m, values, weights, vec![cap; m])?;
    Ok(Generated {
        instance,
        weight_quantile: q,
        clamped_items,
    })
}

/// A parameter grid. `expand` walks it in a fixed nested order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub rhos: Vec<f64>,
    pub redundancy_targets: Vec<f64>,
    pub marginals: Vec<(Marginal, Marginal)>,
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub instance_id: String,
    pub params: GenParams,
}

/// Value/weight marginal pairs used by the full grid.
pub fn marginal_pairs() -> Vec<(Marginal, Marginal)> {
    vec![
        (VALUE_UNIFORM, WEIGHT_UNIFORM),
        (VALUE_UNIFORM, WEIGHT_TRUNC_NORMAL),
        (VALUE_TRUNC_NORMAL, WEIGHT_UNIFORM),
        (VALUE_TRUNC_NORMAL, WEIGHT_TRUNC_NORMAL),
    ]
}

pub const TABLE_RHOS: [f64; 7] = [-0.8, -0.5, -0.3, 0.0, 0.3, 0.5, 0.8];

impl GridSpec {
    /// The full grid: n up to 10 000, 7 correlations, 10 targets, 8 replicates.
    pub fn full() -> Self {
        GridSpec {
            ns: vec![1000, 2000, 5000, 10000],
            ms: vec![1, 2, 5],
            rhos: TABLE_RHOS.to_vec(),
            redundancy_targets: vec![1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 22.0, 36.0, 60.0, 100.0],
            marginals: marginal_pairs(),
            replicates: 8,
        }
    }

    /// The full grid with every `n` multiplied by `factor` and rounded.
    pub fn scaled(factor: f64) -> Self {
        let mut g = Self::full();
        g.ns =
            g.ns.iter()
                .map(|&n| ((n as f64 * factor).round() as usize).max(1))
                .collect();
        g
    }

    /// Small grid that an in-house solver finishes in minutes.
    pub fn desk() -> Self {
        GridSpec {
            ns: vec![100, 200, 500],
            ms: vec![1, 2],
            rhos: vec![-0.5, 0.0, 0.5],
            redundancy_targets: vec![2.0, 8.0, 22.0],
            marginals: vec![(VALUE_UNIFORM, WEIGHT_UNIFORM)],
            replicates: 3,
        }
    }

    pub fn len(&self) -> usize {
        self.ns.len()
            * self.ms.len()
            * self.rhos.len()
            * self.redundancy_targets.len()
            * self.marginals.len()
            * self.replicates
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All grid points with per-row seeds drawn from the master seed after a
    /// fixed burn-in.
    pub fn expand(&self, master_seed: u64) -> Vec<GridPoint> {
        let mut seeds = ChaCha8Rng::seed_from_u64(master_seed);
        for _ in 0..1024 {
            seeds.random::<u64>();
        }
        let mut out = Vec::with_capacity(self.len());
        for &n in &self.ns {
            for &m in &self.ms {
                for &rho in &self.rhos {
                    for &r in &self.redundancy_targets {
                        for (mi, &(vm, wm)) in self.marginals.iter().enumerate() {
                            for rep in 0..self.replicates {
                                let seed = seeds.random::<u64>();
                                out.push(GridPoint {
                                    instance_id: format!("n{n}_m{m}_rho{rho}_r{r}_d{mi}_rep{rep}"),
                                    params: GenParams {
                                        n,
                                        m,
                                        rho,
                                        redundancy_target: r,
                                        value_marginal: vm,
                                        weight_marginal: wm,
                                        seed,
                                        mkp: false,
                                    },
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf_examples() {
        assert_eq!(VALUE_UNIFORM.inverse_cdf(0.5).unwrap(), 50.0);
        assert!((VALUE_TRUNC_NORMAL.inverse_cdf(0.5).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(WEIGHT_UNIFORM.inverse_cdf(0.25).unwrap(), 5.75);
        assert!(VALUE_UNIFORM.inverse_cdf(0.0).is_err());
        assert!(VALUE_UNIFORM.inverse_cdf(1.0).is_err());
        assert!(VALUE_UNIFORM.inverse_cdf(f64::NAN).is_err());
    }

    #[test]
    fn normal_cdf_and_quantile_agree() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.959963984540054) - 0.975).abs() < 1e-11);
        for &u in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            assert!((std_normal_cdf(std_normal_quantile(u)) - u).abs() < 1e-10);
        }
    }

    #[test]
    fn truncnormal_cdf_inverts_quantile() {
        for &u in &[0.01, 0.2, 0.5, 0.9, 0.999] {
            let x = WEIGHT_TRUNC_NORMAL.inverse_cdf(u).unwrap();
            assert!((WEIGHT_TRUNC_NORMAL.cdf(x) - u).abs() < 1e-9);
            assert!((1.0..=30.0).contains(&x));
        }
    }

    #[test]
    fn marginal_parsing() {
        assert_eq!("uniform(0,100)".parse::<Marginal>().unwrap(), VALUE_UNIFORM);
        assert_eq!("uniform:1,20".parse::<Marginal>().unwrap(), WEIGHT_UNIFORM);
        assert_eq!(
            VALUE_TRUNC_NORMAL.to_string().parse::<Marginal>().unwrap(),
            VALUE_TRUNC_NORMAL
        );
        assert!("uniform(3,1)".parse::<Marginal>().is_err());
        assert!("beta(1,2)".parse::<Marginal>().is_err());
    }

    #[test]
    fn perfect_dependence() {
        for s in gaussian_copula_pairs(1.0, 1000, 3).unwrap() {
            assert_eq!(s.u1, s.u2);
        }
        for s in gaussian_copula_pairs(-1.0, 1000, 3).unwrap() {
            assert!((s.u1 + s.u2 - 1.0).abs() < 1e-12);
        }
        assert!(gaussian_copula_pairs(1.5, 1, 0).is_err());
    }

    #[test]
    fn capacity_rule() {
        let p = GenParams::new(100, 2, 0.3, 5.0, 11);
        let g = generate_with_report(&p).unwrap();
        let mut all = Vec::new();
        for i in 0..100 {
            all.extend_from_slice(g.instance.weight_row(i));
        }
        let q = quantile(&all, 0.05);
        // Clamping only lowers weights above capacity, so the low quantile is untouched.
        assert_eq!(q, g.weight_quantile);
        for j in 0..2 {
            assert_eq!(g.instance.capacity(j), q * 50.0 / 5.0);
        }
        assert!(g.instance.is_individually_feasible());
    }

    #[test]
    fn generation_is_deterministic() {
        let p = GenParams::new(50, 3, -0.5, 8.0, 99);
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        let mut q = p.clone();
        q.seed = 100;
        assert_ne!(generate(&p).unwrap(), generate(&q).unwrap());
    }

    #[test]
    fn degenerate_capacity_names_target() {
        let p = GenParams::new(10, 2, 0.0, 1000.0, 1);
        match generate(&p) {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "redundancy_target"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weights_respect_offset() {
        let mut p = GenParams::new(200, 2, 0.8, 2.0, 5);
        p.weight_marginal = WEIGHT_TRUNC_NORMAL;
        let inst = generate(&p).unwrap();
        for i in 0..inst.n() {
            for j in 0..inst.m() {
                assert!(inst.weight(i, j) >= 1.0 + WEIGHT_OFFSET);
            }
        }
    }

    #[test]
    fn mkp_generation_shares_rows() {
        let mut p = GenParams::new(30, 3, 0.0, 2.0, 5);
        p.mkp = true;
        let inst = generate(&p).unwrap();
        assert_eq!(inst.kind(), ProblemKind::Mkp);
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(GridSpec::desk().len(), 162);
        assert_eq!(GridSpec::scaled(0.1).ns, vec![100, 200, 500, 1000]);
        let g = GridSpec::desk();
        let a = g.expand(42);
        assert_eq!(a.len(), 162);
        assert_eq!(a, g.expand(42));
        assert_ne!(a[0].params.seed, a[1].params.seed);
    }
}
