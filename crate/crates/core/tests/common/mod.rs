//! Brute-force oracles and small random instances shared by the test targets.
#![allow(dead_code)]

use knapsparse::gen::{
    self, GenParams, Marginal, TABLE_RHOS, VALUE_TRUNC_NORMAL, VALUE_UNIFORM, WEIGHT_TRUNC_NORMAL, WEIGHT_UNIFORM,
};
use knapsparse::rng::splitmix64;
use knapsparse::GapInstance;

/// Optimum over all (m+1)^n assignments, found by depth-first enumeration
/// with capacity pruning only.
pub fn brute_force_gap(inst: &GapInstance) -> f64 {
    fn go(inst: &GapInstance, i: usize, load: &mut [f64], value: f64, best: &mut f64) {
        if i == inst.n() {
            *best = best.max(value);
            return;
        }
        go(inst, i + 1, load, value, best);
        for j in 0..inst.m() {
            let w = inst.weight(i, j);
            let before = load[j];
            if before + w <= inst.capacity(j) {
                // Restore rather than subtract, so rounding cannot accumulate.
                load[j] = before + w;
                go(inst, i + 1, load, value + inst.value(i, j), best);
                load[j] = before;
            }
        }
    }
    let mut best = 0.0;
    go(inst, 0, &mut vec![0.0; inst.m()], 0.0, &mut best);
    best
}

/// Optimum over all 2^n subsets of a single knapsack.
pub fn brute_force_kp(values: &[f64], weights: &[f64], capacity: f64) -> f64 {
    let n = values.len();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        let (mut v, mut w) = (0.0, 0.0);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                v += values[i];
                w += weights[i];
            }
        }
        if w <= capacity {
            best = best.max(v);
        }
    }
    best
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Deterministic stream of small integers for picking test parameters.
pub struct Picker(u64);

impl Picker {
    pub fn new(seed: u64) -> Self {
        Picker(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = splitmix64(self.0);
        self.0
    }

    pub fn below(&mut self, k: usize) -> usize {
        (self.next_u64() % k as u64) as usize
    }

    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

const MARGINALS: [(Marginal, Marginal); 4] = [
    (VALUE_UNIFORM, WEIGHT_UNIFORM),
    (VALUE_UNIFORM, WEIGHT_TRUNC_NORMAL),
    (VALUE_TRUNC_NORMAL, WEIGHT_UNIFORM),
    (VALUE_TRUNC_NORMAL, WEIGHT_TRUNC_NORMAL),
];

/// A generated GAP instance with `n <= n_max`, `m <= m_max` and copula
/// parameters drawn from the full grid's settings.
pub fn small_instance(seed: u64, n_max: usize, m_max: usize) -> GapInstance {
    let mut pick = Picker::new(seed);
    loop {
        let n = pick.range(1, n_max);
        let m = pick.range(1, m_max);
        let (vm, wm) = MARGINALS[pick.below(4)];
        let params = GenParams {
            value_marginal: vm,
            weight_marginal: wm,
            mkp: pick.below(4) == 0,
            ..GenParams::new(
                n,
                m,
                TABLE_RHOS[pick.below(TABLE_RHOS.len())],
                0.5 + 2.5 * pick.unit(),
                pick.next_u64(),
            )
        };
        if let Ok(inst) = gen::generate(&params) {
            return inst;
        }
    }
}

/// A single-knapsack instance with `n` items.
pub fn small_knapsack(seed: u64, n: usize) -> GapInstance {
    let mut pick = Picker::new(seed);
    loop {
        let params = GenParams::new(
            n,
            1,
            TABLE_RHOS[pick.below(TABLE_RHOS.len())],
            0.5 + 3.0 * pick.unit(),
            pick.next_u64(),
        );
        if let Ok(inst) = gen::generate(&params) {
            return inst;
        }
    }
}
