//! Instances, assignments and item sets.
//!
//! Indices are 0-based everywhere, including the JSON format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// 0/1 knapsack, `m == 1`.
    Kp,
    /// Multiple knapsack: values and weights do not depend on the knapsack.
    Mkp,
    /// Generalized assignment.
    Gap,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Kp => "kp",
            ProblemKind::Mkp => "mkp",
            ProblemKind::Gap => "gap",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kp" => Ok(ProblemKind::Kp),
            "mkp" => Ok(ProblemKind::Mkp),
            "gap" => Ok(ProblemKind::Gap),
            other => Err(Error::InvalidInstance(format!("unknown kind `{other}`"))),
        }
    }
}

/// `n` items, `m` knapsacks, value `v[i][j] >= 0`, weight `w[i][j] > 0` and
/// capacity `C[j] > 0`. Tables are stored row-major by item.
///
/// Construction checks finiteness, signs and (for MKP) that rows are
/// constant. Individual feasibility, i.e. every item fitting somewhere, is
/// reported by [`GapInstance::infeasible_items`] rather than enforced, so that
/// a single oversized item can still be represented and rejected by
/// [`validate_assignment`].
#[derive(Clone, Debug, PartialEq)]
pub struct GapInstance {
    kind: ProblemKind,
    n: usize,
    m: usize,
    values: Vec<f64>,
    weights: Vec<f64>,
    capacities: Vec<f64>,
}

impl GapInstance {
    /// Builds an instance from row-major `n * m` tables.
    pub fn from_flat(
        kind: ProblemKind,
        n: usize,
        m: usize,
        values: Vec<f64>,
        weights: Vec<f64>,
        capacities: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInstance("m must be at least 1".into()));
        }
        if kind == ProblemKind::Kp && m != 1 {
            return Err(Error::InvalidInstance(format!("kind kp requires m = 1, got m = {m}")));
        }
        if capacities.len() != m {
            return Err(Error::InvalidInstance(format!(
                "expected {m} capacities, got {}",
                capacities.len()
            )));
        }
        if values.len() != n * m || weights.len() != n * m {
            return Err(Error::InvalidInstance(format!(
                "value/weight tables must have n*m = {} entries",
                n * m
            )));
        }
        for (j, &c) in capacities.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "capacity {j} must be finite and positive, got {c}"
                )));
            }
        }
        for (idx, (&v, &w)) in values.iter().zip(&weights).enumerate() {
            let (i, j) = (idx / m, idx % m);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "value of item {i} in knapsack {j} must be finite and >= 0, got {v}"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "weight of item {i} in knapsack {j} must be finite and > 0, got {w}"
                )));
            }
        }
        if kind == ProblemKind::Mkp {
            for i in 0..n {
                let row = i * m;
                for j in 1..m {
                    if values[row + j] != values[row] || weights[row + j] != weights[row] {
                        return Err(Error::InvalidInstance(format!(
                            "mkp item {i} has knapsack-dependent value or weight"
                        )));
                    }
                }
            }
        }
        Ok(GapInstance {
            kind,
            n,
            m,
            values,
            weights,
            capacities,
        })
    }

    /// Builds an instance from per-item rows.
    pub fn new(kind: ProblemKind, values: Vec<Vec<f64>>, weights: Vec<Vec<f64>>, capacities: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let m = capacities.len();
        if weights.len() != n {
            return Err(Error::InvalidInstance(format!(
                "{n} value rows but {} weight rows",
                weights.len()
            )));
        }
        for (i, (vr, wr)) in values.iter().zip(&weights).enumerate() {
            if vr.len() != m || wr.len() != m {
                return Err(Error::InvalidInstance(format!(
                    "item {i} must have {m} values and weights"
                )));
            }
        }
        Self::from_flat(kind, n, m, values.concat(), weights.concat(), capacities)
    }

    /// A single-knapsack instance.
    pub fn knapsack(values: &[f64], weights: &[f64], capacity: f64) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::InvalidInstance("values and weights differ in length".into()));
        }
        Self::from_flat(
            ProblemKind::Kp,
            values.len(),
            1,
            values.to_vec(),
            weights.to_vec(),
            vec![capacity],
        )
    }

    /// A multiple knapsack instance with knapsack-independent items.
    pub fn multiple_knapsack(values: &[f64], weights: &[f64], capacities: &[f64]) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::InvalidInstance("values and weights differ in length".into()));
        }
        let m = capacities.len();
        let spread = |xs: &[f64]| -> Vec<f64> { xs.iter().flat_map(|&x| std::iter::repeat(x).take(m)).collect() };
        Self::from_flat(
            ProblemKind::Mkp,
            values.len(),
            m,
            spread(values),
            spread(weights),
            capacities.to_vec(),
        )
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }

    #[inline]
    pub fn capacity(&self, j: usize) -> f64 {
        self.capacities[j]
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn value_row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.m..(i + 1) * self.m]
    }

    /// True when item `i` fits into knapsack `j` on its own.
    #[inline]
    pub fn fits(&self, i: usize, j: usize) -> bool {
        self.weight(i, j) <= self.capacity(j)
    }

    /// Items that fit into no knapsack.
    pub fn infeasible_items(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| (0..self.m).all(|j| !self.fits(i, j))).collect()
    }

    pub fn is_individually_feasible(&self) -> bool {
        self.infeasible_items().is_empty()
    }

    /// True when every weight and capacity is integral and small enough to
    /// index a DP table.
    pub fn has_integer_weights(&self) -> bool {
        let integral = |x: f64| x.fract() == 0.0 && x <= 1e15;
        self.weights.iter().all(|&w| integral(w)) && self.capacities.iter().all(|&c| c.is_finite())
    }

    /// Sub-instance on `items`; `map[k]` is the original index of new item `k`.
    pub fn restrict(&self, items: &ItemSet) -> (GapInstance, Vec<usize>) {
        let map: Vec<usize> = items.iter().collect();
        let mut values = Vec::with_capacity(map.len() * self.m);
        let mut weights = Vec::with_capacity(map.len() * self.m);
        for &i in &map {
            values.extend_from_slice(self.value_row(i));
            weights.extend_from_slice(self.weight_row(i));
        }
        let sub = GapInstance {
            kind: self.kind,
            n: map.len(),
            m: self.m,
            values,
            weights,
            capacities: self.capacities.clone(),
        };
        (sub, map)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        file.into_instance()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    kind: ProblemKind,
    n: usize,
    m: usize,
    capacities: Vec<f64>,
    items: Vec<ItemRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

impl From<&GapInstance> for InstanceFile {
    fn from(inst: &GapInstance) -> Self {
        InstanceFile {
            kind: inst.kind,
            n: inst.n,
            m: inst.m,
            capacities: inst.capacities.clone(),
            items: (0..inst.n)
                .map(|i| ItemRecord {
                    values: Some(inst.value_row(i).to_vec()),
                    weights: Some(inst.weight_row(i).to_vec()),
                    value: None,
                    weight: None,
                })
                .collect(),
        }
    }
}

impl InstanceFile {
    fn into_instance(self) -> Result<GapInstance> {
        let InstanceFile {
            kind,
            n,
            m,
            capacities,
            items,
        } = self;
        if items.len() != n {
            return Err(Error::InvalidInstance(format!(
                "header says n = {n} but {} items are listed",
                items.len()
            )));
        }
        if capacities.len() != m {
            return Err(Error::InvalidInstance(format!(
                "header says m = {m} but {} capacities are listed",
                capacities.len()
            )));
        }
        let mut values = Vec::with_capacity(n * m);
        let mut weights = Vec::with_capacity(n * m);
        for (i, item) in items.into_iter().enumerate() {
            let row = |arr: Option<Vec<f64>>, scalar: Option<f64>, what: &str| -> Result<Vec<f64>> {
                match (arr, scalar) {
                    (Some(a), None) if a.len() == m => Ok(a),
                    (Some(a), None) => Err(Error::InvalidInstance(format!(
                        "item {i}: expected {m} {what}s, got {}",
                        a.len()
                    ))),
                    (None, Some(x)) if kind != ProblemKind::Gap => Ok(vec![x; m]),
                    (None, Some(_)) => Err(Error::InvalidInstance(format!(
                        "item {i}: scalar {what} is only accepted for kp/mkp"
                    ))),
                    (Some(_), Some(_)) => Err(Error::InvalidInstance(format!(
                        "item {i}: both `{what}` and `{what}s` given"
                    ))),
                    (None, None) => Err(Error::InvalidInstance(format!("item {i}: missing {what}s"))),
                }
            };
            values.extend(row(item.values, item.value, "value")?);
            weights.extend(row(item.weights, item.weight, "weight")?);
        }
        GapInstance::from_flat(kind, n, m, values, weights, capacities)
    }
}

/// A set of (item, knapsack) pairs, kept sorted by item then knapsack.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pairs: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut pairs: Vec<_> = pairs.into_iter().collect();
        pairs.sort_unstable();
        pairs.dedup();
        Assignment { pairs }
    }

    /// From an item-indexed vector of optional knapsacks.
    pub fn from_vector(vec: &[Option<usize>]) -> Self {
        Assignment {
            pairs: vec.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect(),
        }
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        if let Err(pos) = self.pairs.binary_search(&(i, j)) {
            self.pairs.insert(pos, (i, j));
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Item indices in ascending order (may repeat if the assignment is invalid).
    pub fn items(&self) -> Vec<usize> {
        self.pairs.iter().map(|&(i, _)| i).collect()
    }

    pub fn item_set(&self) -> ItemSet {
        ItemSet::from_sorted_unchecked(self.distinct_items())
    }

    fn distinct_items(&self) -> Vec<usize> {
        let mut items = self.items();
        items.dedup();
        items
    }

    /// Knapsack of item `i`, if assigned (the first one if assigned twice).
    pub fn knapsack_of(&self, i: usize) -> Option<usize> {
        let pos = self.pairs.partition_point(|&(a, _)| a < i);
        self.pairs.get(pos).filter(|&&(a, _)| a == i).map(|&(_, j)| j)
    }

    /// Item-indexed vector of assigned knapsacks.
    pub fn to_vector(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for &(i, j) in &self.pairs {
            if i < n && out[i].is_none() {
                out[i] = Some(j);
            }
        }
        out
    }

    /// Rewrites item indices through `map` (sub-instance index to original).
    pub fn remap(&self, map: &[usize]) -> Assignment {
        Assignment::from_pairs(self.pairs.iter().map(|&(i, j)| (map[i], j)))
    }

    pub fn has_unique_items(&self) -> bool {
        self.pairs.windows(2).all(|w| w[0].0 != w[1].0)
    }
}

fn check_pairs(inst: &GapInstance, a: &Assignment) -> Result<()> {
    for &(i, j) in a.pairs() {
        if i >= inst.n() {
            return Err(Error::ItemOutOfRange { index: i, n: inst.n() });
        }
        if j >= inst.m() {
            return Err(Error::KnapsackOutOfRange { index: j, m: inst.m() });
        }
    }
    Ok(())
}

/// True iff every item appears at most once and no knapsack is overfull.
pub fn validate_assignment(inst: &GapInstance, a: &Assignment) -> Result<bool> {
    check_pairs(inst, a)?;
    if !a.has_unique_items() {
        return Ok(false);
    }
    let loads = loads_unchecked(inst, a);
    Ok(loads.iter().zip(inst.capacities()).all(|(l, c)| l <= c))
}

/// Sum of `v[i][j]` over the pairs, accumulated in pair order.
pub fn assignment_value(inst: &GapInstance, a: &Assignment) -> Result<f64> {
    check_pairs(inst, a)?;
    Ok(a.pairs().iter().map(|&(i, j)| inst.value(i, j)).sum())
}

/// Total weight placed in knapsack `j`.
pub fn knapsack_load(inst: &GapInstance, a: &Assignment, j: usize) -> Result<f64> {
    check_pairs(inst, a)?;
    if j >= inst.m() {
        return Err(Error::KnapsackOutOfRange { index: j, m: inst.m() });
    }
    Ok(a.pairs()
        .iter()
        .filter(|&&(_, k)| k == j)
        .map(|&(i, _)| inst.weight(i, j))
        .sum())
}

fn loads_unchecked(inst: &GapInstance, a: &Assignment) -> Vec<f64> {
    let mut loads = vec![0.0; inst.m()];
    for &(i, j) in a.pairs() {
        loads[j] += inst.weight(i, j);
    }
    loads
}

/// Per-knapsack loads.
pub fn knapsack_loads(inst: &GapInstance, a: &Assignment) -> Result<Vec<f64>> {
    check_pairs(inst, a)?;
    Ok(loads_unchecked(inst, a))
}

/// Sorted set of distinct item indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemSet {
    items: Vec<usize>,
}

impl ItemSet {
    /// Sorts and de-duplicates `indices`; fails if any index is `>= n`.
    pub fn new(indices: impl IntoIterator<Item = usize>, n: usize) -> Result<Self> {
        let mut items: Vec<usize> = indices.into_iter().collect();
        if let Some(&bad) = items.iter().find(|&&i| i >= n) {
            return Err(Error::ItemOutOfRange { index: bad, n });
        }
        items.sort_unstable();
        items.dedup();
        Ok(ItemSet { items })
    }

    pub(crate) fn from_sorted_unchecked(items: Vec<usize>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        ItemSet { items }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full(n: usize) -> Self {
        ItemSet {
            items: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.items.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.items
    }

    pub fn intersect(&self, other: &ItemSet) -> ItemSet {
        let (mut a, mut b) = (0, 0);
        let mut out = Vec::new();
        while a < self.items.len() && b < other.items.len() {
            match self.items[a].cmp(&other.items[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.items[a]);
                    a += 1;
                    b += 1;
                }
            }
        }
        ItemSet { items: out }
    }

    pub fn union(&self, other: &ItemSet) -> ItemSet {
        let mut items = self.items.clone();
        items.extend_from_slice(&other.items);
        items.sort_unstable();
        items.dedup();
        ItemSet { items }
    }

    pub fn is_subset(&self, other: &ItemSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Membership mask of length `n`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.items {
            mask[i] = true;
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_items() -> GapInstance {
        GapInstance::knapsack(&[10.0, 6.0, 5.0], &[5.0, 4.0, 3.0], 7.0).unwrap()
    }

    #[test]
    fn validate_examples() {
        let inst = three_items();
        assert!(validate_assignment(&inst, &Assignment::new()).unwrap());
        let a = Assignment::from_pairs([(1, 0), (2, 0)]);
        assert!(validate_assignment(&inst, &a).unwrap());
        let single = GapInstance::knapsack(&[1.0], &[5.0], 4.0).unwrap();
        assert!(!validate_assignment(&single, &Assignment::from_pairs([(0, 0)])).unwrap());
        assert_eq!(single.infeasible_items(), vec![0]);
    }

    #[test]
    fn duplicate_item_is_infeasible_not_an_error() {
        let inst = GapInstance::multiple_knapsack(&[1.0], &[1.0], &[5.0, 5.0]).unwrap();
        let a = Assignment::from_pairs([(0, 0), (0, 1)]);
        assert!(!validate_assignment(&inst, &a).unwrap());
    }

    #[test]
    fn out_of_range_is_an_error() {
        let inst = three_items();
        assert!(matches!(
            validate_assignment(&inst, &Assignment::from_pairs([(3, 0)])),
            Err(Error::ItemOutOfRange { index: 3, n: 3 })
        ));
        assert!(matches!(
            assignment_value(&inst, &Assignment::from_pairs([(0, 1)])),
            Err(Error::KnapsackOutOfRange { index: 1, m: 1 })
        ));
    }

    #[test]
    fn value_and_load_examples() {
        let inst = three_items();
        let a = Assignment::from_pairs([(1, 0), (2, 0)]);
        assert_eq!(assignment_value(&inst, &Assignment::new()).unwrap(), 0.0);
        assert_eq!(assignment_value(&inst, &a).unwrap(), 11.0);
        assert_eq!(
            assignment_value(&inst, &Assignment::from_pairs([(0, 0)])).unwrap(),
            10.0
        );
        assert_eq!(knapsack_load(&inst, &a, 0).unwrap(), 7.0);
        assert_eq!(knapsack_load(&inst, &Assignment::new(), 0).unwrap(), 0.0);

        let two = GapInstance::multiple_knapsack(&[10.0, 6.0, 5.0], &[5.0, 4.0, 3.0], &[7.0, 7.0]).unwrap();
        assert_eq!(knapsack_load(&two, &a, 1).unwrap(), 0.0);
    }

    #[test]
    fn restrict_examples() {
        let inst = three_items();
        let (same, map) = inst.restrict(&ItemSet::full(3));
        assert_eq!(same, inst);
        assert_eq!(map, vec![0, 1, 2]);

        let (empty, map) = inst.restrict(&ItemSet::empty());
        assert_eq!(empty.n(), 0);
        assert!(map.is_empty());

        let (sub, map) = inst.restrict(&ItemSet::new([2, 0], 3).unwrap());
        assert_eq!(sub.n(), 2);
        assert_eq!(map, vec![0, 2]);
        assert_eq!(sub.value(1, 0), 5.0);
    }

    #[test]
    fn construction_rejects_bad_numbers() {
        assert!(GapInstance::knapsack(&[1.0], &[0.0], 1.0).is_err());
        assert!(GapInstance::knapsack(&[-1.0], &[1.0], 1.0).is_err());
        assert!(GapInstance::knapsack(&[f64::NAN], &[1.0], 1.0).is_err());
        assert!(GapInstance::knapsack(&[1.0], &[1.0], 0.0).is_err());
        assert!(
            GapInstance::from_flat(ProblemKind::Mkp, 1, 2, vec![1.0, 2.0], vec![1.0, 1.0], vec![1.0, 1.0]).is_err()
        );
        assert!(GapInstance::from_flat(ProblemKind::Kp, 1, 2, vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn json_round_trip_and_scalar_broadcast() {
        let inst = GapInstance::new(
            ProblemKind::Gap,
            vec![vec![0.1, 1.0 / 3.0], vec![2.5e-300, 7.0]],
            vec![vec![std::f64::consts::PI, 1.0], vec![0.3, 1e10]],
            vec![3.5, 2.0],
        )
        .unwrap();
        let back = GapInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back, inst);

        let mkp = r#"{"kind":"mkp","n":2,"m":2,"capacities":[4,5],
            "items":[{"value":3,"weight":2},{"values":[1,1],"weights":[2,2]}]}"#;
        let inst = GapInstance::from_json(mkp).unwrap();
        assert_eq!(inst.value(0, 1), 3.0);
        assert_eq!(inst.weight(1, 0), 2.0);

        let gap_scalar = r#"{"kind":"gap","n":1,"m":1,"capacities":[4],"items":[{"value":3,"weight":2}]}"#;
        assert!(GapInstance::from_json(gap_scalar).is_err());
        let wrong_n = r#"{"kind":"kp","n":2,"m":1,"capacities":[4],"items":[{"value":3,"weight":2}]}"#;
        assert!(GapInstance::from_json(wrong_n).is_err());
    }

    #[test]
    fn item_set_ops() {
        let a = ItemSet::new([5, 1, 3, 1], 6).unwrap();
        assert_eq!(a.as_slice(), &[1, 3, 5]);
        assert!(ItemSet::new([6], 6).is_err());
        let b = ItemSet::new([0, 3, 5], 6).unwrap();
        assert_eq!(a.intersect(&b).as_slice(), &[3, 5]);
        assert_eq!(a.union(&b).as_slice(), &[0, 1, 3, 5]);
        assert!(a.intersect(&b).is_subset(&a));
    }

    #[test]
    fn assignment_lookup() {
        let a = Assignment::from_pairs([(4, 1), (0, 2), (2, 0)]);
        assert_eq!(a.pairs(), &[(0, 2), (2, 0), (4, 1)]);
        assert_eq!(a.knapsack_of(2), Some(0));
        assert_eq!(a.knapsack_of(3), None);
        assert_eq!(a.to_vector(5), vec![Some(2), None, Some(0), None, Some(1)]);
        assert_eq!(Assignment::from_vector(&a.to_vector(5)), a);
    }
}
