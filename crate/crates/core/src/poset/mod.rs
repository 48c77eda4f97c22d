//! Strict partial orders stored as transitive closures, chain covers, and
//! the mixing property.

mod rotation_poset;

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bitset::BitSet;
use crate::rotation::Rotation;

pub use rotation_poset::{
    agent_chain_cover, build_lattice, build_rotation_poset, enumerate_stable_matchings,
    matching_from_downset, matching_from_elimination_order, LatticeEdge, LatticeWalk,
    RotationPoset, StableLattice, DEFAULT_GUARD,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PosetError {
    #[error("relation has a cycle through element {0}")]
    Cyclic(usize),
    #[error("element {0} precedes itself")]
    Reflexive(usize),
    #[error("relation is not transitive: {0} < {1} < {2}")]
    NotTransitive(usize, usize, usize),
    #[error("relation is not antisymmetric on {0} and {1}")]
    NotAntisymmetric(usize, usize),
    #[error("element {0} out of range")]
    OutOfRange(usize),
    #[error("not a downset: {missing} is below {member} but missing")]
    NotADownset { member: usize, missing: usize },
    #[error("lattice budget of {limit} matchings exceeded")]
    BudgetExceeded { limit: usize },
    #[error("rotation {0} is exposed in the lattice but absent from the elimination sequence")]
    UnknownRotation(Rotation),
    #[error("rotation {0} is not exposed where the order requires it")]
    RotationNotExposed(Rotation),
    #[error("two paths reach matching {0} with different rotation sets")]
    InconsistentRotationSet(usize),
    #[error("chain {chain}: elements {a} and {b} are incomparable")]
    ComparabilityViolation { chain: String, a: usize, b: usize },
    #[error("invalid size: {0}")]
    InvalidSize(String),
}

/// A finite strict partial order on `0..len`.
///
/// `down[v]` holds every `u` with `u < v`; `up[v]` every `u` with `v < u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poset {
    down: Vec<BitSet>,
    up: Vec<BitSet>,
}

impl Poset {
    /// Transitive closure of the given `(lower, upper)` pairs.
    pub fn from_relations(len: usize, pairs: &[(usize, usize)]) -> Result<Self, PosetError> {
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); len];
        let mut out_deg = vec![0usize; len];
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); len];
        for &(u, v) in pairs {
            if u >= len || v >= len {
                return Err(PosetError::OutOfRange(u.max(v)));
            }
            if u == v {
                return Err(PosetError::Reflexive(u));
            }
            preds[v].push(u);
            succs[u].push(v);
        }
        for v in 0..len {
            out_deg[v] = preds[v].len();
        }
        // Kahn's algorithm over the "lower first" direction.
        let mut queue: VecDeque<usize> = (0..len).filter(|&v| out_deg[v] == 0).collect();
        let mut order = Vec::with_capacity(len);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &succs[u] {
                out_deg[v] -= 1;
                if out_deg[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
        if order.len() != len {
            let stuck = (0..len).find(|&v| out_deg[v] > 0).unwrap();
            return Err(PosetError::Cyclic(stuck));
        }
        let mut down = vec![BitSet::new(len); len];
        for &v in &order {
            let mut row = BitSet::new(len);
            for &u in &preds[v] {
                row.insert(u);
                row.union_with(&down[u]);
            }
            down[v] = row;
        }
        Ok(Poset::from_closed_rows(down))
    }

    /// Accepts precomputed strict down-sets after checking they form a
    /// strict partial order.
    pub fn from_down_sets(down: Vec<BitSet>) -> Result<Self, PosetError> {
        let len = down.len();
        for (v, row) in down.iter().enumerate() {
            if row.capacity() != len {
                return Err(PosetError::OutOfRange(row.capacity()));
            }
            if row.contains(v) {
                return Err(PosetError::Reflexive(v));
            }
            for u in row {
                if down[u].contains(v) {
                    return Err(PosetError::NotAntisymmetric(u, v));
                }
                if let Some(w) = down[u].iter().find(|&w| !row.contains(w)) {
                    return Err(PosetError::NotTransitive(w, u, v));
                }
            }
        }
        Ok(Poset::from_closed_rows(down))
    }

    fn from_closed_rows(down: Vec<BitSet>) -> Self {
        let len = down.len();
        let mut up = vec![BitSet::new(len); len];
        for (v, row) in down.iter().enumerate() {
            for u in row {
                up[u].insert(v);
            }
        }
        Poset { down, up }
    }

    pub fn antichain(len: usize) -> Self {
        Poset::from_closed_rows(vec![BitSet::new(len); len])
    }

    /// `k` disjoint chains of length `len`; element `c * len + i` is the
    /// `i`-th element of chain `c`.
    pub fn disjoint_chains(k: usize, len: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (0..k)
            .flat_map(|c| (1..len).map(move |i| (c * len + i - 1, c * len + i)))
            .collect();
        Poset::from_relations(k * len, &pairs).expect("chains are acyclic")
    }

    pub fn chain(len: usize) -> Self {
        Poset::disjoint_chains(1, len)
    }

    pub fn len(&self) -> usize {
        self.down.len()
    }

    pub fn is_empty(&self) -> bool {
        self.down.is_empty()
    }

    /// `u < v`.
    #[inline]
    pub fn precedes(&self, u: usize, v: usize) -> bool {
        self.down[v].contains(u)
    }

    /// `v` dominates `u`, i.e. `u < v`.
    #[inline]
    pub fn dominates(&self, v: usize, u: usize) -> bool {
        self.precedes(u, v)
    }

    pub fn comparable(&self, u: usize, v: usize) -> bool {
        self.precedes(u, v) || self.precedes(v, u)
    }

    /// Elements strictly below `v`.
    pub fn down(&self, v: usize) -> &BitSet {
        &self.down[v]
    }

    /// Elements strictly above `v`.
    pub fn up(&self, v: usize) -> &BitSet {
        &self.up[v]
    }

    /// Number of related pairs in the closure.
    pub fn relation_size(&self) -> usize {
        self.down.iter().map(BitSet::len).sum()
    }

    /// The order with every relation reversed.
    pub fn dual(&self) -> Poset {
        Poset {
            down: self.up.clone(),
            up: self.down.clone(),
        }
    }

    /// Covering pairs `(u, v)`: `u < v` with nothing strictly between.
    pub fn covers(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for v in 0..self.len() {
            let mut indirect = BitSet::new(self.len());
            for w in &self.down[v] {
                indirect.union_with(&self.down[w]);
            }
            for u in &self.down[v] {
                if !indirect.contains(u) {
                    out.push((u, v));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Elements sorted so that every element follows everything below it.
    pub fn linear_extension(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&v| (self.down[v].len(), v));
        order
    }

    pub fn is_downset(&self, set: &BitSet) -> bool {
        set.iter().all(|v| self.down[v].is_subset(set))
    }

    /// Exhaustive check of irreflexivity, antisymmetry and transitivity.
    pub fn check_strict_order(&self) -> Result<(), PosetError> {
        Poset::from_down_sets(self.down.clone()).map(|_| ())
    }
}

/// A canonically sorted downward-closed subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Downset {
    elements: Vec<usize>,
}

impl Downset {
    pub fn new(poset: &Poset, mut elements: Vec<usize>) -> Result<Self, PosetError> {
        elements.sort_unstable();
        elements.dedup();
        if let Some(&bad) = elements.iter().find(|&&v| v >= poset.len()) {
            return Err(PosetError::OutOfRange(bad));
        }
        let set = BitSet::from_indices(poset.len(), elements.iter().copied());
        for &v in &elements {
            if let Some(missing) = poset.down(v).iter().find(|&u| !set.contains(u)) {
                return Err(PosetError::NotADownset { member: v, missing });
            }
        }
        Ok(Downset { elements })
    }

    pub fn from_bitset(poset: &Poset, set: &BitSet) -> Result<Self, PosetError> {
        Downset::new(poset, set.iter().collect())
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn to_bitset(&self, capacity: usize) -> BitSet {
        BitSet::from_indices(capacity, self.elements.iter().copied())
    }
}

/// A family of chains (not necessarily disjoint) over a poset's elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainCover {
    chains: Vec<Vec<usize>>,
    labels: Vec<String>,
    membership: Vec<Vec<usize>>,
}

impl ChainCover {
    pub fn new(n_elements: usize, chains: Vec<Vec<usize>>) -> Self {
        let labels = (1..=chains.len()).map(|i| format!("c{i}")).collect();
        ChainCover::with_labels(n_elements, chains, labels)
    }

    pub fn with_labels(n_elements: usize, chains: Vec<Vec<usize>>, labels: Vec<String>) -> Self {
        assert_eq!(chains.len(), labels.len());
        let mut membership = vec![Vec::new(); n_elements];
        for (j, chain) in chains.iter().enumerate() {
            for &v in chain {
                membership[v].push(j);
            }
        }
        for m in membership.iter_mut() {
            m.sort_unstable();
            m.dedup();
        }
        ChainCover {
            chains,
            labels,
            membership,
        }
    }

    /// Disjoint chain decomposition built greedily along a linear extension.
    pub fn greedy(poset: &Poset) -> Self {
        let mut chains: Vec<Vec<usize>> = Vec::new();
        for v in poset.linear_extension() {
            match chains
                .iter_mut()
                .find(|c| poset.precedes(*c.last().unwrap(), v))
            {
                Some(c) => c.push(v),
                None => chains.push(vec![v]),
            }
        }
        ChainCover::new(poset.len(), chains)
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn chains(&self) -> &[Vec<usize>] {
        &self.chains
    }

    pub fn chain(&self, j: usize) -> &[usize] {
        &self.chains[j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Indices of the chains containing `v`.
    pub fn chains_of(&self, v: usize) -> &[usize] {
        &self.membership[v]
    }

    pub fn n_elements(&self) -> usize {
        self.membership.len()
    }

    /// Elements lying on no chain.
    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.membership.len())
            .filter(|&v| self.membership[v].is_empty())
            .collect()
    }

    /// Number of distinct chains meeting `subset`.
    pub fn chains_touching(&self, subset: impl IntoIterator<Item = usize>) -> usize {
        let mut hit = BitSet::new(self.chains.len());
        for v in subset {
            for &j in &self.membership[v] {
                hit.insert(j);
            }
        }
        hit.len()
    }

    /// Every chain must be totally ordered and listed bottom to top.
    pub fn check_chains(&self, poset: &Poset) -> Result<(), PosetError> {
        for (j, chain) in self.chains.iter().enumerate() {
            for (i, &a) in chain.iter().enumerate() {
                for &b in &chain[i + 1..] {
                    if !poset.precedes(a, b) {
                        return Err(PosetError::ComparabilityViolation {
                            chain: self.labels[j].clone(),
                            a,
                            b,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// `touched >= 2 * sqrt(size)`, evaluated exactly.
pub fn mixing_inequality(touched: usize, size: usize) -> bool {
    touched * touched >= 4 * size
}

#[derive(Debug, Clone, Copy)]
pub struct MixingOptions {
    /// Check every subset when the poset has at most this many elements.
    pub exhaustive_limit: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for MixingOptions {
    fn default() -> Self {
        MixingOptions {
            exhaustive_limit: 15,
            samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixingViolation {
    pub subset: Vec<usize>,
    pub chains_touched: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixingReport {
    pub uncovered: Vec<usize>,
    pub exhaustive: bool,
    pub subsets_checked: u64,
    pub violation: Option<MixingViolation>,
}

impl MixingReport {
    pub fn passed(&self) -> bool {
        self.uncovered.is_empty() && self.violation.is_none()
    }
}

struct MixingCheck<'a> {
    cover: &'a ChainCover,
    checked: u64,
}

impl MixingCheck<'_> {
    fn test(&mut self, subset: Vec<usize>) -> Option<MixingViolation> {
        self.checked += 1;
        let touched = self.cover.chains_touching(subset.iter().copied());
        (!mixing_inequality(touched, subset.len())).then_some(MixingViolation {
            subset,
            chains_touched: touched,
        })
    }
}

/// Checks coverage and the chain-count inequality over whole chains,
/// singletons, then all subsets (small posets) or pairs plus random samples.
/// Stops at the first counterexample.
pub fn verify_mixing(poset: &Poset, cover: &ChainCover, options: &MixingOptions) -> MixingReport {
    let n = poset.len();
    let uncovered = cover.uncovered();
    let exhaustive = n <= options.exhaustive_limit;
    let mut check = MixingCheck { cover, checked: 0 };
    let report = |check: &MixingCheck<'_>, violation| MixingReport {
        uncovered: uncovered.clone(),
        exhaustive,
        subsets_checked: check.checked,
        violation,
    };

    for chain in cover.chains().iter().filter(|c| !c.is_empty()) {
        let mut subset = chain.clone();
        subset.sort_unstable();
        subset.dedup();
        if let Some(v) = check.test(subset) {
            return report(&check, Some(v));
        }
    }
    for v in 0..n {
        if let Some(bad) = check.test(vec![v]) {
            return report(&check, Some(bad));
        }
    }
    if exhaustive {
        for mask in 1u64..(1u64 << n) {
            let subset: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            if let Some(bad) = check.test(subset) {
                return report(&check, Some(bad));
            }
        }
    } else {
        for a in 0..n {
            for b in a + 1..n {
                if let Some(bad) = check.test(vec![a, b]) {
                    return report(&check, Some(bad));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for _ in 0..options.samples {
            let k = rng.random_range(1..=n);
            let mut subset = sample(&mut rng, n, k).into_vec();
            subset.sort_unstable();
            if let Some(bad) = check.test(subset) {
                return report(&check, Some(bad));
            }
        }
    }
    report(&check, None)
}

/// A grid poset, its row and column cover, and each element's 0-based
/// `(row, column)` in the full grid.
pub type GridPoset = (Poset, ChainCover, Vec<(usize, usize)>);

/// An `n x n` grid with its two middle rows and two middle columns removed.
///
/// Surviving elements are ordered along rows and columns, lower index below
/// higher index, with consecutive survivors linked across the removed band.
/// The closure is the product order on the surviving coordinates. The cover
/// has `2n` chains: rows `r1..rn` then columns `c1..cn`, the four removed
/// lines being empty.
pub fn generate_grid_poset(n: usize) -> Result<GridPoset, PosetError> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(PosetError::InvalidSize(format!(
            "grid size must be even and >= 4, got {n}"
        )));
    }
    let kept: Vec<usize> = (0..n).filter(|&i| i + 1 != n / 2 && i != n / 2).collect();
    let side = kept.len();
    let id = |r: usize, c: usize| r * side + c;
    let mut pairs = Vec::new();
    for a in 0..side {
        for b in 1..side {
            pairs.push((id(a, b - 1), id(a, b)));
            pairs.push((id(b - 1, a), id(b, a)));
        }
    }
    let poset = Poset::from_relations(side * side, &pairs)?;

    let mut chains = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for r in 0..n {
        labels.push(format!("r{}", r + 1));
        chains.push(match kept.iter().position(|&x| x == r) {
            Some(a) => (0..side).map(|b| id(a, b)).collect(),
            None => Vec::new(),
        });
    }
    for c in 0..n {
        labels.push(format!("c{}", c + 1));
        chains.push(match kept.iter().position(|&x| x == c) {
            Some(b) => (0..side).map(|a| id(a, b)).collect(),
            None => Vec::new(),
        });
    }
    let coords = (0..side * side)
        .map(|v| (kept[v / side], kept[v % side]))
        .collect();
    Ok((
        poset,
        ChainCover::with_labels(side * side, chains, labels),
        coords,
    ))
}

/// JSON with the element list, the covering relation and the named chains.
pub fn poset_json(
    poset: &Poset,
    cover: &ChainCover,
    header: Map<String, Value>,
    element: impl Fn(usize) -> Value,
) -> Value {
    let mut out = header;
    out.insert(
        "elements".into(),
        Value::Array((0..poset.len()).map(element).collect()),
    );
    out.insert(
        "relation".into(),
        Value::Array(
            poset
                .covers()
                .into_iter()
                .map(|(u, v)| json!([u, v]))
                .collect(),
        ),
    );
    let mut chains = Map::new();
    for (label, chain) in cover.labels().iter().zip(cover.chains()) {
        chains.insert(label.clone(), json!(chain));
    }
    out.insert("chains".into(), Value::Object(chains));
    Value::Object(out)
}

/// Graphviz rendering; an edge `v -> u` means `u < v`.
pub fn poset_dot(poset: &Poset, label: impl Fn(usize) -> String) -> String {
    let mut out = String::from("digraph poset {\n  rankdir=TB;\n");
    for v in 0..poset.len() {
        out.push_str(&format!(
            "  {v} [label=\"{}\"];\n",
            label(v).replace('"', "\\\"")
        ));
    }
    for (u, v) in poset.covers() {
        out.push_str(&format!("  {v} -> {u};\n"));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closure_and_covers() {
        let p = Poset::from_relations(4, &[(0, 1), (1, 2), (0, 2), (3, 2)]).unwrap();
        assert!(p.precedes(0, 2));
        assert!(!p.comparable(0, 3));
        assert_eq!(p.covers(), vec![(0, 1), (1, 2), (3, 2)]);
        assert_eq!(p.relation_size(), 4);
        p.check_strict_order().unwrap();
    }

    #[test]
    fn rejects_cycles_and_bad_rows() {
        assert!(matches!(
            Poset::from_relations(2, &[(0, 1), (1, 0)]),
            Err(PosetError::Cyclic(_))
        ));
        assert_eq!(
            Poset::from_relations(2, &[(1, 1)]),
            Err(PosetError::Reflexive(1))
        );
        let rows = vec![
            BitSet::new(3),
            BitSet::from_indices(3, [0]),
            BitSet::from_indices(3, [1]),
        ];
        assert!(matches!(
            Poset::from_down_sets(rows),
            Err(PosetError::NotTransitive(0, 1, 2))
        ));
        let rows = vec![BitSet::from_indices(2, [1]), BitSet::from_indices(2, [0])];
        assert!(matches!(
            Poset::from_down_sets(rows),
            Err(PosetError::NotAntisymmetric(..))
        ));
    }

    #[test]
    fn downset_validation() {
        let p = Poset::chain(3);
        assert_eq!(Downset::new(&p, vec![1, 0]).unwrap().elements(), &[0, 1]);
        assert_eq!(
            Downset::new(&p, vec![2]),
            Err(PosetError::NotADownset {
                member: 2,
                missing: 0
            })
        );
    }

    #[test]
    fn grid_size_and_chains() {
        let (p, cover, coords) = generate_grid_poset(6).unwrap();
        assert_eq!(p.len(), 36 - (4 * 6 - 4));
        assert_eq!(cover.n_chains(), 12);
        assert_eq!(coords[0], (0, 0));
        assert_eq!(coords[15], (5, 5));
        cover.check_chains(&p).unwrap();
        assert!(cover.uncovered().is_empty());
        for v in 0..p.len() {
            assert_eq!(cover.chains_of(v).len(), 2);
        }
        assert!(generate_grid_poset(5).is_err());
        assert!(generate_grid_poset(2).is_err());
    }

    #[test]
    fn grid_rows_touch_enough_chains() {
        let (_, cover, _) = generate_grid_poset(10).unwrap();
        for chain in cover.chains().iter().filter(|c| !c.is_empty()) {
            let touched = cover.chains_touching(chain.iter().copied());
            assert_eq!(touched, chain.len() + 1);
            assert!(mixing_inequality(touched, chain.len()));
        }
    }

    #[test]
    fn grid_is_mixing() {
        for n in [4, 6, 8, 12] {
            let (p, cover, _) = generate_grid_poset(n).unwrap();
            let report = verify_mixing(&p, &cover, &MixingOptions::default());
            assert!(report.passed(), "n={n}: {report:?}");
        }
    }

    #[test]
    fn disjoint_chains_are_not_mixing() {
        let n = 3;
        let len = 4;
        let p = Poset::disjoint_chains(n, len);
        let chains: Vec<Vec<usize>> = (0..n).map(|c| (c * len..(c + 1) * len).collect()).collect();
        let cover = ChainCover::new(p.len(), chains.clone());
        let report = verify_mixing(&p, &cover, &MixingOptions::default());
        assert!(!report.passed());
        let v = report.violation.unwrap();
        assert_eq!(v.subset, chains[0]);
        assert_eq!(v.chains_touched, 1);
    }

    #[test]
    fn uncovered_element_fails() {
        let p = Poset::antichain(3);
        let cover = ChainCover::new(3, vec![vec![0], vec![0], vec![1], vec![1]]);
        let report = verify_mixing(&p, &cover, &MixingOptions::default());
        assert_eq!(report.uncovered, vec![2]);
        assert!(!report.passed());
    }

    #[test]
    fn json_and_dot_exports() {
        let p = Poset::chain(2);
        let cover = ChainCover::new(2, vec![vec![0, 1]]);
        let v = poset_json(&p, &cover, Map::new(), |i| json!({ "id": i }));
        assert_eq!(
            v.to_string(),
            r#"{"elements":[{"id":0},{"id":1}],"relation":[[0,1]],"chains":{"c1":[0,1]}}"#
        );
        let dot = poset_dot(&p, |i| format!("e{i}"));
        assert!(dot.contains("1 -> 0;"));
    }

    fn arb_poset() -> impl Strategy<Value = Poset> {
        (1usize..14).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |edges| {
                let pairs: Vec<(usize, usize)> = edges
                    .into_iter()
                    .filter(|(a, b)| a != b)
                    .map(|(a, b)| (a.min(b), a.max(b)))
                    .collect();
                Poset::from_relations(n, &pairs).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn closure_is_strict_order(p in arb_poset()) {
            prop_assert!(p.check_strict_order().is_ok());
            let rebuilt = Poset::from_relations(p.len(), &p.covers()).unwrap();
            prop_assert_eq!(&rebuilt, &p);
            let ext = p.linear_extension();
            let pos: Vec<usize> = {
                let mut pos = vec![0; p.len()];
                for (i, &v) in ext.iter().enumerate() { pos[v] = i; }
                pos
            };
            for v in 0..p.len() {
                for u in p.down(v) {
                    prop_assert!(pos[u] < pos[v]);
                }
            }
            let greedy = ChainCover::greedy(&p);
            prop_assert!(greedy.check_chains(&p).is_ok());
            prop_assert!(greedy.uncovered().is_empty());
        }
    }
}
