//! Exact downset counting by pivot recursion.
//!
//! For any live element `v`, the downsets avoiding `v` are the downsets of
//! the poset with `v` and everything above it removed, and the downsets
//! containing `v` are the downsets of the poset with `v` and everything below
//! it removed. Pivot choice does not change the count, only the shape of the
//! recursion tree. [`PivotStrategy::Critical`] picks an element with many
//! elements both above and below it, found through level-by-level subchain
//! assignment over a chain cover.

use std::rc::Rc;

use lru::LruCache;
use num_bigint::BigUint;
use num_traits::One;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bitset::BitSet;
use crate::poset::{ChainCover, Poset};

pub type BigCount = BigUint;

/// Largest poset accepted by [`brute_force_downsets`].
pub const BRUTE_FORCE_MAX_ELEMENTS: usize = 25;

/// Default lower bound on `d` for a pivot to count as certified.
pub const DEFAULT_D0: usize = 26;

/// Default criticality constant; certified pivots should be at least
/// `ceil(C0 * d^{3/2})`-critical.
pub const DEFAULT_C0: f64 = 0.125;

pub const DEFAULT_MEMO_CAPACITY: usize = 1 << 20;

const PIVOT_LOG_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CountingError {
    #[error("the poset has no live elements")]
    EmptyPoset,
    #[error("element {0} lies on no chain of the cover")]
    Coverage(usize),
    #[error("{size} elements exceed the brute-force limit {max}")]
    SizeTooLarge { size: usize, max: usize },
}

/// A poset restricted to a live subset of its elements.
#[derive(Debug, Clone)]
pub struct SubPoset<'a> {
    poset: &'a Poset,
    live: BitSet,
}

impl<'a> SubPoset<'a> {
    pub fn whole(poset: &'a Poset) -> Self {
        SubPoset {
            poset,
            live: BitSet::full(poset.len()),
        }
    }

    pub fn new(poset: &'a Poset, live: BitSet) -> Self {
        assert_eq!(live.capacity(), poset.len());
        SubPoset { poset, live }
    }

    pub fn poset(&self) -> &'a Poset {
        self.poset
    }

    pub fn live(&self) -> &BitSet {
        &self.live
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// Live elements strictly below `v`.
    pub fn below_count(&self, v: usize) -> usize {
        self.poset.down(v).intersection_len(&self.live)
    }

    /// Live elements strictly above `v`.
    pub fn above_count(&self, v: usize) -> usize {
        self.poset.up(v).intersection_len(&self.live)
    }

    /// The live set minus `v` and everything above it.
    pub fn without_up(&self, v: usize) -> BitSet {
        let mut s = self.live.clone();
        s.remove(v);
        s.difference_with(self.poset.up(v));
        s
    }

    /// The live set minus `v` and everything below it.
    pub fn without_down(&self, v: usize) -> BitSet {
        let mut s = self.live.clone();
        s.remove(v);
        s.difference_with(self.poset.down(v));
        s
    }

    pub fn is_antichain(&self) -> bool {
        self.live
            .iter()
            .all(|v| !self.poset.down(v).intersects(&self.live))
    }
}

impl<'a> From<&'a Poset> for SubPoset<'a> {
    fn from(poset: &'a Poset) -> Self {
        SubPoset::whole(poset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PivotStrategy {
    /// Member of the high-height intersection with the largest criticality.
    Critical,
    /// Element maximizing `min(below, above)` over the whole live set.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Levels and subchains grown upward from the minimal elements.
    FromSinks,
    /// The same construction on the reversed order.
    FromSources,
}

/// Longest chain ending at each live element, counted in elements; dead
/// elements get level 0.
pub fn levels(sub: &SubPoset<'_>) -> Vec<usize> {
    levels_in(sub, Direction::FromSinks)
}

fn below_of(poset: &Poset, dir: Direction, v: usize) -> &BitSet {
    match dir {
        Direction::FromSinks => poset.down(v),
        Direction::FromSources => poset.up(v),
    }
}

fn levels_in(sub: &SubPoset<'_>, dir: Direction) -> Vec<usize> {
    let poset = sub.poset();
    let mut order: Vec<usize> = sub.live().iter().collect();
    order.sort_by_key(|&v| below_of(poset, dir, v).len());
    let mut level = vec![0usize; poset.len()];
    for v in order {
        let mut best = 0;
        for u in below_of(poset, dir, v) {
            if sub.live().contains(u) {
                best = best.max(level[u]);
            }
        }
        level[v] = best + 1;
    }
    level
}

/// Disjoint subchains `S_j ⊆ C_j` built level by level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubchainAssignment {
    pub direction: Direction,
    /// Chain index each live element was assigned to.
    pub subchain_of: Vec<Option<usize>>,
    /// 1-based position within the assigned subchain; 0 for dead elements.
    pub height: Vec<usize>,
    pub subchains: Vec<Vec<usize>>,
}

/// Processes live elements by ascending level (ties by id) and puts each on
/// the least-loaded chain containing it, lowest chain index on ties.
pub fn subchain_heights(
    sub: &SubPoset<'_>,
    cover: &ChainCover,
    direction: Direction,
) -> Result<SubchainAssignment, CountingError> {
    let n = sub.poset().len();
    let level = levels_in(sub, direction);
    let mut order: Vec<usize> = sub.live().iter().collect();
    order.sort_by_key(|&v| (level[v], v));

    let mut subchains: Vec<Vec<usize>> = vec![Vec::new(); cover.n_chains()];
    let mut subchain_of = vec![None; n];
    let mut height = vec![0usize; n];
    for u in order {
        let j = *cover
            .chains_of(u)
            .iter()
            .min_by_key(|&&j| (subchains[j].len(), j))
            .ok_or(CountingError::Coverage(u))?;
        subchains[j].push(u);
        subchain_of[u] = Some(j);
        height[u] = subchains[j].len();
    }
    Ok(SubchainAssignment {
        direction,
        subchain_of,
        height,
        subchains,
    })
}

/// Checks the subchain invariants: every `S_j` lies in `C_j` and is a chain,
/// the subchains partition the live set, and an element of height `h`
/// dominates (in the assignment's direction) at least `h - 1` elements of
/// every `S_j` whose chain contains it.
pub fn check_subchain_properties(
    sub: &SubPoset<'_>,
    cover: &ChainCover,
    assignment: &SubchainAssignment,
) -> Result<(), String> {
    let poset = sub.poset();
    let dir = assignment.direction;
    let mut seen = BitSet::new(poset.len());
    for (j, s) in assignment.subchains.iter().enumerate() {
        for (i, &u) in s.iter().enumerate() {
            if !cover.chains_of(u).contains(&j) {
                return Err(format!(
                    "element {u} assigned to chain {j} that does not contain it"
                ));
            }
            if !sub.live().contains(u) || !seen.insert(u) {
                return Err(format!("element {u} assigned twice or not live"));
            }
            if let Some(&prev) = s[..i].last() {
                if !below_of(poset, dir, u).contains(prev) {
                    return Err(format!("subchain {j} is not ordered at {prev}, {u}"));
                }
            }
        }
    }
    if seen != *sub.live() {
        return Err("subchains do not cover the live set".into());
    }
    for u in sub.live() {
        let h = assignment.height[u];
        for &j in cover.chains_of(u) {
            let below = assignment.subchains[j]
                .iter()
                .filter(|&&x| below_of(poset, dir, u).contains(x))
                .count();
            if below + 1 < h {
                return Err(format!(
                    "element {u} at height {h} dominates only {below} elements of subchain {j}"
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalPath {
    /// Chosen from the intersection of the two high-height sets.
    Intersection,
    /// The intersection was empty; chosen over the whole live set.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalityReport {
    pub element: usize,
    /// Live elements the pivot dominates.
    pub below: usize,
    /// Live elements dominating the pivot.
    pub above: usize,
    pub alpha: usize,
    /// `live / n_chains`.
    pub d: f64,
    /// Height threshold, `floor(d / 2)`.
    pub threshold: usize,
    pub path: CriticalPath,
}

fn best_by_alpha(
    sub: &SubPoset<'_>,
    candidates: impl Iterator<Item = usize>,
) -> Option<(usize, usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for v in candidates {
        let below = sub.below_count(v);
        let above = sub.above_count(v);
        if best.is_none_or(|(_, b, a)| below.min(above) > b.min(a)) {
            best = Some((v, below, above));
        }
    }
    best
}

/// Builds subchains from both ends, takes the elements whose height reaches
/// `floor(d / 2)` in both directions, and returns the most critical of them.
pub fn critical_element(
    sub: &SubPoset<'_>,
    cover: &ChainCover,
) -> Result<CriticalityReport, CountingError> {
    if sub.is_empty() {
        return Err(CountingError::EmptyPoset);
    }
    let n_chains = cover.n_chains().max(1);
    let d = sub.len() as f64 / n_chains as f64;
    let threshold = sub.len() / (2 * n_chains);
    let from_sinks = subchain_heights(sub, cover, Direction::FromSinks)?;
    let from_sources = subchain_heights(sub, cover, Direction::FromSources)?;
    let both: Vec<usize> = if threshold == 0 {
        Vec::new()
    } else {
        sub.live()
            .iter()
            .filter(|&v| from_sinks.height[v] >= threshold && from_sources.height[v] >= threshold)
            .collect()
    };
    let (element, below, above, path) = match best_by_alpha(sub, both.into_iter()) {
        Some((v, b, a)) => (v, b, a, CriticalPath::Intersection),
        None => {
            let (v, b, a) = best_by_alpha(sub, sub.live().iter()).unwrap();
            (v, b, a, CriticalPath::Fallback)
        }
    };
    Ok(CriticalityReport {
        element,
        below,
        above,
        alpha: below.min(above),
        d,
        threshold,
        path,
    })
}

fn greedy_pivot(sub: &SubPoset<'_>) -> (usize, usize) {
    let (v, b, a) = best_by_alpha(sub, sub.live().iter()).expect("non-empty");
    (v, b.min(a))
}

/// `2^{17 n}`, the reference upper bound printed next to measured counts.
pub fn theoretical_bound(n_agents: usize) -> BigCount {
    BigUint::one() << (17 * n_agents)
}

/// Counts downsets by checking every subset of the live elements.
pub fn brute_force_downsets(sub: &SubPoset<'_>) -> Result<BigCount, CountingError> {
    let live: Vec<usize> = sub.live().iter().collect();
    let k = live.len();
    if k > BRUTE_FORCE_MAX_ELEMENTS {
        return Err(CountingError::SizeTooLarge {
            size: k,
            max: BRUTE_FORCE_MAX_ELEMENTS,
        });
    }
    let below: Vec<u32> = live
        .iter()
        .map(|&v| {
            live.iter()
                .enumerate()
                .filter(|&(_, &u)| sub.poset().precedes(u, v))
                .fold(0u32, |m, (i, _)| m | 1 << i)
        })
        .collect();
    let mut count: u64 = 0;
    for mask in 0u32..(1u32 << k) {
        let closed = (0..k).all(|i| mask >> i & 1 == 0 || below[i] & !mask == 0);
        if closed {
            count += 1;
        }
    }
    Ok(BigUint::from(count))
}

/// Every downset of the live elements, stopping with `None` past `limit`.
pub fn all_downsets(sub: &SubPoset<'_>, limit: usize) -> Option<Vec<BitSet>> {
    let poset = sub.poset();
    let mut order: Vec<usize> = sub.live().iter().collect();
    order.sort_by_key(|&v| (poset.down(v).len(), v));
    let mut out = Vec::new();
    let mut current = BitSet::new(poset.len());

    fn walk(
        sub: &SubPoset<'_>,
        order: &[usize],
        current: &mut BitSet,
        out: &mut Vec<BitSet>,
        limit: usize,
    ) -> bool {
        let Some((&v, rest)) = order.split_first() else {
            if out.len() >= limit {
                return false;
            }
            out.push(current.clone());
            return true;
        };
        if !walk(sub, rest, current, out, limit) {
            return false;
        }
        let mut needed = sub.poset().down(v).clone();
        needed.intersect_with(sub.live());
        if needed.is_subset(current) {
            current.insert(v);
            let ok = walk(sub, rest, current, out, limit);
            current.remove(v);
            return ok;
        }
        true
    }

    walk(sub, &order, &mut current, &mut out, limit).then_some(out)
}

#[derive(Debug, Clone)]
pub struct CountOptions {
    /// Maximum memo entries; 0 disables memoization.
    pub memo_capacity: usize,
    pub c0: f64,
    pub d0: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            memo_capacity: DEFAULT_MEMO_CAPACITY,
            c0: DEFAULT_C0,
            d0: DEFAULT_D0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotRecord {
    pub live: usize,
    pub element: usize,
    pub alpha: usize,
    pub d: f64,
    pub path: Option<CriticalPath>,
}

/// Recursion telemetry. A phase `i` holds the pivots chosen while the live
/// size lies in `(n^2 / 2^{i+1}, n^2 / 2^i]`, `n` the chain count; `phases[i]`
/// is the largest number of such pivots on any root-to-leaf path.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingStats {
    pub recursion_nodes: u64,
    pub max_depth: usize,
    pub memo_hits: u64,
    pub pivot_choices: u64,
    pub n_chains: usize,
    pub phases: Vec<u64>,
    pub min_alpha: Option<usize>,
    /// Every pivot came from the intersection path with `d >= d0` and met
    /// the `c0 * d^{3/2}` criticality target.
    pub certified: bool,
    /// The first pivots chosen, in recursion order, capped.
    pub pivot_log: Vec<PivotRecord>,
}

impl CountingStats {
    /// `ceil(2^{(i+1)/2} sqrt(n) * 8) + 1`.
    pub fn phase_limit(&self, i: usize) -> u64 {
        ((2f64.powf((i as f64 + 1.0) / 2.0) * (self.n_chains as f64).sqrt() * 8.0).ceil()) as u64
            + 1
    }

    /// Phases whose measured count exceeds [`CountingStats::phase_limit`].
    /// Only meaningful when `certified` holds.
    pub fn phase_findings(&self) -> Vec<usize> {
        (0..self.phases.len())
            .filter(|&i| self.phases[i] > self.phase_limit(i))
            .collect()
    }

    pub fn to_json(&self, count: &BigCount) -> Value {
        let phases: Vec<Value> = self
            .phases
            .iter()
            .enumerate()
            .map(|(i, &k)| json!({ "i": i, "k_i": k, "limit": self.phase_limit(i) }))
            .collect();
        json!({
            "count": count.to_string(),
            "recursion_nodes": self.recursion_nodes,
            "max_depth": self.max_depth,
            "memo_hits": self.memo_hits,
            "phases": phases,
            "pivot_choices": self.pivot_choices,
            "n_chains": self.n_chains,
            "min_alpha": self.min_alpha,
            "certified": self.certified,
        })
    }
}

/// Phase index of a live set of the given size against `n^2`.
pub fn phase_of(live: usize, n_chains: usize) -> usize {
    let total = (n_chains * n_chains) as u128;
    let live = live as u128;
    let mut i = 0;
    while live << (i + 1) <= total {
        i += 1;
    }
    i
}

/// A subcount with its per-path phase maxima.
type Memoized = Rc<(BigUint, Vec<u64>)>;

struct Counter<'a> {
    poset: &'a Poset,
    cover: &'a ChainCover,
    strategy: PivotStrategy,
    options: &'a CountOptions,
    memo: Option<LruCache<BitSet, Memoized>>,
    stats: CountingStats,
}

impl Counter<'_> {
    fn certify(&self, report: &CriticalityReport) -> bool {
        let target = (self.options.c0 * report.d.powf(1.5)).ceil() as usize;
        report.path == CriticalPath::Intersection
            && report.d >= self.options.d0 as f64
            && report.alpha >= target
    }

    fn count(&mut self, live: BitSet, depth: usize) -> Memoized {
        self.stats.recursion_nodes += 1;
        self.stats.max_depth = self.stats.max_depth.max(depth);
        if live.is_empty() {
            return Rc::new((BigUint::one(), Vec::new()));
        }
        if let Some(hit) = self.memo.as_mut().and_then(|m| m.get(&live)) {
            self.stats.memo_hits += 1;
            return Rc::clone(hit);
        }
        let sub = SubPoset::new(self.poset, live);
        if sub.is_antichain() {
            let result = Rc::new((BigUint::one() << sub.len(), Vec::new()));
            self.remember(sub.live, &result);
            return result;
        }

        let (pivot, alpha, d, path) = match self.strategy {
            PivotStrategy::Greedy => {
                let (v, alpha) = greedy_pivot(&sub);
                (
                    v,
                    alpha,
                    sub.len() as f64 / self.cover.n_chains().max(1) as f64,
                    None,
                )
            }
            PivotStrategy::Critical => {
                let report =
                    critical_element(&sub, self.cover).expect("every live element lies on a chain");
                if !self.certify(&report) {
                    self.stats.certified = false;
                }
                (report.element, report.alpha, report.d, Some(report.path))
            }
        };
        if self.strategy == PivotStrategy::Greedy {
            self.stats.certified = false;
        }
        self.stats.pivot_choices += 1;
        self.stats.min_alpha = Some(self.stats.min_alpha.map_or(alpha, |m| m.min(alpha)));
        if self.stats.pivot_log.len() < PIVOT_LOG_CAP {
            self.stats.pivot_log.push(PivotRecord {
                live: sub.len(),
                element: pivot,
                alpha,
                d,
                path,
            });
        }

        let phase = phase_of(sub.len(), self.cover.n_chains());
        let without = self.count(sub.without_up(pivot), depth + 1);
        let with = self.count(sub.without_down(pivot), depth + 1);
        let total = &without.0 + &with.0;
        let width = without.1.len().max(with.1.len()).max(phase + 1);
        let mut phases = vec![0u64; width];
        for (i, slot) in phases.iter_mut().enumerate() {
            let a = without.1.get(i).copied().unwrap_or(0);
            let b = with.1.get(i).copied().unwrap_or(0);
            *slot = a.max(b);
        }
        phases[phase] += 1;
        let result = Rc::new((total, phases));
        self.remember(sub.live, &result);
        result
    }

    fn remember(&mut self, live: BitSet, result: &Memoized) {
        let cap = self.options.memo_capacity;
        if let Some(m) = self.memo.as_mut() {
            m.put(live, Rc::clone(result));
            while m.len() > cap {
                m.pop_lru();
            }
        }
    }
}

/// Counts downsets of the live subposet exactly. The count does not depend
/// on `strategy`; the statistics do.
pub fn count_downsets(
    sub: &SubPoset<'_>,
    cover: &ChainCover,
    strategy: PivotStrategy,
    options: &CountOptions,
) -> (BigCount, CountingStats) {
    let mut counter = Counter {
        poset: sub.poset(),
        cover,
        strategy,
        options,
        memo: (options.memo_capacity > 0).then(LruCache::unbounded),
        stats: CountingStats {
            recursion_nodes: 0,
            max_depth: 0,
            memo_hits: 0,
            pivot_choices: 0,
            n_chains: cover.n_chains(),
            phases: Vec::new(),
            min_alpha: None,
            certified: true,
            pivot_log: Vec::new(),
        },
    };
    let result = counter.count(sub.live().clone(), 0);
    let mut stats = counter.stats;
    stats.phases = result.1.clone();
    (result.0.clone(), stats)
}
