//! The lattice of stable matchings and the rotation poset derived from it.

use std::collections::{HashMap, HashSet, VecDeque};

use serde_json::{json, Map, Value};

use super::{poset_dot, poset_json, ChainCover, Downset, Poset, PosetError};
use crate::bitset::BitSet;
use crate::instance::{Agent, PreferenceProfile, Side};
use crate::matching::{gale_shapley, Matching};
use crate::rotation::{apply_rotation, exposed_unchecked, maximal_elimination_sequence, Rotation};

/// Default cap on the number of lattice nodes.
pub const DEFAULT_GUARD: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeEdge {
    pub from: usize,
    pub to: usize,
    pub rotation: usize,
}

/// Every stable matching, reached by breadth-first elimination from the
/// man-optimal matching.
///
/// Node 0 is man-optimal. `rotation_sets[i]` is the set of rotation ids
/// eliminated on any path from node 0 to node `i`.
#[derive(Debug, Clone)]
pub struct StableLattice {
    pub rotations: Vec<Rotation>,
    pub matchings: Vec<Matching>,
    pub rotation_sets: Vec<BitSet>,
    pub edges: Vec<LatticeEdge>,
}

impl StableLattice {
    pub fn len(&self) -> usize {
        self.matchings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matchings.is_empty()
    }

    /// Nodes with no outgoing edge. A well-formed lattice has exactly one.
    pub fn sinks(&self) -> Vec<usize> {
        let mut has_out = vec![false; self.len()];
        for e in &self.edges {
            has_out[e.from] = true;
        }
        (0..self.len()).filter(|&i| !has_out[i]).collect()
    }

    /// Nodes with no incoming edge. A well-formed lattice has exactly one.
    pub fn sources(&self) -> Vec<usize> {
        let mut has_in = vec![false; self.len()];
        for e in &self.edges {
            has_in[e.to] = true;
        }
        (0..self.len()).filter(|&i| !has_in[i]).collect()
    }

    pub fn index_of(&self, matching: &Matching) -> Option<usize> {
        self.matchings.iter().position(|m| m == matching)
    }
}

pub fn build_lattice(
    profile: &PreferenceProfile,
    guard: usize,
) -> Result<StableLattice, PosetError> {
    let rotations = maximal_elimination_sequence(profile).rotations;
    let n_rot = rotations.len();
    let ids: HashMap<&Rotation, usize> =
        rotations.iter().enumerate().map(|(i, r)| (r, i)).collect();

    let start = gale_shapley(profile, Side::Man);
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    index.insert(start.man_partners().to_vec(), 0);
    let mut matchings = vec![start];
    let mut rotation_sets = vec![BitSet::new(n_rot)];
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([0usize]);

    while let Some(node) = queue.pop_front() {
        let current = matchings[node].clone();
        for rotation in exposed_unchecked(profile, &current) {
            let id = *ids
                .get(&rotation)
                .ok_or_else(|| PosetError::UnknownRotation(rotation.clone()))?;
            if rotation_sets[node].contains(id) {
                return Err(PosetError::InconsistentRotationSet(node));
            }
            let next = apply_rotation(&current, &rotation);
            let mut set = rotation_sets[node].clone();
            set.insert(id);
            let key = next.man_partners().to_vec();
            let target = match index.get(&key) {
                Some(&t) => {
                    if rotation_sets[t] != set {
                        return Err(PosetError::InconsistentRotationSet(t));
                    }
                    t
                }
                None => {
                    if matchings.len() >= guard {
                        return Err(PosetError::BudgetExceeded { limit: guard });
                    }
                    let t = matchings.len();
                    index.insert(key, t);
                    matchings.push(next);
                    rotation_sets.push(set);
                    queue.push_back(t);
                    t
                }
            };
            edges.push(LatticeEdge {
                from: node,
                to: target,
                rotation: id,
            });
        }
    }
    Ok(StableLattice {
        rotations,
        matchings,
        rotation_sets,
        edges,
    })
}

/// Lazy breadth-first stream of stable matchings, in the same order as the
/// nodes of [`build_lattice`].
pub struct LatticeWalk<'a> {
    profile: &'a PreferenceProfile,
    seen: HashSet<Vec<usize>>,
    queue: VecDeque<Matching>,
    guard: usize,
    failed: bool,
}

impl Iterator for LatticeWalk<'_> {
    type Item = Result<Matching, PosetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let current = self.queue.pop_front()?;
        for rotation in exposed_unchecked(self.profile, &current) {
            let next = apply_rotation(&current, &rotation);
            if self.seen.insert(next.man_partners().to_vec()) {
                if self.seen.len() > self.guard {
                    self.failed = true;
                    return Some(Err(PosetError::BudgetExceeded { limit: self.guard }));
                }
                self.queue.push_back(next);
            }
        }
        Some(Ok(current))
    }
}

/// Streams every stable matching. The guard bounds the number of distinct
/// matchings held in memory; stop early with `take` to stay under it.
pub fn enumerate_stable_matchings(profile: &PreferenceProfile, guard: usize) -> LatticeWalk<'_> {
    let start = gale_shapley(profile, Side::Man);
    LatticeWalk {
        profile,
        seen: HashSet::from([start.man_partners().to_vec()]),
        queue: VecDeque::from([start]),
        guard,
        failed: false,
    }
}

/// Rotations ordered by elimination precedence, with one chain per agent.
#[derive(Debug, Clone)]
pub struct RotationPoset {
    pub(crate) size: usize,
    pub(crate) rotations: Vec<Rotation>,
    pub(crate) poset: Poset,
    pub(crate) chains: ChainCover,
}

impl RotationPoset {
    /// Derives the order from the lattice: `a < b` iff `a` is in every
    /// rotation set that contains `b`.
    pub fn from_lattice(size: usize, lattice: &StableLattice) -> Result<Self, PosetError> {
        let n = lattice.rotations.len();
        let mut down: Vec<BitSet> = vec![BitSet::full(n); n];
        let mut seen = vec![false; n];
        for set in &lattice.rotation_sets {
            for b in set {
                down[b].intersect_with(set);
                seen[b] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(PosetError::UnknownRotation(
                lattice.rotations[missing].clone(),
            ));
        }
        for (b, row) in down.iter_mut().enumerate() {
            row.remove(b);
        }
        let poset = Poset::from_down_sets(down)?;
        RotationPoset::new(size, lattice.rotations.clone(), poset)
    }

    pub fn new(size: usize, rotations: Vec<Rotation>, poset: Poset) -> Result<Self, PosetError> {
        assert_eq!(rotations.len(), poset.len());
        let chains = agent_chains(size, &rotations, &poset)?;
        Ok(RotationPoset {
            size,
            rotations,
            poset,
            chains,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_agents(&self) -> usize {
        2 * self.size
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    pub fn poset(&self) -> &Poset {
        &self.poset
    }

    pub fn chains(&self) -> &ChainCover {
        &self.chains
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn to_json(&self) -> Value {
        let mut header = Map::new();
        header.insert("n_agents".into(), json!(self.n_agents()));
        poset_json(&self.poset, &self.chains, header, |id| {
            let pairs: Vec<Value> = self.rotations[id]
                .pairs()
                .iter()
                .map(|&(m, w)| json!([m + 1, w + 1]))
                .collect();
            json!({ "id": id, "pairs": pairs })
        })
    }

    pub fn to_dot(&self) -> String {
        poset_dot(&self.poset, |id| format!("{id}: {}", self.rotations[id]))
    }
}

fn agent_chains(
    size: usize,
    rotations: &[Rotation],
    poset: &Poset,
) -> Result<ChainCover, PosetError> {
    let mut chains: Vec<Vec<usize>> = vec![Vec::new(); 2 * size];
    for v in poset.linear_extension() {
        for slot in rotations[v].agent_slots(size) {
            chains[slot].push(v);
        }
    }
    let labels = (0..2 * size)
        .map(|slot| Agent::from_slot(slot, size).to_string())
        .collect();
    let cover = ChainCover::with_labels(rotations.len(), chains, labels);
    cover.check_chains(poset)?;
    Ok(cover)
}

/// One chain per agent holding the rotations that involve that agent, in
/// order. Fails if two rotations sharing an agent are incomparable.
pub fn agent_chain_cover(poset: &RotationPoset) -> Result<ChainCover, PosetError> {
    agent_chains(poset.size, &poset.rotations, &poset.poset)
}

pub fn build_rotation_poset(
    profile: &PreferenceProfile,
    guard: usize,
) -> Result<RotationPoset, PosetError> {
    let lattice = build_lattice(profile, guard)?;
    RotationPoset::from_lattice(profile.size(), &lattice)
}

/// Eliminates rotations from the man-optimal matching in the given order,
/// which must list a downset bottom-up.
pub fn matching_from_elimination_order(
    profile: &PreferenceProfile,
    poset: &RotationPoset,
    order: &[usize],
) -> Result<Matching, PosetError> {
    let mut done = BitSet::new(poset.len());
    let mut current = gale_shapley(profile, Side::Man);
    for &id in order {
        if id >= poset.len() {
            return Err(PosetError::OutOfRange(id));
        }
        if let Some(missing) = poset.poset.down(id).iter().find(|&u| !done.contains(u)) {
            return Err(PosetError::NotADownset {
                member: id,
                missing,
            });
        }
        let rotation = &poset.rotations[id];
        if !exposed_unchecked(profile, &current).contains(rotation) {
            return Err(PosetError::RotationNotExposed(rotation.clone()));
        }
        current = apply_rotation(&current, rotation);
        done.insert(id);
    }
    Ok(current)
}

/// The stable matching reached by eliminating exactly the downset's rotations.
pub fn matching_from_downset(
    profile: &PreferenceProfile,
    poset: &RotationPoset,
    downset: &Downset,
) -> Result<Matching, PosetError> {
    let set = downset.to_bitset(poset.len());
    let order: Vec<usize> = poset
        .poset
        .linear_extension()
        .into_iter()
        .filter(|&v| set.contains(v))
        .collect();
    matching_from_elimination_order(profile, poset, &order)
}
