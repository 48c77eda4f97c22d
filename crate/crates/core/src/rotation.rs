//! Rotations exposed in a stable matching and their elimination.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::instance::{PreferenceProfile, Side};
use crate::matching::{gale_shapley, is_stable, Matching};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RotationError {
    #[error("matching is not stable")]
    NotStable,
    #[error("rotation {0} is not exposed in the matching")]
    NotExposed(Rotation),
}

/// A cyclic list of matched pairs `(m_0, w_0), ..., (m_{k-1}, w_{k-1})`.
///
/// Stored rotated so the smallest man index comes first. Eliminating it
/// moves every `m_i` to `w_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rotation {
    pairs: Vec<(usize, usize)>,
}

impl Rotation {
    /// Canonicalizes a cyclic pair list. Returns `None` unless it has at
    /// least two pairs with distinct men and distinct women.
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Option<Self> {
        if pairs.len() < 2 {
            return None;
        }
        let men: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let women: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        if men.len() != pairs.len() || women.len() != pairs.len() {
            return None;
        }
        let start = (0..pairs.len()).min_by_key(|&i| pairs[i].0).unwrap();
        pairs.rotate_left(start);
        Some(Rotation { pairs })
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

    pub fn men(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.0)
    }

    pub fn women(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.1)
    }

    /// Agent slots (men `0..s`, women `s..2s`) touched by this rotation.
    pub fn agent_slots(&self, size: usize) -> impl Iterator<Item = usize> + '_ {
        self.men().chain(self.women().map(move |w| size + w))
    }

    /// The pairs created by eliminating this rotation: `(m_i, w_{i+1})`.
    pub fn successor_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.pairs.len();
        (0..k).map(move |i| (self.pairs[i].0, self.pairs[(i + 1) % k].1))
    }
}

impl fmt::Display for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (m, w) in &self.pairs {
            write!(f, "(m{},w{})", m + 1, w + 1)?;
        }
        Ok(())
    }
}

/// For each man, the first woman after his partner who prefers him to her
/// own partner.
fn next_women(profile: &PreferenceProfile, matching: &Matching) -> Vec<Option<usize>> {
    (0..profile.size())
        .map(|man| {
            let wife = matching.wife(man);
            profile.man_prefs(man)[profile.man_rank(man, wife) + 1..]
                .iter()
                .copied()
                .find(|&w| profile.woman_prefers(w, man, matching.husband(w)))
        })
        .collect()
}

pub(crate) fn exposed_unchecked(profile: &PreferenceProfile, matching: &Matching) -> Vec<Rotation> {
    let s = profile.size();
    let next = next_women(profile, matching);
    let succ: Vec<Option<usize>> = next
        .iter()
        .map(|w| w.map(|w| matching.husband(w)))
        .collect();

    // 0 = unvisited, 1 = on the current walk, 2 = finished.
    let mut state = vec![0u8; s];
    let mut rotations = Vec::new();
    for start in 0..s {
        if state[start] != 0 {
            continue;
        }
        let mut walk = Vec::new();
        let mut cur = Some(start);
        while let Some(man) = cur {
            match state[man] {
                0 => {
                    state[man] = 1;
                    walk.push(man);
                    cur = succ[man];
                }
                1 => {
                    let pos = walk.iter().position(|&x| x == man).unwrap();
                    let pairs = walk[pos..].iter().map(|&x| (x, matching.wife(x))).collect();
                    rotations.push(Rotation::new(pairs).expect("succ cycles have length >= 2"));
                    break;
                }
                _ => break,
            }
        }
        for man in walk {
            state[man] = 2;
        }
    }
    rotations.sort();
    rotations
}

/// All rotations exposed in a stable matching, canonically ordered.
pub fn exposed_rotations(
    profile: &PreferenceProfile,
    matching: &Matching,
) -> Result<Vec<Rotation>, RotationError> {
    if !is_stable(profile, matching) {
        return Err(RotationError::NotStable);
    }
    Ok(exposed_unchecked(profile, matching))
}

pub(crate) fn apply_rotation(matching: &Matching, rotation: &Rotation) -> Matching {
    let mut next = matching.clone();
    for (m, w) in rotation.successor_pairs() {
        next.set_pair(m, w);
    }
    next
}

/// Eliminates an exposed rotation: each `m_i` is rematched to `w_{i+1}`.
pub fn eliminate(
    profile: &PreferenceProfile,
    matching: &Matching,
    rotation: &Rotation,
) -> Result<Matching, RotationError> {
    let exposed = exposed_rotations(profile, matching)?;
    if !exposed.contains(rotation) {
        return Err(RotationError::NotExposed(rotation.clone()));
    }
    let next = apply_rotation(matching, rotation);
    debug_assert!(is_stable(profile, &next), "elimination broke stability");
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationSequence {
    pub rotations: Vec<Rotation>,
    /// Matchings visited, from man-optimal to woman-optimal.
    pub trace: Vec<Matching>,
}

/// Eliminates rotations from the man-optimal matching until none are
/// exposed. `choose` picks an index into the (canonically sorted) exposed
/// list at each step.
pub fn elimination_sequence_by(
    profile: &PreferenceProfile,
    mut choose: impl FnMut(&[Rotation]) -> usize,
) -> EliminationSequence {
    let mut current = gale_shapley(profile, Side::Man);
    let mut rotations = Vec::new();
    let mut trace = vec![current.clone()];
    loop {
        let exposed = exposed_unchecked(profile, &current);
        if exposed.is_empty() {
            break;
        }
        let pick = choose(&exposed);
        let rotation = exposed[pick].clone();
        current = apply_rotation(&current, &rotation);
        debug_assert!(is_stable(profile, &current));
        trace.push(current.clone());
        rotations.push(rotation);
    }
    EliminationSequence { rotations, trace }
}

/// The canonical maximal sequence: always eliminate the smallest exposed rotation.
pub fn maximal_elimination_sequence(profile: &PreferenceProfile) -> EliminationSequence {
    elimination_sequence_by(profile, |_| 0)
}

/// True iff no `(man, woman)` pair occurs in two distinct rotations.
pub fn check_pair_uniqueness(rotations: &[Rotation]) -> bool {
    let distinct: BTreeSet<&Rotation> = rotations.iter().collect();
    let mut owner: HashMap<(usize, usize), &Rotation> = HashMap::new();
    for r in distinct {
        for &pair in r.pairs() {
            if owner.insert(pair, r).is_some() {
                return false;
            }
        }
    }
    true
}

/// Pairs `(m_i, w)` for every woman `w` strictly between `w_i` and `w_{i+1}`
/// on `m_i`'s list. None of these can occur in any stable matching.
pub fn skipped_pairs(profile: &PreferenceProfile, rotation: &Rotation) -> Vec<(usize, usize)> {
    let pairs = rotation.pairs();
    let k = pairs.len();
    let mut out = Vec::new();
    for i in 0..k {
        let (man, from) = pairs[i];
        let to = pairs[(i + 1) % k].1;
        let (a, b) = (profile.man_rank(man, from), profile.man_rank(man, to));
        for &w in &profile.man_prefs(man)[a + 1..b] {
            out.push((man, w));
        }
    }
    out
}

/// Checks the defining conditions of exposure directly: every pair is matched
/// in `matching`, `m_i` prefers `w_i` to `w_{i+1}`, `w_{i+1}` prefers `m_i` to
/// `m_{i+1}`, and no woman between them on `m_i`'s list prefers `m_i` to her
/// partner.
pub fn satisfies_exposure_conditions(
    profile: &PreferenceProfile,
    matching: &Matching,
    rotation: &Rotation,
) -> bool {
    let pairs = rotation.pairs();
    let k = pairs.len();
    (0..k).all(|i| {
        let (man, wife) = pairs[i];
        let (next_man, next_wife) = pairs[(i + 1) % k];
        if matching.wife(man) != wife || matching.wife(next_man) != next_wife {
            return false;
        }
        let cond_i = profile.man_prefers(man, wife, next_wife);
        let cond_ii = profile.woman_prefers(next_wife, man, next_man);
        let highest = cond_i
            && profile.man_prefs(man)
                [profile.man_rank(man, wife) + 1..profile.man_rank(man, next_wife)]
                .iter()
                .all(|&w| !profile.woman_prefers(w, man, matching.husband(w)));
        cond_i && cond_ii && highest
    })
}
