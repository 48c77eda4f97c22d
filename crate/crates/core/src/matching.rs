//! Perfect matchings, deferred acceptance, and stability checks.

use std::fmt;

use thiserror::Error;

use crate::instance::{PreferenceProfile, Side};

/// Largest size accepted by [`brute_force_stable_set`].
pub const BRUTE_FORCE_MAX_SIZE: usize = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchingError {
    #[error("not a perfect matching: {0}")]
    NotPerfect(String),
    #[error("size {size} exceeds the brute-force limit {max}")]
    SizeTooLarge { size: usize, max: usize },
}

/// A perfect matching. Ordering is lexicographic on the man-to-woman array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matching {
    man_partner: Vec<usize>,
    woman_partner: Vec<usize>,
}

impl Matching {
    pub fn from_man_partners(man_partner: Vec<usize>) -> Result<Self, MatchingError> {
        let size = man_partner.len();
        let mut woman_partner = vec![usize::MAX; size];
        for (m, &w) in man_partner.iter().enumerate() {
            if w >= size {
                return Err(MatchingError::NotPerfect(format!(
                    "man {} matched to out-of-range woman {}",
                    m + 1,
                    w + 1
                )));
            }
            if woman_partner[w] != usize::MAX {
                return Err(MatchingError::NotPerfect(format!(
                    "woman {} matched twice",
                    w + 1
                )));
            }
            woman_partner[w] = m;
        }
        Ok(Matching {
            man_partner,
            woman_partner,
        })
    }

    pub fn size(&self) -> usize {
        self.man_partner.len()
    }

    #[inline]
    pub fn wife(&self, man: usize) -> usize {
        self.man_partner[man]
    }

    #[inline]
    pub fn husband(&self, woman: usize) -> usize {
        self.woman_partner[woman]
    }

    pub fn man_partners(&self) -> &[usize] {
        &self.man_partner
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.man_partner.iter().copied().enumerate()
    }

    pub(crate) fn set_pair(&mut self, man: usize, woman: usize) {
        self.man_partner[man] = woman;
        self.woman_partner[woman] = man;
    }
}

/// Renders as space-separated `man:woman` pairs, men ascending, 1-based.
impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (m, w) in self.pairs() {
            if m > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}:{}", m + 1, w + 1)?;
        }
        Ok(())
    }
}

/// An unmatched man and woman who both prefer each other to their partners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockingPair {
    pub man: usize,
    pub woman: usize,
}

/// Deferred acceptance with `proposing` as the proposing side.
///
/// Proposers are started in index order; a displaced proposer keeps
/// proposing before the next index is started. The result is the
/// proposing-side-optimal stable matching.
pub fn gale_shapley(profile: &PreferenceProfile, proposing: Side) -> Matching {
    let s = profile.size();
    let prefs = profile.prefs(proposing);
    let receiver_rank = profile.ranks(proposing.other());

    let mut next_choice = vec![0usize; s];
    let mut engaged_to: Vec<Option<usize>> = vec![None; s];
    for start in 0..s {
        let mut proposer = start;
        loop {
            let target = prefs[proposer][next_choice[proposer]];
            next_choice[proposer] += 1;
            match engaged_to[target] {
                None => {
                    engaged_to[target] = Some(proposer);
                    break;
                }
                Some(current)
                    if receiver_rank[target][proposer] < receiver_rank[target][current] =>
                {
                    engaged_to[target] = Some(proposer);
                    proposer = current;
                }
                Some(_) => {}
            }
        }
    }

    let mut proposer_partner = vec![0usize; s];
    for (receiver, p) in engaged_to.iter().enumerate() {
        proposer_partner[p.expect("complete lists give a perfect matching")] = receiver;
    }
    let man_partner = match proposing {
        Side::Man => proposer_partner,
        Side::Woman => engaged_to.into_iter().map(|p| p.unwrap()).collect(),
    };
    Matching::from_man_partners(man_partner).expect("deferred acceptance yields a bijection")
}

/// Every blocking pair, sorted by `(man, woman)`.
pub fn blocking_pairs(profile: &PreferenceProfile, matching: &Matching) -> Vec<BlockingPair> {
    let mut out = Vec::new();
    for man in 0..profile.size() {
        let wife = matching.wife(man);
        let mut better: Vec<usize> = profile.man_prefs(man)[..profile.man_rank(man, wife)].to_vec();
        better.sort_unstable();
        for woman in better {
            if profile.woman_prefers(woman, man, matching.husband(woman)) {
                out.push(BlockingPair { man, woman });
            }
        }
    }
    out
}

pub fn is_stable(profile: &PreferenceProfile, matching: &Matching) -> bool {
    (0..profile.size()).all(|man| {
        let wife = matching.wife(man);
        profile.man_prefs(man)[..profile.man_rank(man, wife)]
            .iter()
            .all(|&woman| !profile.woman_prefers(woman, man, matching.husband(woman)))
    })
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// All stable matchings by checking every bijection, in lexicographic order.
pub fn brute_force_stable_set(profile: &PreferenceProfile) -> Result<Vec<Matching>, MatchingError> {
    let s = profile.size();
    if s > BRUTE_FORCE_MAX_SIZE {
        return Err(MatchingError::SizeTooLarge {
            size: s,
            max: BRUTE_FORCE_MAX_SIZE,
        });
    }
    let mut perm: Vec<usize> = (0..s).collect();
    let mut out = Vec::new();
    loop {
        let m = Matching::from_man_partners(perm.clone()).expect("permutation");
        if is_stable(profile, &m) {
            out.push(m);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{
        generate_disjoint_pairs, generate_irving_leather, generate_uniform, PreferenceProfile,
    };
    use proptest::prelude::*;

    fn m(partners: &[usize]) -> Matching {
        Matching::from_man_partners(partners.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_bijection() {
        assert!(Matching::from_man_partners(vec![0, 0]).is_err());
        assert!(Matching::from_man_partners(vec![0, 2]).is_err());
    }

    #[test]
    fn rendering() {
        assert_eq!(m(&[1, 0, 2]).to_string(), "1:2 2:1 3:3");
    }

    #[test]
    fn size8_instance_optimal_matchings() {
        let p = generate_irving_leather(3).unwrap();
        let men = gale_shapley(&p, Side::Man);
        assert_eq!(men.man_partners(), &(0..8).collect::<Vec<_>>()[..]);
        let women = gale_shapley(&p, Side::Woman);
        for w in 0..8 {
            assert_eq!(women.husband(w), 7 - w);
        }
    }

    #[test]
    fn cyclic_block() {
        let p = generate_disjoint_pairs(2).unwrap();
        assert_eq!(gale_shapley(&p, Side::Man), m(&[0, 1]));
        assert_eq!(gale_shapley(&p, Side::Woman), m(&[1, 0]));
        assert!(blocking_pairs(&p, &m(&[1, 0])).is_empty());
        assert_eq!(
            brute_force_stable_set(&p).unwrap(),
            vec![m(&[0, 1]), m(&[1, 0])]
        );
    }

    #[test]
    fn single_blocking_pair() {
        let p = PreferenceProfile::from_lists(
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![0, 1], vec![0, 1]],
        )
        .unwrap();
        let bad = m(&[1, 0]);
        assert_eq!(
            blocking_pairs(&p, &bad),
            vec![BlockingPair { man: 0, woman: 0 }]
        );
        assert!(!is_stable(&p, &bad));
        assert!(is_stable(&p, &m(&[0, 1])));
    }

    #[test]
    fn brute_force_small_cases() {
        let one = generate_uniform(1, 0).unwrap();
        assert_eq!(brute_force_stable_set(&one).unwrap(), vec![m(&[0])]);
        assert_eq!(
            brute_force_stable_set(&generate_disjoint_pairs(4).unwrap())
                .unwrap()
                .len(),
            4
        );
        assert_eq!(
            brute_force_stable_set(&generate_disjoint_pairs(6).unwrap())
                .unwrap()
                .len(),
            8
        );
        let big = generate_uniform(10, 0).unwrap();
        assert_eq!(
            brute_force_stable_set(&big),
            Err(MatchingError::SizeTooLarge { size: 10, max: 9 })
        );
    }

    #[test]
    fn stability_flags_exactly_the_stable_set() {
        let p = generate_uniform(4, 11).unwrap();
        let stable = brute_force_stable_set(&p).unwrap();
        let mut perm = vec![0, 1, 2, 3];
        let mut seen = 0;
        loop {
            let cand = m(&perm);
            assert_eq!(is_stable(&p, &cand), stable.contains(&cand));
            assert_eq!(is_stable(&p, &cand), blocking_pairs(&p, &cand).is_empty());
            seen += 1;
            if !next_permutation(&mut perm) {
                break;
            }
        }
        assert_eq!(seen, 24);
        assert!(stable.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn deferred_acceptance_is_stable_and_optimal(size in 1usize..8, seed in any::<u64>()) {
            let p = generate_uniform(size, seed).unwrap();
            let men = gale_shapley(&p, Side::Man);
            let women = gale_shapley(&p, Side::Woman);
            prop_assert!(is_stable(&p, &men));
            prop_assert!(is_stable(&p, &women));
            for other in brute_force_stable_set(&p).unwrap() {
                for man in 0..size {
                    prop_assert!(p.man_rank(man, men.wife(man)) <= p.man_rank(man, other.wife(man)));
                    prop_assert!(p.man_rank(man, women.wife(man)) >= p.man_rank(man, other.wife(man)));
                }
                for woman in 0..size {
                    prop_assert!(p.woman_rank(woman, women.husband(woman)) <= p.woman_rank(woman, other.husband(woman)));
                }
            }
        }
    }
}
