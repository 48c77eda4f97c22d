//! Stable matching instances: complete, strict preference lists on both sides.
//!
//! Agents are 0-based internally. The text format and every rendering meant
//! for humans use 1-based indices.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Man,
    Woman,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Man => Side::Woman,
            Side::Woman => Side::Man,
        }
    }
}

/// One person in an instance, identified by side and 0-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Agent {
    pub side: Side,
    pub index: usize,
}

impl Agent {
    pub fn man(index: usize) -> Self {
        Agent {
            side: Side::Man,
            index,
        }
    }

    pub fn woman(index: usize) -> Self {
        Agent {
            side: Side::Woman,
            index,
        }
    }

    /// Position of this agent in the `2s` agent list: men first, then women.
    pub fn slot(self, size: usize) -> usize {
        match self.side {
            Side::Man => self.index,
            Side::Woman => size + self.index,
        }
    }

    pub fn from_slot(slot: usize, size: usize) -> Self {
        if slot < size {
            Agent::man(slot)
        } else {
            Agent::woman(slot - size)
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.side {
            Side::Man => 'm',
            Side::Woman => 'w',
        };
        write!(f, "{}{}", tag, self.index + 1)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("invalid size: {0}")]
    InvalidSize(String),
}

/// Complete preference lists for `s` men and `s` women, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceProfile {
    size: usize,
    men_prefs: Vec<Vec<usize>>,
    women_prefs: Vec<Vec<usize>>,
    men_rank: Vec<Vec<usize>>,
    women_rank: Vec<Vec<usize>>,
}

fn check_permutation(list: &[usize], size: usize) -> Result<Vec<usize>, String> {
    if list.len() != size {
        return Err(format!("expected {size} entries, found {}", list.len()));
    }
    let mut rank = vec![usize::MAX; size];
    for (pos, &x) in list.iter().enumerate() {
        if x >= size {
            return Err(format!("index {} out of range 1..={size}", x + 1));
        }
        if rank[x] != usize::MAX {
            return Err(format!("index {} listed twice", x + 1));
        }
        rank[x] = pos;
    }
    Ok(rank)
}

impl PreferenceProfile {
    /// Builds a profile from 0-based lists. Errors carry the 1-based line the
    /// list would occupy in the text format.
    pub fn from_lists(
        men_prefs: Vec<Vec<usize>>,
        women_prefs: Vec<Vec<usize>>,
    ) -> Result<Self, InstanceError> {
        let size = men_prefs.len();
        if size == 0 {
            return Err(InstanceError::InvalidSize("size must be positive".into()));
        }
        if women_prefs.len() != size {
            return Err(InstanceError::InvalidSize(format!(
                "{size} men but {} women",
                women_prefs.len()
            )));
        }
        let mut men_rank = Vec::with_capacity(size);
        for (i, list) in men_prefs.iter().enumerate() {
            let rank =
                check_permutation(list, size).map_err(|message| InstanceError::Validation {
                    line: i + 2,
                    message: format!("man {}: {message}", i + 1),
                })?;
            men_rank.push(rank);
        }
        let mut women_rank = Vec::with_capacity(size);
        for (i, list) in women_prefs.iter().enumerate() {
            let rank =
                check_permutation(list, size).map_err(|message| InstanceError::Validation {
                    line: size + i + 2,
                    message: format!("woman {}: {message}", i + 1),
                })?;
            women_rank.push(rank);
        }
        Ok(PreferenceProfile {
            size,
            men_prefs,
            women_prefs,
            men_rank,
            women_rank,
        })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Total number of agents, `2s`.
    pub fn n_agents(&self) -> usize {
        2 * self.size
    }

    pub fn man_prefs(&self, man: usize) -> &[usize] {
        &self.men_prefs[man]
    }

    pub fn woman_prefs(&self, woman: usize) -> &[usize] {
        &self.women_prefs[woman]
    }

    /// Position of `woman` on `man`'s list (0 = first choice).
    #[inline]
    pub fn man_rank(&self, man: usize, woman: usize) -> usize {
        self.men_rank[man][woman]
    }

    #[inline]
    pub fn woman_rank(&self, woman: usize, man: usize) -> usize {
        self.women_rank[woman][man]
    }

    #[inline]
    pub fn man_prefers(&self, man: usize, a: usize, b: usize) -> bool {
        self.men_rank[man][a] < self.men_rank[man][b]
    }

    #[inline]
    pub fn woman_prefers(&self, woman: usize, a: usize, b: usize) -> bool {
        self.women_rank[woman][a] < self.women_rank[woman][b]
    }

    pub fn prefs(&self, side: Side) -> &[Vec<usize>] {
        match side {
            Side::Man => &self.men_prefs,
            Side::Woman => &self.women_prefs,
        }
    }

    pub fn ranks(&self, side: Side) -> &[Vec<usize>] {
        match side {
            Side::Man => &self.men_rank,
            Side::Woman => &self.women_rank,
        }
    }
}

/// Parses the line-oriented instance format. `#` lines and blank lines are skipped.
pub fn parse_instance(text: &str) -> Result<PreferenceProfile, InstanceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));

    let (size_line, first) = lines.next().ok_or(InstanceError::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let size: usize = first.trim().parse().map_err(|_| InstanceError::Parse {
        line: size_line,
        message: format!("expected the instance size, found {:?}", first.trim()),
    })?;
    if size == 0 {
        return Err(InstanceError::Validation {
            line: size_line,
            message: "size must be positive".into(),
        });
    }

    let mut lists: Vec<(usize, Vec<usize>)> = Vec::with_capacity(2 * size);
    let mut last_line = size_line;
    for (line, content) in lines {
        if lists.len() == 2 * size {
            return Err(InstanceError::Parse {
                line,
                message: format!("unexpected extra line; {} lists already read", 2 * size),
            });
        }
        let mut list = Vec::with_capacity(size);
        for tok in content.split_whitespace() {
            let x: usize = tok.parse().map_err(|_| InstanceError::Parse {
                line,
                message: format!("not a positive integer: {tok:?}"),
            })?;
            if x == 0 || x > size {
                return Err(InstanceError::Validation {
                    line,
                    message: format!("index {x} out of range 1..={size}"),
                });
            }
            list.push(x - 1);
        }
        if list.len() != size {
            return Err(InstanceError::Parse {
                line,
                message: format!("expected {size} entries, found {}", list.len()),
            });
        }
        lists.push((line, list));
        last_line = line;
    }
    if lists.len() != 2 * size {
        return Err(InstanceError::Parse {
            line: last_line,
            message: format!(
                "expected {} preference lists, found {}",
                2 * size,
                lists.len()
            ),
        });
    }

    for (line, list) in &lists {
        check_permutation(list, size).map_err(|message| InstanceError::Validation {
            line: *line,
            message,
        })?;
    }
    let women = lists.split_off(size).into_iter().map(|(_, l)| l).collect();
    let men = lists.into_iter().map(|(_, l)| l).collect();
    PreferenceProfile::from_lists(men, women)
}

/// Canonical text rendering; `parse_instance` inverts it exactly.
pub fn serialize_instance(profile: &PreferenceProfile) -> String {
    let mut out = format!("{}\n", profile.size());
    for list in profile.men_prefs.iter().chain(&profile.women_prefs) {
        let line: Vec<String> = list.iter().map(|x| (x + 1).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Independent uniform permutations from a ChaCha8 stream seeded with `seed`:
/// men's lists first, then women's, each shuffled by Fisher–Yates.
pub fn generate_uniform(size: usize, seed: u64) -> Result<PreferenceProfile, InstanceError> {
    if size == 0 {
        return Err(InstanceError::InvalidSize("size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let mut list: Vec<usize> = (0..size).collect();
        list.shuffle(&mut rng);
        list
    };
    let men: Vec<Vec<usize>> = (0..size).map(|_| draw()).collect();
    let women: Vec<Vec<usize>> = (0..size).map(|_| draw()).collect();
    PreferenceProfile::from_lists(men, women)
}

/// The power-of-two family with many stable matchings, `s = 2^k`.
///
/// Man `i`'s `j`-th choice is woman `i XOR j`; woman `i`'s `j`-th choice is
/// man `i XOR (s - 1 - j)` (all 0-based).
pub fn generate_irving_leather(k: u32) -> Result<PreferenceProfile, InstanceError> {
    if k == 0 || k > 16 {
        return Err(InstanceError::InvalidSize(format!(
            "k must be in 1..=16, got {k}"
        )));
    }
    let size = 1usize << k;
    let men = (0..size)
        .map(|i| (0..size).map(|j| i ^ j).collect())
        .collect();
    let women = (0..size)
        .map(|i| (0..size).map(|j| i ^ (size - 1 - j)).collect())
        .collect();
    PreferenceProfile::from_lists(men, women)
}

/// `s/2` independent copies of the two-by-two cyclic instance. Each block
/// contributes a factor of two to the number of stable matchings.
pub fn generate_disjoint_pairs(size: usize) -> Result<PreferenceProfile, InstanceError> {
    if size == 0 || !size.is_multiple_of(2) {
        return Err(InstanceError::InvalidSize(format!(
            "disjoint pairs need a positive even size, got {size}"
        )));
    }
    let complete = |first: [usize; 2]| -> Vec<usize> {
        let mut list = first.to_vec();
        list.extend((0..size).filter(|x| !first.contains(x)));
        list
    };
    let mut men = Vec::with_capacity(size);
    let mut women = Vec::with_capacity(size);
    for b in (0..size).step_by(2) {
        men.push(complete([b, b + 1]));
        men.push(complete([b + 1, b]));
        women.push(complete([b + 1, b]));
        women.push(complete([b, b + 1]));
    }
    PreferenceProfile::from_lists(men, women)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_instance() {
        let p = parse_instance("1\n1\n1").unwrap();
        assert_eq!(p.size(), 1);
        assert_eq!(p.man_prefs(0), &[0]);
        assert_eq!(p.woman_prefs(0), &[0]);
        assert_eq!(serialize_instance(&p), "1\n1\n1\n");
    }

    #[test]
    fn repeated_entry_is_rejected_with_line() {
        let err = parse_instance("2\n1 1\n2 1\n1 2\n2 1").unwrap_err();
        assert!(
            matches!(err, InstanceError::Validation { line: 2, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let p = parse_instance("# tiny\n\n2\n1 2\n# men done\n2 1\n\n2 1\n1 2\n").unwrap();
        assert_eq!(p, generate_irving_leather(1).unwrap());
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            parse_instance(""),
            Err(InstanceError::Parse { .. })
        ));
        assert!(matches!(
            parse_instance("x\n"),
            Err(InstanceError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_instance("2\n1 2\n2 1\n1 2\n"),
            Err(InstanceError::Parse { .. })
        ));
        assert!(matches!(
            parse_instance("2\n1 2\n2 1\n1 2\n2 1\n1 2\n"),
            Err(InstanceError::Parse { line: 6, .. })
        ));
        assert!(matches!(
            parse_instance("2\n1 2 1\n2 1\n1 2\n2 1\n"),
            Err(InstanceError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_instance("2\n1 2\n2 3\n1 2\n2 1\n"),
            Err(InstanceError::Validation { line: 3, .. })
        ));
        assert!(matches!(
            parse_instance("2\n1 2\n2 1\n1 -2\n2 1\n"),
            Err(InstanceError::Parse { line: 4, .. })
        ));
        assert!(matches!(
            parse_instance("0\n"),
            Err(InstanceError::Validation { .. })
        ));
    }

    #[test]
    fn rank_tables_invert_lists() {
        let p = generate_uniform(7, 3).unwrap();
        for side in [Side::Man, Side::Woman] {
            for (a, list) in p.prefs(side).iter().enumerate() {
                for (pos, &b) in list.iter().enumerate() {
                    assert_eq!(p.ranks(side)[a][b], pos);
                }
            }
        }
    }

    #[test]
    fn irving_leather_two() {
        let p = generate_irving_leather(1).unwrap();
        assert_eq!(p.man_prefs(0), &[0, 1]);
        assert_eq!(p.man_prefs(1), &[1, 0]);
        assert_eq!(p.woman_prefs(0), &[1, 0]);
        assert_eq!(p.woman_prefs(1), &[0, 1]);
        assert!(generate_irving_leather(0).is_err());
    }

    #[test]
    fn disjoint_pairs_blocks() {
        assert_eq!(
            generate_disjoint_pairs(2).unwrap(),
            generate_irving_leather(1).unwrap()
        );
        assert!(matches!(
            generate_disjoint_pairs(3),
            Err(InstanceError::InvalidSize(_))
        ));
        let p = generate_disjoint_pairs(6).unwrap();
        assert_eq!(p.man_prefs(3), &[3, 2, 0, 1, 4, 5]);
        assert_eq!(p.woman_prefs(4), &[5, 4, 0, 1, 2, 3]);
    }

    #[test]
    fn uniform_is_deterministic() {
        assert_eq!(
            generate_uniform(4, 7).unwrap(),
            generate_uniform(4, 7).unwrap()
        );
        assert_ne!(
            generate_uniform(6, 7).unwrap(),
            generate_uniform(6, 8).unwrap()
        );
        let one = generate_uniform(1, 12345).unwrap();
        assert_eq!(one, parse_instance("1\n1\n1\n").unwrap());
    }

    #[test]
    fn uniform_first_choice_frequencies() {
        let mut counts = [0usize; 4];
        let trials = 10_000;
        for seed in 0..trials {
            let p = generate_uniform(4, seed).unwrap();
            counts[p.man_prefs(0)[0]] += 1;
        }
        let expected = trials as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        for &c in &counts {
            let freq = c as f64 / trials as f64;
            assert!(
                (freq - 0.25).abs() <= 0.02,
                "frequency {freq} in {counts:?}"
            );
        }
        // 99.9% quantile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(size in 1usize..10, seed in any::<u64>()) {
            let p = generate_uniform(size, seed).unwrap();
            let text = serialize_instance(&p);
            let back = parse_instance(&text).unwrap();
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(serialize_instance(&back), text);
        }

        #[test]
        fn generated_lists_are_permutations(k in 1u32..6, size in 1usize..12) {
            let profiles = [
                generate_irving_leather(k).unwrap(),
                generate_uniform(size, k as u64).unwrap(),
                generate_disjoint_pairs(2 * size).unwrap(),
            ];
            for p in &profiles {
                for side in [Side::Man, Side::Woman] {
                    for list in p.prefs(side) {
                        let mut sorted = list.clone();
                        sorted.sort_unstable();
                        prop_assert_eq!(sorted, (0..p.size()).collect::<Vec<_>>());
                    }
                }
            }
        }
    }
}
