//! Cross-checks between the lattice, the rotation poset, and brute force.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitset::BitSet;
use crate::counting::{
    all_downsets, count_downsets, levels, CountOptions, PivotStrategy, SubPoset,
};
use crate::instance::{PreferenceProfile, Side};
use crate::matching::{brute_force_stable_set, gale_shapley, is_stable};
use crate::poset::{
    agent_chain_cover, build_lattice, matching_from_downset, mixing_inequality, verify_mixing,
    Downset, MixingOptions, RotationPoset, StableLattice,
};
use crate::rotation::{
    check_pair_uniqueness, maximal_elimination_sequence, satisfies_exposure_conditions,
    skipped_pairs,
};

/// Largest size for which brute-force comparisons are part of a check.
pub const BRUTE_FORCE_CHECK_SIZE: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Order,
    Correspondence,
    Chains,
    Mixing,
    Stability,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::Order,
        Check::Correspondence,
        Check::Chains,
        Check::Mixing,
        Check::Stability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Order => "order",
            Check::Correspondence => "correspondence",
            Check::Chains => "chains",
            Check::Mixing => "mixing",
            Check::Stability => "stability",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown check {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub guard: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            guard: crate::poset::DEFAULT_GUARD,
            samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

type CheckResult = Result<String, String>;

fn check_order(poset: &RotationPoset) -> CheckResult {
    poset
        .poset()
        .check_strict_order()
        .map_err(|e| e.to_string())?;
    let sub = SubPoset::whole(poset.poset());
    let lv = levels(&sub);
    for u in 0..poset.len() {
        for v in u + 1..poset.len() {
            if lv[u] == lv[v] && poset.poset().comparable(u, v) {
                return Err(format!(
                    "level {} holds comparable rotations {u} and {v}",
                    lv[u]
                ));
            }
        }
    }
    Ok(format!(
        "{} rotations, {} relations",
        poset.len(),
        poset.poset().relation_size()
    ))
}

fn check_correspondence(
    profile: &PreferenceProfile,
    lattice: &StableLattice,
    poset: &RotationPoset,
) -> CheckResult {
    let sub = SubPoset::whole(poset.poset());
    let (count, _) = count_downsets(
        &sub,
        poset.chains(),
        PivotStrategy::Critical,
        &CountOptions::default(),
    );
    if count != BigUint::from(lattice.len()) {
        return Err(format!(
            "{count} downsets but {} stable matchings",
            lattice.len()
        ));
    }
    let downsets = all_downsets(&sub, lattice.len())
        .ok_or_else(|| format!("more than {} downsets", lattice.len()))?;
    let family: BTreeSet<&BitSet> = downsets.iter().collect();
    let sets: BTreeSet<&BitSet> = lattice.rotation_sets.iter().collect();
    if family != sets {
        return Err("downset family differs from the lattice rotation sets".into());
    }
    for (m, set) in lattice.matchings.iter().zip(&lattice.rotation_sets) {
        let d = Downset::from_bitset(poset.poset(), set).map_err(|e| e.to_string())?;
        let back = matching_from_downset(profile, poset, &d).map_err(|e| e.to_string())?;
        if &back != m {
            return Err(format!(
                "downset {:?} maps to {back}, expected {m}",
                d.elements()
            ));
        }
    }
    if profile.size() <= BRUTE_FORCE_CHECK_SIZE {
        let brute = brute_force_stable_set(profile).map_err(|e| e.to_string())?;
        if brute.len() != lattice.len() {
            return Err(format!(
                "brute force finds {} stable matchings",
                brute.len()
            ));
        }
    }
    Ok(format!(
        "{count} downsets = {} stable matchings",
        lattice.len()
    ))
}

fn agents_of(poset: &RotationPoset, subset: &[usize]) -> usize {
    let mut agents = BitSet::new(poset.n_agents());
    for &r in subset {
        for slot in poset.rotations()[r].agent_slots(poset.size()) {
            agents.insert(slot);
        }
    }
    agents.len()
}

fn check_chains(poset: &RotationPoset, options: &VerifyOptions) -> CheckResult {
    let n = poset.len();
    let sets: Vec<BTreeSet<usize>> = poset
        .rotations()
        .iter()
        .map(|r| r.agent_slots(poset.size()).collect())
        .collect();
    for a in 0..n {
        for b in a + 1..n {
            if !sets[a].is_disjoint(&sets[b]) && !poset.poset().comparable(a, b) {
                return Err(format!(
                    "rotations {a} and {b} share an agent but are incomparable"
                ));
            }
        }
    }
    agent_chain_cover(poset).map_err(|e| e.to_string())?;

    let mut checked = 0usize;
    let mut test = |subset: &[usize]| -> Result<(), String> {
        checked += 1;
        let agents = agents_of(poset, subset);
        if mixing_inequality(agents, subset.len()) {
            Ok(())
        } else {
            Err(format!("rotations {subset:?} involve only {agents} agents"))
        }
    };
    if n <= 15 {
        for mask in 1u32..(1u32 << n) {
            let subset: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            test(&subset)?;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for _ in 0..options.samples {
            let k = rng.random_range(1..=n);
            test(&sample(&mut rng, n, k).into_vec())?;
        }
    }
    Ok(format!(
        "{} agent chains comparable; {checked} rotation subsets meet the agent bound",
        2 * poset.size()
    ))
}

fn check_mixing(poset: &RotationPoset, options: &VerifyOptions) -> CheckResult {
    let opts = MixingOptions {
        samples: options.samples,
        seed: options.seed,
        ..MixingOptions::default()
    };
    let report = verify_mixing(poset.poset(), poset.chains(), &opts);
    if !report.uncovered.is_empty() {
        return Err(format!(
            "rotations on no agent chain: {:?}",
            report.uncovered
        ));
    }
    if let Some(v) = report.violation {
        return Err(format!(
            "subset {:?} touches only {} chains",
            v.subset, v.chains_touched
        ));
    }
    Ok(format!(
        "{} subsets checked{}",
        report.subsets_checked,
        if report.exhaustive {
            " (exhaustive)"
        } else {
            ""
        }
    ))
}

fn check_stability(profile: &PreferenceProfile, lattice: &StableLattice) -> CheckResult {
    if let Some(bad) = lattice
        .matchings
        .iter()
        .position(|m| !is_stable(profile, m))
    {
        return Err(format!(
            "lattice matching {} is unstable",
            lattice.matchings[bad]
        ));
    }
    let seq = maximal_elimination_sequence(profile);
    for (i, r) in seq.rotations.iter().enumerate() {
        if !satisfies_exposure_conditions(profile, &seq.trace[i], r) {
            return Err(format!(
                "rotation {r} is not exposed where it was eliminated"
            ));
        }
        if !is_stable(profile, &seq.trace[i + 1]) {
            return Err(format!("eliminating {r} gives an unstable matching"));
        }
    }
    if seq.trace.last() != Some(&gale_shapley(profile, Side::Woman)) {
        return Err("elimination does not end at the woman-optimal matching".into());
    }
    if !check_pair_uniqueness(&lattice.rotations) {
        return Err("a pair occurs in two rotations".into());
    }
    if profile.size() <= BRUTE_FORCE_CHECK_SIZE {
        let stable = brute_force_stable_set(profile).map_err(|e| e.to_string())?;
        for r in &lattice.rotations {
            for (m, w) in skipped_pairs(profile, r) {
                if stable.iter().any(|s| s.wife(m) == w) {
                    return Err(format!(
                        "rotation {r} skips m{}-w{} which is stable",
                        m + 1,
                        w + 1
                    ));
                }
            }
        }
    }
    Ok(format!(
        "{} matchings stable, {} rotations",
        lattice.len(),
        lattice.rotations.len()
    ))
}

/// Runs the requested checks against an already built lattice and poset.
pub fn verify_parts(
    profile: &PreferenceProfile,
    lattice: &StableLattice,
    poset: &RotationPoset,
    checks: &[Check],
    options: &VerifyOptions,
) -> VerifyReport {
    let outcomes = checks
        .iter()
        .map(|&check| {
            let result = match check {
                Check::Order => check_order(poset),
                Check::Correspondence => check_correspondence(profile, lattice, poset),
                Check::Chains => check_chains(poset, options),
                Check::Mixing => check_mixing(poset, options),
                Check::Stability => check_stability(profile, lattice),
            };
            let (passed, detail) = match result {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckOutcome {
                check,
                passed,
                detail,
            }
        })
        .collect();
    VerifyReport { outcomes }
}

/// Builds the lattice and rotation poset, then runs the checks. A build
/// failure fails every requested check.
pub fn verify_instance(
    profile: &PreferenceProfile,
    checks: &[Check],
    options: &VerifyOptions,
) -> VerifyReport {
    let built = build_lattice(profile, options.guard).and_then(|lattice| {
        let poset = RotationPoset::from_lattice(profile.size(), &lattice)?;
        Ok((lattice, poset))
    });
    match built {
        Ok((lattice, poset)) => verify_parts(profile, &lattice, &poset, checks, options),
        Err(e) => VerifyReport {
            outcomes: checks
                .iter()
                .map(|&check| CheckOutcome {
                    check,
                    passed: false,
                    detail: e.to_string(),
                })
                .collect(),
        },
    }
}
