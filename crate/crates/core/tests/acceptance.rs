//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotaposet::counting::{
    brute_force_downsets, count_downsets, critical_element, theoretical_bound, CountOptions,
    PivotStrategy, SubPoset,
};
use rotaposet::instance::{
    generate_irving_leather, generate_uniform, serialize_instance, PreferenceProfile,
};
use rotaposet::matching::{brute_force_stable_set, is_stable, Matching};
use rotaposet::poset::{
    build_lattice, generate_grid_poset, verify_mixing, ChainCover, MixingOptions, Poset,
    RotationPoset, StableLattice, DEFAULT_GUARD,
};
use rotaposet::rotation::{
    check_pair_uniqueness, eliminate, maximal_elimination_sequence, skipped_pairs,
};

const IL8: &str = include_str!("../fixtures/il8.txt");

struct Case {
    label: String,
    profile: PreferenceProfile,
    lattice: StableLattice,
    poset: RotationPoset,
    brute: Option<Vec<Matching>>,
}

fn build_case(label: String, profile: PreferenceProfile, with_brute: bool) -> Result<Case, String> {
    let lattice = build_lattice(&profile, DEFAULT_GUARD).map_err(|e| format!("{label}: {e}"))?;
    let poset = RotationPoset::from_lattice(profile.size(), &lattice)
        .map_err(|e| format!("{label}: {e}"))?;
    let brute = if with_brute {
        Some(brute_force_stable_set(&profile).map_err(|e| format!("{label}: {e}"))?)
    } else {
        None
    };
    Ok(Case {
        label,
        profile,
        lattice,
        poset,
        brute,
    })
}

fn count(sub: &SubPoset<'_>, cover: &ChainCover, strategy: PivotStrategy) -> BigUint {
    count_downsets(sub, cover, strategy, &CountOptions::default()).0
}

fn agents(case: &Case, subset: &[usize]) -> usize {
    let size = case.profile.size();
    let set: BTreeSet<usize> = subset
        .iter()
        .flat_map(|&r| case.poset.rotations()[r].agent_slots(size))
        .collect();
    set.len()
}

type Outcome = Result<String, String>;

fn criterion_1(cases: &[Case]) -> Outcome {
    let mut n = 0;
    for case in cases.iter().filter(|c| c.brute.is_some()) {
        let sub = SubPoset::whole(case.poset.poset());
        let c = count(&sub, case.poset.chains(), PivotStrategy::Critical);
        let expected = case.brute.as_ref().unwrap().len();
        if c != BigUint::from(expected) {
            return Err(format!(
                "{}: {c} downsets, {expected} stable matchings",
                case.label
            ));
        }
        n += 1;
    }
    Ok(format!(
        "{n} uniform instances, downset count = brute-force stable count"
    ))
}

fn criterion_2() -> Outcome {
    let profile = generate_irving_leather(3).map_err(|e| e.to_string())?;
    if serialize_instance(&profile) != IL8 {
        return Err("generated size-8 instance differs from the fixture".into());
    }
    let case = build_case("il8".into(), profile, false)?;
    let sub = SubPoset::whole(case.poset.poset());
    let critical = count(&sub, case.poset.chains(), PivotStrategy::Critical);
    let greedy = count(&sub, case.poset.chains(), PivotStrategy::Greedy);
    let lattice = BigUint::from(case.lattice.len());
    if critical != greedy || greedy != lattice {
        return Err(format!(
            "critical {critical}, greedy {greedy}, lattice {lattice}"
        ));
    }
    Ok(format!(
        "fixture identical; critical = greedy = lattice = {critical}"
    ))
}

fn criterion_3(cases: &[Case]) -> Outcome {
    let mut pairs = 0usize;
    for case in cases {
        let size = case.profile.size();
        let sets: Vec<BTreeSet<usize>> = case
            .poset
            .rotations()
            .iter()
            .map(|r| r.agent_slots(size).collect())
            .collect();
        for a in 0..sets.len() {
            for b in a + 1..sets.len() {
                if sets[a].is_disjoint(&sets[b]) {
                    continue;
                }
                pairs += 1;
                if !case.poset.poset().comparable(a, b) {
                    return Err(format!(
                        "{}: rotations {a} and {b} share an agent",
                        case.label
                    ));
                }
            }
        }
    }
    Ok(format!(
        "{pairs} agent-sharing rotation pairs, all comparable"
    ))
}

fn criterion_4(cases: &[Case]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0usize;
    for case in cases {
        let n = case.poset.len();
        if n == 0 {
            continue;
        }
        for _ in 0..1000 {
            let k = rng.random_range(1..=n);
            let subset = sample(&mut rng, n, k).into_vec();
            let a = agents(case, &subset);
            if a * a < 4 * k {
                return Err(format!(
                    "{}: {k} rotations {subset:?} involve {a} agents",
                    case.label
                ));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} sampled rotation subsets, agents >= 2 sqrt(k)"
    ))
}

fn criterion_5(cases: &[Case]) -> Outcome {
    let opts = MixingOptions::default();
    for case in cases {
        let report = verify_mixing(case.poset.poset(), case.poset.chains(), &opts);
        if !report.passed() {
            return Err(format!("{}: {report:?}", case.label));
        }
    }
    for n in (6..=20).step_by(2) {
        let (poset, cover, _) = generate_grid_poset(n).map_err(|e| e.to_string())?;
        let report = verify_mixing(&poset, &cover, &opts);
        if !report.passed() {
            return Err(format!("grid {n}: {:?}", report.violation));
        }
    }
    let poset = Poset::disjoint_chains(4, 4);
    let cover = ChainCover::greedy(&poset);
    let report = verify_mixing(&poset, &cover, &opts);
    let violation = report
        .violation
        .ok_or("disjoint chains passed the mixing check")?;
    let subset: BTreeSet<usize> = violation.subset.iter().copied().collect();
    let is_chain = cover
        .chains()
        .iter()
        .any(|c| c.len() == 4 && c.iter().copied().collect::<BTreeSet<_>>() == subset);
    if !is_chain || violation.chains_touched != 1 {
        return Err(format!(
            "negative fixture failed with {violation:?}, not a full chain"
        ));
    }
    Ok(format!(
        "{} rotation posets and grids 6..20 mix; disjoint chains fail on one full chain",
        cases.len()
    ))
}

fn criterion_6() -> Outcome {
    let mut seen = 0;
    for n in (56..=64).step_by(2) {
        let (poset, cover, coords) = generate_grid_poset(n).map_err(|e| e.to_string())?;
        let d = poset.len() as f64 / cover.n_chains() as f64;
        if d < 26.0 {
            continue;
        }
        let report =
            critical_element(&SubPoset::whole(&poset), &cover).map_err(|e| e.to_string())?;
        let (rv, cv) = coords[report.element];
        let below = coords
            .iter()
            .filter(|&&(r, c)| r <= rv && c <= cv && (r, c) != (rv, cv))
            .count();
        let above = coords
            .iter()
            .filter(|&&(r, c)| r >= rv && c >= cv && (r, c) != (rv, cv))
            .count();
        let target = (d.powf(1.5) / 8.0).ceil() as usize;
        if below.min(above) < target {
            return Err(format!(
                "grid {n}: element dominates {below}, dominated by {above}, need {target}"
            ));
        }
        if (report.below, report.above) != (below, above) {
            return Err(format!(
                "grid {n}: reported ({}, {}), counted ({below}, {above})",
                report.below, report.above
            ));
        }
        seen += 1;
    }
    if seen == 0 {
        return Err("no grid reached d >= 26".into());
    }
    Ok(format!(
        "{seen} grids with d >= 26, pivots meet ceil(d^1.5 / 8)"
    ))
}

fn criterion_7(cases: &[Case]) -> Outcome {
    let mut eliminations = 0usize;
    for case in cases {
        let l = &case.lattice;
        if let Some(m) = l.matchings.iter().find(|m| !is_stable(&case.profile, m)) {
            return Err(format!("{}: unstable lattice node {m}", case.label));
        }
        for e in &l.edges {
            let next = eliminate(
                &case.profile,
                &l.matchings[e.from],
                &l.rotations[e.rotation],
            )
            .map_err(|err| format!("{}: {err}", case.label))?;
            if next != l.matchings[e.to] || !is_stable(&case.profile, &next) {
                return Err(format!(
                    "{}: edge {} -> {} is not a stable elimination",
                    case.label, e.from, e.to
                ));
            }
            eliminations += 1;
        }
        if !check_pair_uniqueness(&l.rotations) {
            return Err(format!("{}: a pair lies in two rotations", case.label));
        }
        let seq = maximal_elimination_sequence(&case.profile);
        let ids: BTreeSet<_> = seq.rotations.iter().collect();
        if ids.len() != l.rotations.len() || !seq.trace.iter().all(|m| is_stable(&case.profile, m))
        {
            return Err(format!(
                "{}: maximal elimination sequence disagrees with the lattice",
                case.label
            ));
        }
    }
    Ok(format!(
        "{eliminations} lattice eliminations stable; pairs unique across rotations"
    ))
}

fn criterion_8(cases: &[Case]) -> Outcome {
    let mut skipped = 0usize;
    for case in cases.iter().filter(|c| c.profile.size() <= 6) {
        let Some(stable) = &case.brute else { continue };
        for r in case.poset.rotations() {
            for (m, w) in skipped_pairs(&case.profile, r) {
                skipped += 1;
                if stable.iter().any(|s| s.wife(m) == w) {
                    return Err(format!(
                        "{}: {r} skips m{}-w{}, which is stable",
                        case.label,
                        m + 1,
                        w + 1
                    ));
                }
            }
        }
    }
    Ok(format!(
        "{skipped} skipped pairs, none in a stable matching"
    ))
}

/// Downsets by direct subset enumeration.
fn oracle_downsets(poset: &Poset) -> u64 {
    let n = poset.len();
    (0u64..1 << n)
        .filter(|&mask| {
            (0..n).all(|v| mask >> v & 1 == 0 || poset.down(v).iter().all(|u| mask >> u & 1 == 1))
        })
        .count() as u64
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..500 {
        let n = rng.random_range(1..=20);
        let p = [0.05, 0.1, 0.2, 0.35, 0.5][trial % 5];
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|_| rng.random_bool(p))
            .collect();
        let poset = Poset::from_relations(n, &pairs).map_err(|e| e.to_string())?;
        let cover = ChainCover::greedy(&poset);
        let sub = SubPoset::whole(&poset);
        let brute = brute_force_downsets(&sub).map_err(|e| e.to_string())?;
        let critical = count(&sub, &cover, PivotStrategy::Critical);
        let greedy = count(&sub, &cover, PivotStrategy::Greedy);
        let oracle = BigUint::from(oracle_downsets(&poset));
        if brute != critical || brute != greedy || brute != oracle {
            return Err(format!("trial {trial}: brute {brute}, critical {critical}, greedy {greedy}, oracle {oracle}"));
        }
    }
    for len in 0..=20 {
        let poset = Poset::chain(len);
        let cover = ChainCover::greedy(&poset);
        let c = count(&SubPoset::whole(&poset), &cover, PivotStrategy::Critical);
        if c != BigUint::from(len + 1) {
            return Err(format!("chain {len}: {c}"));
        }
        let poset = Poset::antichain(len);
        let cover = ChainCover::greedy(&poset);
        let c = count(&SubPoset::whole(&poset), &cover, PivotStrategy::Critical);
        if c != BigUint::from(1u8) << len {
            return Err(format!("antichain {len}: {c}"));
        }
    }
    for k in 1..=5 {
        for len in 1..=5 {
            let poset = Poset::disjoint_chains(k, len);
            let cover = ChainCover::greedy(&poset);
            let c = count(&SubPoset::whole(&poset), &cover, PivotStrategy::Critical);
            if c != BigUint::from(len as u64 + 1).pow(k as u32) {
                return Err(format!("{k} chains of length {len}: {c}"));
            }
        }
    }
    Ok(
        "500 random posets agree with brute force; chain, antichain and equal-chain forms exact"
            .into(),
    )
}

fn criterion_10() -> Outcome {
    let profile = generate_irving_leather(4).map_err(|e| e.to_string())?;
    let lattice = build_lattice(&profile, DEFAULT_GUARD).map_err(|e| e.to_string())?;
    let rp = RotationPoset::from_lattice(profile.size(), &lattice).map_err(|e| e.to_string())?;
    let sub = SubPoset::whole(rp.poset());
    let start = Instant::now();
    let critical = count(&sub, rp.chains(), PivotStrategy::Critical);
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(300) {
        return Err(format!("critical count took {elapsed:?}"));
    }
    let greedy = count(&sub, rp.chains(), PivotStrategy::Greedy);
    let from_lattice = BigUint::from(lattice.len());
    if critical != greedy || critical != from_lattice {
        return Err(format!(
            "critical {critical}, greedy {greedy}, lattice {from_lattice}"
        ));
    }
    if critical > theoretical_bound(rp.n_agents()) {
        return Err(format!("{critical} exceeds 2^(17 * {})", rp.n_agents()));
    }
    Ok(format!(
        "s=16: {critical} stable matchings, critical count in {:.2}s, <= 2^{}",
        elapsed.as_secs_f64(),
        17 * rp.n_agents()
    ))
}

/// Runs `f`, charging `prior` setup time against `limit`.
fn timed(prior: Duration, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let result = f();
    let elapsed = prior + start.elapsed();
    match (result, limit) {
        (Ok(_), Some(limit)) if elapsed > limit => {
            Err(format!("took {elapsed:?}, limit {limit:?}"))
        }
        (Ok(msg), _) => Ok(format!("{msg} [{:.2}s]", elapsed.as_secs_f64())),
        (Err(e), _) => Err(e),
    }
}

fn main() -> ExitCode {
    let build = Instant::now();
    let mut cases = Vec::new();
    let mut setup_error = None;
    'outer: for s in 2..=6 {
        for seed in 0..200 {
            let profile = generate_uniform(s, seed).expect("uniform generator");
            match build_case(format!("uniform s={s} seed={seed}"), profile, true) {
                Ok(case) => cases.push(case),
                Err(e) => {
                    setup_error = Some(e);
                    break 'outer;
                }
            }
        }
    }
    match generate_irving_leather(3)
        .map_err(|e| e.to_string())
        .and_then(|p| build_case("il8".into(), p, false))
    {
        Ok(case) => cases.push(case),
        Err(e) => setup_error = setup_error.or(Some(e)),
    }
    let build_time = build.elapsed();

    let guard = |f: &dyn Fn(&[Case]) -> Outcome| -> Outcome {
        match &setup_error {
            Some(e) => Err(format!("setup failed: {e}")),
            None => f(&cases),
        }
    };
    let results: Vec<(usize, &str, Outcome)> = vec![
        (
            1,
            "bijection",
            timed(build_time, Some(Duration::from_secs(120)), || {
                guard(&criterion_1)
            }),
        ),
        (
            2,
            "size-8 instance",
            timed(Duration::ZERO, Some(Duration::from_secs(30)), criterion_2),
        ),
        (3, "chain-cover soundness", guard(&criterion_3)),
        (4, "agent count", guard(&criterion_4)),
        (5, "mixing", guard(&criterion_5)),
        (
            6,
            "critical element",
            timed(Duration::ZERO, None, criterion_6),
        ),
        (7, "elimination stability", guard(&criterion_7)),
        (8, "no skipping", guard(&criterion_8)),
        (
            9,
            "counting oracles",
            timed(Duration::ZERO, None, criterion_9),
        ),
        (
            10,
            "scale",
            timed(Duration::ZERO, Some(Duration::from_secs(300)), criterion_10),
        ),
    ];

    let mut failed = 0;
    for (i, name, outcome) in &results {
        match outcome {
            Ok(msg) => println!("PASS criterion {i} ({name}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {i} ({name}): {msg}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
