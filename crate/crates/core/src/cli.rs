//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::counting::{
    brute_force_downsets, count_downsets, theoretical_bound, CountOptions, CountingStats,
    PivotStrategy, SubPoset, DEFAULT_MEMO_CAPACITY,
};
use crate::instance::{
    generate_disjoint_pairs, generate_irving_leather, generate_uniform, parse_instance,
    serialize_instance, PreferenceProfile, Side,
};
use crate::matching::{gale_shapley, Matching};
use crate::poset::{
    build_rotation_poset, enumerate_stable_matchings, generate_grid_poset, poset_dot, poset_json,
    ChainCover, Poset, DEFAULT_GUARD,
};
use crate::rotation::{maximal_elimination_sequence, Rotation};
use crate::verify::{verify_instance, Check, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rotaposet",
    version,
    about = "Rotation posets and stable matching counts"
)]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    /// Maximum number of stable matchings held during lattice enumeration.
    #[arg(long, global = true, default_value_t = DEFAULT_GUARD)]
    guard: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the proposer-optimal stable matching.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Proposing::Men)]
        proposing: Proposing,
    },
    /// List the rotations of an instance.
    Rotations { file: PathBuf },
    /// Export a rotation poset or a grid poset.
    Poset {
        #[command(flatten)]
        source: Source,
        /// Graphviz output instead of JSON.
        #[arg(long)]
        dot: bool,
    },
    /// Count downsets, which for a rotation poset is the number of stable matchings.
    Count {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Pivot::Critical)]
        pivot: Pivot,
        /// Report recursion statistics.
        #[arg(long)]
        stats: bool,
        /// Memo capacity in entries; 0 disables memoization.
        #[arg(long, default_value_t = DEFAULT_MEMO_CAPACITY)]
        memo: usize,
    },
    /// Stream every stable matching in lattice order.
    Enumerate {
        file: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Check structural properties of an instance's rotation poset.
    Verify {
        file: PathBuf,
        /// Comma-separated subset of order, correspondence, chains, mixing, stability.
        #[arg(long, value_delimiter = ',', value_parser = parse_check)]
        checks: Option<Vec<Check>>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the reference bound 2^(17n).
    Bound { n: usize },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Instance file, or `-` for standard input.
    file: Option<PathBuf>,
    /// Use the n x n grid poset instead of an instance.
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Uniform,
    IrvingLeather,
    DisjointPairs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Proposing {
    Men,
    Women,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pivot {
    Critical,
    Greedy,
    Brute,
}

fn parse_check(s: &str) -> Result<Check, String> {
    s.parse()
}

struct Io<'a> {
    stdin: &'a mut dyn Read,
    out: &'a mut dyn Write,
}

type CmdResult = Result<i32, String>;

fn read_profile(io: &mut Io<'_>, path: &PathBuf) -> Result<PreferenceProfile, String> {
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        io.stdin
            .read_to_string(&mut s)
            .map_err(|e| format!("stdin: {e}"))?;
        s
    } else {
        fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?
    };
    parse_instance(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json(out: &mut dyn Write, value: &Value) -> Result<(), String> {
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(value).map_err(|e| e.to_string())?
    )
    .map_err(|e| e.to_string())
}

fn pairs_json(m: &Matching) -> Value {
    Value::Array(m.pairs().map(|(a, b)| json!([a + 1, b + 1])).collect())
}

fn rotation_json(id: usize, r: &Rotation) -> Value {
    let pairs: Vec<Value> = r
        .pairs()
        .iter()
        .map(|&(m, w)| json!([m + 1, w + 1]))
        .collect();
    json!({ "id": id, "pairs": pairs })
}

fn profile_json(p: &PreferenceProfile) -> Value {
    let lists = |side| -> Vec<Vec<usize>> {
        p.prefs(side)
            .iter()
            .map(|l| l.iter().map(|&x| x + 1).collect())
            .collect()
    };
    json!({ "size": p.size(), "men": lists(Side::Man), "women": lists(Side::Woman) })
}

fn cmd_gen(io: &mut Io<'_>, json: bool, family: Family, size: usize, seed: u64) -> CmdResult {
    let profile = match family {
        Family::Uniform => generate_uniform(size, seed),
        Family::DisjointPairs => generate_disjoint_pairs(size),
        Family::IrvingLeather => {
            if size < 2 || !size.is_power_of_two() {
                return Err(format!(
                    "irving-leather size must be a power of two >= 2, got {size}"
                ));
            }
            generate_irving_leather(size.trailing_zeros())
        }
    }
    .map_err(|e| e.to_string())?;
    if json {
        write_json(io.out, &profile_json(&profile))?;
    } else {
        io.out
            .write_all(serialize_instance(&profile).as_bytes())
            .map_err(|e| e.to_string())?;
    }
    Ok(EXIT_OK)
}

fn cmd_solve(io: &mut Io<'_>, json: bool, file: &PathBuf, proposing: Proposing) -> CmdResult {
    let profile = read_profile(io, file)?;
    let (side, name) = match proposing {
        Proposing::Men => (Side::Man, "men"),
        Proposing::Women => (Side::Woman, "women"),
    };
    let m = gale_shapley(&profile, side);
    if json {
        write_json(
            io.out,
            &json!({ "proposing": name, "matching": pairs_json(&m) }),
        )?;
    } else {
        writeln!(io.out, "{m}").map_err(|e| e.to_string())?;
    }
    Ok(EXIT_OK)
}

fn cmd_rotations(io: &mut Io<'_>, json: bool, file: &PathBuf) -> CmdResult {
    let profile = read_profile(io, file)?;
    let rotations = maximal_elimination_sequence(&profile).rotations;
    if json {
        let list: Vec<Value> = rotations
            .iter()
            .enumerate()
            .map(|(i, r)| rotation_json(i, r))
            .collect();
        write_json(io.out, &Value::Array(list))?;
    } else {
        for (i, r) in rotations.iter().enumerate() {
            writeln!(io.out, "{i} {r}").map_err(|e| e.to_string())?;
        }
    }
    Ok(EXIT_OK)
}

/// A poset, its chain cover, and the chain count used for the reference bound.
struct Loaded {
    poset: Poset,
    cover: ChainCover,
    json: Value,
    dot: String,
    bound_n: usize,
}

fn load_source(
    io: &mut Io<'_>,
    source: &Source,
    guard: usize,
    want_exports: bool,
) -> Result<Loaded, String> {
    if let Some(n) = source.grid {
        let (poset, cover, coords) = generate_grid_poset(n).map_err(|e| e.to_string())?;
        let (json, dot) = if want_exports {
            let mut header = Map::new();
            header.insert("grid".into(), json!(n));
            let json = poset_json(
                &poset,
                &cover,
                header,
                |v| json!({ "id": v, "cell": [coords[v].0 + 1, coords[v].1 + 1] }),
            );
            let dot = poset_dot(&poset, |v| {
                format!("{},{}", coords[v].0 + 1, coords[v].1 + 1)
            });
            (json, dot)
        } else {
            (Value::Null, String::new())
        };
        let bound_n = cover.n_chains();
        return Ok(Loaded {
            poset,
            cover,
            json,
            dot,
            bound_n,
        });
    }
    let file = source
        .file
        .as_ref()
        .expect("clap requires a file or --grid");
    let profile = read_profile(io, file)?;
    let rp = build_rotation_poset(&profile, guard).map_err(|e| e.to_string())?;
    let (json, dot) = if want_exports {
        (rp.to_json(), rp.to_dot())
    } else {
        (Value::Null, String::new())
    };
    Ok(Loaded {
        poset: rp.poset().clone(),
        cover: rp.chains().clone(),
        json,
        dot,
        bound_n: rp.n_agents(),
    })
}

fn cmd_poset(io: &mut Io<'_>, source: &Source, guard: usize, dot: bool) -> CmdResult {
    let loaded = load_source(io, source, guard, true)?;
    if dot {
        io.out
            .write_all(loaded.dot.as_bytes())
            .map_err(|e| e.to_string())?;
    } else {
        write_json(io.out, &loaded.json)?;
    }
    Ok(EXIT_OK)
}

fn stats_lines(stats: &CountingStats) -> Vec<String> {
    let mut lines = vec![
        format!("recursion_nodes {}", stats.recursion_nodes),
        format!("max_depth {}", stats.max_depth),
        format!("memo_hits {}", stats.memo_hits),
        format!("pivot_choices {}", stats.pivot_choices),
        format!("n_chains {}", stats.n_chains),
        format!(
            "min_alpha {}",
            stats.min_alpha.map_or("-".to_string(), |a| a.to_string())
        ),
        format!("certified {}", stats.certified),
    ];
    for (i, k) in stats.phases.iter().enumerate() {
        lines.push(format!("phase {i} k {k} limit {}", stats.phase_limit(i)));
    }
    lines
}

struct CountArgs<'a> {
    source: &'a Source,
    pivot: Pivot,
    stats: bool,
    memo: usize,
}

fn cmd_count(io: &mut Io<'_>, json: bool, guard: usize, args: CountArgs<'_>) -> CmdResult {
    if args.pivot == Pivot::Brute && args.stats {
        return Err("--stats is not available with --pivot brute".into());
    }
    let loaded = load_source(io, args.source, guard, false)?;
    let sub = SubPoset::whole(&loaded.poset);
    let (count, stats) = match args.pivot {
        Pivot::Brute => (brute_force_downsets(&sub).map_err(|e| e.to_string())?, None),
        Pivot::Critical | Pivot::Greedy => {
            let strategy = if args.pivot == Pivot::Critical {
                PivotStrategy::Critical
            } else {
                PivotStrategy::Greedy
            };
            let options = CountOptions {
                memo_capacity: args.memo,
                ..CountOptions::default()
            };
            let (count, stats) = count_downsets(&sub, &loaded.cover, strategy, &options);
            (count, Some(stats))
        }
    };
    let bound_log2 = 17 * loaded.bound_n;
    debug_assert!(count <= theoretical_bound(loaded.bound_n));
    if json {
        let mut value = match (&stats, args.stats) {
            (Some(s), true) => s.to_json(&count),
            _ => json!({ "count": count.to_string() }),
        };
        value["bound_log2"] = json!(bound_log2);
        write_json(io.out, &value)?;
    } else {
        writeln!(io.out, "{count}").map_err(|e| e.to_string())?;
        writeln!(io.out, "bound 2^{bound_log2}").map_err(|e| e.to_string())?;
        if let (Some(s), true) = (&stats, args.stats) {
            for line in stats_lines(s) {
                writeln!(io.out, "{line}").map_err(|e| e.to_string())?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_enumerate(
    io: &mut Io<'_>,
    json: bool,
    guard: usize,
    file: &PathBuf,
    limit: Option<usize>,
) -> CmdResult {
    let profile = read_profile(io, file)?;
    let walk = enumerate_stable_matchings(&profile, guard);
    for (i, item) in walk.take(limit.unwrap_or(usize::MAX)).enumerate() {
        let m = item.map_err(|e| e.to_string())?;
        let line = if json {
            json!({ "index": i, "matching": pairs_json(&m) }).to_string()
        } else {
            m.to_string()
        };
        writeln!(io.out, "{line}").map_err(|e| e.to_string())?;
    }
    Ok(EXIT_OK)
}

fn cmd_verify(
    io: &mut Io<'_>,
    json: bool,
    file: &PathBuf,
    checks: &[Check],
    options: VerifyOptions,
) -> CmdResult {
    let profile = read_profile(io, file)?;
    let report = verify_instance(&profile, checks, &options);
    if json {
        let outcomes: Vec<Value> = report
            .outcomes
            .iter()
            .map(|o| json!({ "check": o.check.name(), "passed": o.passed, "detail": o.detail }))
            .collect();
        write_json(
            io.out,
            &json!({ "passed": report.passed(), "checks": outcomes }),
        )?;
    } else {
        for o in &report.outcomes {
            let tag = if o.passed { "pass" } else { "FAIL" };
            writeln!(io.out, "{tag} {}: {}", o.check, o.detail).map_err(|e| e.to_string())?;
        }
    }
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn cmd_bound(io: &mut Io<'_>, json: bool, n: usize) -> CmdResult {
    let value = theoretical_bound(n);
    if json {
        write_json(
            io.out,
            &json!({ "n": n, "log2": 17 * n, "value": value.to_string() }),
        )?;
    } else {
        writeln!(io.out, "{value}").map_err(|e| e.to_string())?;
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli, io: &mut Io<'_>) -> CmdResult {
    let json = cli.json;
    let guard = cli.guard;
    match &cli.command {
        Command::Gen { family, size, seed } => cmd_gen(io, json, *family, *size, *seed),
        Command::Solve { file, proposing } => cmd_solve(io, json, file, *proposing),
        Command::Rotations { file } => cmd_rotations(io, json, file),
        Command::Poset { source, dot } => cmd_poset(io, source, guard, *dot),
        Command::Count {
            source,
            pivot,
            stats,
            memo,
        } => cmd_count(
            io,
            json,
            guard,
            CountArgs {
                source,
                pivot: *pivot,
                stats: *stats,
                memo: *memo,
            },
        ),
        Command::Enumerate { file, limit } => cmd_enumerate(io, json, guard, file, *limit),
        Command::Verify {
            file,
            checks,
            samples,
            seed,
        } => {
            let checks = checks.clone().unwrap_or_else(|| Check::ALL.to_vec());
            let options = VerifyOptions {
                guard,
                samples: *samples,
                seed: *seed,
            };
            cmd_verify(io, json, file, &checks, options)
        }
        Command::Bound { n } => cmd_bound(io, json, *n),
    }
}

/// Runs the command line `args` (program name first). Returns 0 on success,
/// 1 when `verify` finds a failed check, and 2 on usage, input or other errors.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut io = Io { stdin, out };
    match dispatch(cli, &mut io) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_ERROR
        }
    }
}

/// [`run`] against the process's own streams.
pub fn main_with_std_streams() -> i32 {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let code = run(
        std::env::args_os(),
        &mut stdin.lock(),
        &mut out,
        &mut stderr.lock(),
    );
    let _ = out.flush();
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("rotaposet").chain(args.iter().copied());
        let code = run(argv, &mut io::empty(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn gen_disjoint_pairs() {
        let (code, out, _) = call(&["gen", "--family", "disjoint-pairs", "--size", "2"]);
        assert_eq!(code, 0);
        assert_eq!(out, "2\n1 2\n2 1\n2 1\n1 2\n");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&[]).0, 2);
        assert_eq!(call(&["gen", "--family", "nope", "--size", "2"]).0, 2);
        assert_eq!(
            call(&["gen", "--family", "irving-leather", "--size", "6"]).0,
            2
        );
        assert_eq!(
            call(&["count", "--grid", "6", "--pivot", "brute", "--stats"]).0,
            2
        );
        assert_eq!(call(&["count"]).0, 2);
        assert_eq!(call(&["solve", "/no/such/file"]).0, 2);
        assert_eq!(call(&["verify", "x", "--checks", "order,bogus"]).0, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("count"));
    }

    #[test]
    fn bound_values() {
        assert_eq!(call(&["bound", "1"]).1, "131072\n");
        let (_, out, _) = call(&["--json", "bound", "0"]);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["value"], "1");
        assert_eq!(v["log2"], 0);
    }

    #[test]
    fn grid_count_text() {
        let (code, out, _) = call(&["count", "--grid", "6"]);
        assert_eq!(code, 0);
        let count = out.lines().next().unwrap();
        let (poset, _, _) = generate_grid_poset(6).unwrap();
        let brute = brute_force_downsets(&SubPoset::whole(&poset)).unwrap();
        assert_eq!(count.to_string(), brute.to_string());
        assert_eq!(out.lines().nth(1), Some("bound 2^204"));
    }

    #[test]
    fn stdin_input() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut input: &[u8] = b"2\n1 2\n2 1\n2 1\n1 2\n";
        let code = run(
            ["rotaposet", "solve", "-", "--proposing", "women"],
            &mut input,
            &mut out,
            &mut err,
        );
        assert_eq!(code, 0);
        assert_eq!(String::from_utf8(out).unwrap(), "1:2 2:1\n");
    }
}
