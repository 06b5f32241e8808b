//! Command-line front end: argument parsing, dispatch to the checking modes,
//! report rendering and exit codes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use fdcheck_core::checker::{check_inductive, SweepReport, DEFAULT_UNIVERSE_BUDGET};
use fdcheck_core::cutoff::{one_index_sets_equal, trace_sets_equal, CutoffError};
use fdcheck_core::invariants::sa_invariant;
use fdcheck_core::{
    explore, explore_sweep, CheckError, CheckReport, Encoding, ExploreOptions, Params, Property,
    TimeoutInit, Verdict,
};

/// Exit codes, a total function of the outcome.
pub mod exit {
    pub const HOLDS: i32 = 0;
    pub const VIOLATED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const BOUND: i32 = 3;
    pub const IO: i32 = 4;
    /// The model itself misbehaved (a reachable state broke its type).
    pub const INTERNAL: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "fdcheck", version, about = "Explicit-state checker for a timeout-based failure detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check one instance.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Breadth-first reachability.
    Reach,
    /// Bounded-universe inductive-invariant check of the SA invariant.
    Inductive,
    /// Bounded trace-set comparison against the N-process instance.
    Cutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncodingArg {
    Predicate,
    Counter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeoutArg {
    Fixed(u32),
    Star,
}

fn parse_timeout(s: &str) -> Result<TimeoutArg, String> {
    if s.eq_ignore_ascii_case("star") {
        return Ok(TimeoutArg::Star);
    }
    match s.parse::<u32>() {
        Ok(0) => Err("the initial timeout must be at least 1".into()),
        Ok(n) => Ok(TimeoutArg::Fixed(n)),
        Err(_) => Err(format!("expected a positive integer or `star`, got `{s}`")),
    }
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Message delay bound (rounds).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    delta: u32,
    /// Relative speed bound (rounds between two steps of a correct process).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    phi: u32,
    /// Initial receiver timeout: a number, or `star` for every value up to
    /// --star-max. Defaults to g in reach/inductive mode and Δ+1 in cutoff
    /// mode.
    #[arg(long, value_parser = parse_timeout)]
    timeout_init: Option<TimeoutArg>,
    /// Upper end of the STAR sweep.
    #[arg(long)]
    star_max: Option<u32>,
    /// sa, esa or sc.
    #[arg(long, default_value = "sa", value_parser = |s: &str| s.parse::<Property>())]
    property: Property,
    #[arg(long, value_enum, default_value_t = EncodingArg::Counter)]
    encoding: EncodingArg,
    #[arg(long, value_enum, default_value_t = Mode::Reach)]
    mode: Mode,
    /// Let the receiver crash too (off by default).
    #[arg(long)]
    allow_receiver_crash: bool,
    /// Stop exploring after this many rounds.
    #[arg(long)]
    max_depth: Option<u32>,
    /// Bound of the cutoff trace-set comparison, in rounds.
    #[arg(long, default_value_t = 4)]
    depth: u32,
    /// Size of the N-process instance in cutoff mode: 3 compares the
    /// two-index projection, 1 runs the one-index check.
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Output::Json)]
    output: Output,
    /// Override g = 6Φ+Δ.
    #[arg(long)]
    guard_g: Option<u32>,
    /// Override g' = (Δ+Φ+1) + (g+1)(Φ+1).
    #[arg(long)]
    guard_gprime: Option<u32>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
    /// Also write the counterexample trace, one sub-round per line.
    #[arg(long)]
    trace_file: Option<PathBuf>,
    /// State budget; exceeding it exits with code 3.
    #[arg(long, default_value_t = ExploreOptions::default().max_states)]
    max_states: u64,
    /// Largest representable timeout (defaults to max(g+1, initial timeout)).
    #[arg(long)]
    timeout_cap: Option<u32>,
    /// Largest representable ghost counter (defaults to g'+1).
    #[arg(long)]
    hlfsc_cap: Option<u32>,
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub params: Params,
    pub mode: Mode,
    pub property: Property,
    pub output: Output,
    pub depth: u32,
    pub n: usize,
    pub threads: Option<usize>,
    pub trace_file: Option<PathBuf>,
    pub max_states: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// `--help` or `--version` output.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Bound(String),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => exit::HOLDS,
            CliError::Usage(_) => exit::USAGE,
            CliError::Bound(_) => exit::BOUND,
            CliError::Io(_) => exit::IO,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }
}

impl From<CheckError> for CliError {
    fn from(e: CheckError) -> Self {
        match e {
            CheckError::Params(_) | CheckError::UnreachableGuard(_) => CliError::Usage(e.to_string()),
            CheckError::BudgetExhausted { .. } | CheckError::UniverseTooLarge { .. } => {
                CliError::Bound(e.to_string())
            }
            CheckError::Transition(_) | CheckError::TypeInvariant { .. } => {
                CliError::Internal(e.to_string())
            }
        }
    }
}

impl From<CutoffError> for CliError {
    fn from(e: CutoffError) -> Self {
        match e {
            CutoffError::Budget(_) => CliError::Bound(e.to_string()),
            CutoffError::ProcessCount(_)
            | CutoffError::Depth(_)
            | CutoffError::Timeout(_)
            | CutoffError::Capacity(_)
            | CutoffError::Params(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first). Unknown flags and invalid values
/// are usage errors naming the offending flag.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Help(e.to_string())
        }
        _ => CliError::Usage(e.to_string()),
    })?;
    let Command::Check(a) = cli.command;
    let usage = |flag: &str, e: &dyn std::fmt::Display| CliError::Usage(format!("{flag}: {e}"));

    let timeout_init = match a.timeout_init {
        Some(TimeoutArg::Fixed(t)) => TimeoutInit::Fixed(t),
        Some(TimeoutArg::Star) => TimeoutInit::Star,
        None if a.mode == Mode::Cutoff => TimeoutInit::Fixed(a.delta + 1),
        None => TimeoutInit::Fixed(fdcheck_core::Guards::default_for(a.delta, a.phi).g),
    };
    if timeout_init == TimeoutInit::Star && a.star_max.is_none() {
        return Err(usage("--star-max", &"required with --timeout-init star"));
    }
    if timeout_init == TimeoutInit::Star && a.mode != Mode::Reach {
        return Err(usage("--timeout-init", &"star is only supported in reach mode"));
    }
    if a.mode == Mode::Inductive && a.property != Property::Sa {
        return Err(usage("--property", &"inductive mode checks the SA invariant, use sa"));
    }
    if a.mode == Mode::Cutoff && !matches!(a.n, 1 | 3) {
        return Err(usage("--n", &"cutoff mode supports 3 (two-index) or 1 (one-index)"));
    }
    let encoding = match a.encoding {
        EncodingArg::Predicate => Encoding::Predicate,
        EncodingArg::Counter => Encoding::Counter,
    };
    let mut b = Params::builder(a.delta, a.phi)
        .timeout_init(timeout_init)
        .allow_receiver_crash(a.allow_receiver_crash)
        .max_depth(a.max_depth)
        .encoding(encoding)
        .guard_g(a.guard_g)
        .guard_gprime(a.guard_gprime);
    if let Some(m) = a.star_max {
        b = b.star_max(m);
    }
    if let Some(c) = a.timeout_cap {
        b = b.timeout_cap(c);
    }
    if let Some(c) = a.hlfsc_cap {
        b = b.hlfsc_cap(c);
    }
    let params = b.build().map_err(|e| {
        use fdcheck_core::model::ParamsError as E;
        let flag = match &e {
            E::Delta(_) | E::Buffer(_) => "--delta",
            E::Phi(_) => "--phi",
            E::ZeroTimeout | E::InitialTimeout { .. } | E::StarNotConcrete => "--timeout-init",
            E::StarMax => "--star-max",
            E::TimeoutCap { .. } => "--timeout-cap",
            E::Capacity { field, .. } if *field == "hlfsc_cap" => "--hlfsc-cap",
            E::Capacity { .. } => "--timeout-cap",
            E::Guard("g") => "--guard-g",
            E::Guard(_) => "--guard-gprime",
        };
        usage(flag, &e)
    })?;
    Ok(RunConfig {
        params,
        mode: a.mode,
        property: a.property,
        output: a.output,
        depth: a.depth,
        n: a.n,
        threads: a.threads.map(|t| t as usize),
        trace_file: a.trace_file,
        max_states: a.max_states,
    })
}

fn exit_for(v: Verdict) -> i32 {
    match v {
        Verdict::Holds => exit::HOLDS,
        Verdict::Violated => exit::VIOLATED,
        Verdict::DepthBoundReached => exit::BOUND,
    }
}

/// Runs `cfg`, writing the report to `out`; returns the exit code.
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    if let Some(t) = cfg.threads {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cfg.mode {
        Mode::Reach => run_reach(cfg, out),
        Mode::Inductive => run_inductive(cfg, out),
        Mode::Cutoff => run_cutoff(cfg, out),
    }
}

fn run_reach(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let opts = ExploreOptions {
        max_states: cfg.max_states,
        ..ExploreOptions::default()
    };
    let (bytes, verdict, trace) = match cfg.params.timeout_init {
        TimeoutInit::Fixed(t) => {
            let report = explore(&cfg.params, cfg.property, t, &opts)?;
            let trace = report.counterexample.as_ref().map(|t| t.render_text());
            (emit_report(&report, cfg.output), report.verdict, trace)
        }
        TimeoutInit::Star => {
            let sweep = explore_sweep(&cfg.params, cfg.property, &opts)?;
            let trace = first_violation(&sweep).and_then(|r| r.counterexample.as_ref());
            let trace = trace.map(|t| t.render_text());
            (emit_sweep(&sweep, cfg.output), sweep.verdict(), trace)
        }
    };
    if let (Some(path), Some(trace)) = (&cfg.trace_file, trace) {
        fs::write(path, trace)?;
    }
    out.write_all(&bytes)?;
    Ok(exit_for(verdict))
}

fn first_violation(sweep: &SweepReport) -> Option<&CheckReport> {
    sweep.points.iter().find(|r| r.verdict == Verdict::Violated)
}

fn run_inductive(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let inv = sa_invariant();
    let p = &cfg.params;
    let report = check_inductive(|s| inv.holds(s, p), cfg.property, p, DEFAULT_UNIVERSE_BUDGET)?;
    let verdict = if report.holds() {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    let bytes = match cfg.output {
        Output::Json => {
            let v = json!({
                "mode": "inductive",
                "verdict": verdict,
                "invariant": inv.names(),
                "universe_size": report.universe_size,
                "invariant_states": report.invariant_states,
                "runtime_ms": report.runtime_ms,
                "failures": report.failures,
            });
            json_line(&v)
        }
        Output::Text => {
            let mut s = format!("mode=inductive invariant={}\n", inv.names().join(","));
            let _ = writeln!(s, "verdict={}", verdict.as_str());
            let _ = writeln!(
                s,
                "universe={} invariant_states={} time_ms={}",
                report.universe_size, report.invariant_states, report.runtime_ms
            );
            for f in &report.failures {
                let _ = writeln!(s, "failed obligation {} at state={}", f.obligation, f.state);
                if let Some(succ) = &f.successor {
                    let _ = writeln!(s, "  successor={succ}");
                }
            }
            s.into_bytes()
        }
    };
    out.write_all(&bytes)?;
    Ok(exit_for(verdict))
}

fn run_cutoff(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let p = &cfg.params;
    let (equal, detail) = if cfg.n == 1 {
        let equal = one_index_sets_equal(cfg.depth, p)?;
        (equal, json!({ "n": 1, "depth": cfg.depth, "equal": equal }))
    } else {
        let r = trace_sets_equal(cfg.depth, p)?;
        (r.equal, json!(r))
    };
    let verdict = if equal {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    let runtime_ms = started.elapsed().as_millis() as u64;
    let bytes = match cfg.output {
        Output::Json => json_line(&json!({
            "mode": "cutoff",
            "verdict": verdict,
            "runtime_ms": runtime_ms,
            "report": detail,
        })),
        Output::Text => {
            let mut s = format!("mode=cutoff n={} depth={}\n", cfg.n, cfg.depth);
            let _ = writeln!(s, "verdict={}", verdict.as_str());
            for key in ["two_process", "projected_three", "lifted_two"] {
                if let Some(v) = detail.get(key) {
                    let _ = writeln!(s, "{key}={v}");
                }
            }
            if let Some(w) = detail.get("witness").filter(|w| !w.is_null()) {
                let _ = writeln!(s, "witness={w}");
            }
            let _ = writeln!(s, "time_ms={runtime_ms}");
            s.into_bytes()
        }
    };
    out.write_all(&bytes)?;
    Ok(exit_for(verdict))
}

fn json_line(v: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("values serialize");
    bytes.push(b'\n');
    bytes
}

/// Renders a single-instance report.
pub fn emit_report(report: &CheckReport, format: Output) -> Vec<u8> {
    match format {
        Output::Json => json_line(&serde_json::to_value(report).expect("reports serialize")),
        Output::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "property={} timeout_init={} g={} g_prime={}",
                report.property.name(),
                report.timeout_init,
                report.guards.g,
                report.guards.g_prime
            );
            let _ = writeln!(s, "verdict={}", report.verdict.as_str());
            let _ = writeln!(
                s,
                "states={} depth={} time_ms={}",
                report.states_explored, report.max_depth, report.runtime_ms
            );
            let _ = writeln!(s, "max_hlfsc_seen={}", report.max_hlfsc_seen);
            if let Some(t) = &report.counterexample {
                s.push_str(&t.render_text());
            }
            s.into_bytes()
        }
    }
}

/// Renders a STAR sweep: the usual report keys aggregated over all points,
/// plus one summary per point.
pub fn emit_sweep(sweep: &SweepReport, format: Output) -> Vec<u8> {
    let states: u64 = sweep.points.iter().map(|r| r.states_explored).sum();
    let depth = sweep.points.iter().map(|r| r.max_depth).max().unwrap_or(0);
    let runtime: u64 = sweep.points.iter().map(|r| r.runtime_ms).sum();
    let hlfsc = sweep.points.iter().map(|r| r.max_hlfsc_seen).max().unwrap_or(0);
    let violation = first_violation(sweep);
    match format {
        Output::Json => {
            let points: Vec<Value> = sweep
                .points
                .iter()
                .map(|r| {
                    json!({
                        "timeout_init": r.timeout_init,
                        "verdict": r.verdict,
                        "states_explored": r.states_explored,
                        "max_depth": r.max_depth,
                        "max_hlfsc_seen": r.max_hlfsc_seen,
                    })
                })
                .collect();
            json_line(&json!({
                "verdict": sweep.verdict(),
                "states_explored": states,
                "max_depth": depth,
                "runtime_ms": runtime,
                "max_hlfsc_seen": hlfsc,
                "counterexample": violation.and_then(|r| r.counterexample.as_ref()),
                "guards": sweep.points.first().map(|r| r.guards),
                "sweep": points,
            }))
        }
        Output::Text => {
            let mut s = String::new();
            for r in &sweep.points {
                let _ = writeln!(
                    s,
                    "timeout_init={} verdict={} states={} depth={}",
                    r.timeout_init,
                    r.verdict.as_str(),
                    r.states_explored,
                    r.max_depth
                );
            }
            let _ = writeln!(s, "verdict={}", sweep.verdict().as_str());
            let _ = writeln!(s, "states={states} depth={depth} time_ms={runtime}");
            let _ = writeln!(s, "max_hlfsc_seen={hlfsc}");
            if let Some(t) = violation.and_then(|r| r.counterexample.as_ref()) {
                s.push_str(&t.render_text());
            }
            s.into_bytes()
        }
    }
}

/// Full program: parse, run, print errors; returns the exit code.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = parse_config(argv).and_then(|cfg| run(&cfg, out));
    match result {
        Ok(code) => code,
        Err(CliError::Help(msg)) => {
            let _ = out.write_all(msg.as_bytes());
            exit::HOLDS
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.to_string().trim_start_matches("error: "));
            e.exit_code()
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> Result<RunConfig, CliError> {
        parse_config(std::iter::once("fdcheck").chain(args.split_whitespace()))
    }

    fn usage_message(args: &str) -> String {
        match parse(args) {
            Err(CliError::Usage(m)) => m,
            other => panic!("expected a usage error for `{args}`, got {other:?}"),
        }
    }

    #[test]
    fn safe_instance_parses_to_reach_mode() {
        let c = parse("check --delta 2 --phi 4 --timeout-init 26 --property sa").unwrap();
        assert_eq!(c.mode, Mode::Reach);
        assert_eq!(c.property, Property::Sa);
        assert_eq!(c.params.timeout_init, TimeoutInit::Fixed(26));
        assert_eq!((c.params.guards.g, c.params.guards.g_prime), (26, 142));
        assert_eq!(c.output, Output::Json);
    }

    #[test]
    fn star_parses_to_a_sweep() {
        let c = parse("check --delta 2 --phi 4 --timeout-init star --star-max 40 --property esa")
            .unwrap();
        assert_eq!(c.params.timeout_init, TimeoutInit::Star);
        assert_eq!(c.params.initial_timeouts(), (1..=40).collect::<Vec<_>>());
        assert_eq!(c.property, Property::Esa);
    }

    #[test]
    fn default_timeouts_depend_on_mode() {
        let c = parse("check --delta 2 --phi 4").unwrap();
        assert_eq!(c.params.timeout_init, TimeoutInit::Fixed(26));
        let c = parse("check --delta 2 --phi 4 --mode cutoff").unwrap();
        assert_eq!(c.params.timeout_init, TimeoutInit::Fixed(3));
    }

    #[test]
    fn guard_overrides_are_taken() {
        let c = parse("check --delta 1 --phi 1 --guard-g 9 --guard-gprime 40").unwrap();
        assert_eq!((c.params.guards.g, c.params.guards.g_prime), (9, 40));
    }

    #[test]
    fn usage_errors_name_the_flag() {
        assert!(usage_message("check --delta 0 --phi 4").contains("--delta"));
        assert!(usage_message("check --delta 2 --phi 0").contains("--phi"));
        assert!(usage_message("check --delta 2 --phi 4 --bogus").contains("--bogus"));
        assert!(usage_message("check --delta 2 --phi 4 --timeout-init 0").contains("--timeout-init"));
        assert!(usage_message("check --delta 2 --phi 4 --timeout-init star").contains("--star-max"));
        assert!(usage_message("check --delta 2 --phi 4 --property xyz").contains("--property"));
        assert!(usage_message("check --delta 2 --phi 4 --mode inductive --property sc")
            .contains("--property"));
        assert!(usage_message("check --delta 1 --phi 1 --mode cutoff --n 2").contains("--n"));
    }

    #[test]
    fn help_is_not_an_error() {
        let e = parse("--help").unwrap_err();
        assert!(matches!(e, CliError::Help(_)));
        assert_eq!(e.exit_code(), exit::HOLDS);
    }

    #[test]
    fn exit_codes_follow_the_verdict() {
        assert_eq!(exit_for(Verdict::Holds), 0);
        assert_eq!(exit_for(Verdict::Violated), 1);
        assert_eq!(exit_for(Verdict::DepthBoundReached), 3);
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::Bound(String::new()).exit_code(), 3);
        assert_eq!(CliError::Io(io::Error::other("x")).exit_code(), 4);
    }
}
