use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use si_sentinel_core::encoder::{encode, export_encoding};
use si_sentinel_core::history::{parse_history, History};
use si_sentinel_core::interpreter::{render_dot, Certainty, InterpretBudget, Stage};
use si_sentinel_core::oracle::{oracle_check, OracleError, OracleLimits, OracleVerdict, Rejection};
use si_sentinel_core::pipeline::{check_si, CheckError, CheckOptions, Verdict, VerdictRecord};
use si_sentinel_core::polygraph::constraint_count;
use si_sentinel_core::pruner::prune_constraints;
use si_sentinel_core::solver::SolverBudget;
use si_sentinel_workload::{generate, inject, AnomalyKind, KeyDist, Profile, WorkloadParams};

const EXIT_HOLDS: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BUDGET: u8 = 3;

const SEED_ENV: &str = "SI_SENTINEL_SEED";

#[derive(Parser)]
#[command(name = "si-sentinel", version, about = "Snapshot isolation checker for transaction histories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether histories satisfy snapshot isolation.
    Check(CheckArgs),
    /// Show the counterexample for a violating history.
    Explain(ExplainArgs),
    /// Decide by enumerating every write order (small histories only).
    Oracle(OracleArgs),
    /// Constraint and unknown-dependency counts before and after pruning.
    Stats(StatsArgs),
    /// Write a history produced by the simulated store.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
}

#[derive(Args)]
struct InputArgs {
    /// Input format.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(required = true)]
    histories: Vec<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    /// Print the verdict record as JSON.
    #[arg(long)]
    json: bool,
    /// Leave phase timings out of the output.
    #[arg(long)]
    no_timings: bool,
    /// Skip constraint pruning.
    #[arg(long)]
    no_prune: bool,
    /// Wall-clock cap on solving, in milliseconds.
    #[arg(long)]
    budget_ms: Option<u64>,
    /// Write the constraint system of the (pruned) polygraph to this path.
    #[arg(long)]
    emit_encoding: Option<PathBuf>,
    /// Histories checked concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ExplainArgs {
    history: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "final", value_parser = parse_stage)]
    stage: Stage,
    /// Write the stage graph in DOT format to this path.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Wall-clock cap on solving and on the counterexample search, in
    /// milliseconds.
    #[arg(long)]
    budget_ms: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    history: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = OracleLimits::default().max_transactions)]
    max_txns: usize,
    #[arg(long, default_value_t = OracleLimits::default().max_writers_per_key)]
    max_writers: usize,
}

#[derive(Args)]
struct StatsArgs {
    history: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = WorkloadParams::default().sessions)]
    sessions: usize,
    /// Transactions per session.
    #[arg(long, default_value_t = WorkloadParams::default().txns_per_session)]
    txns: usize,
    /// Operations per (short) transaction.
    #[arg(long, default_value_t = WorkloadParams::default().ops_per_txn)]
    ops: usize,
    /// Ignored by profiles that fix the read share.
    #[arg(long, default_value_t = WorkloadParams::default().read_pct)]
    read_pct: u32,
    #[arg(long, default_value_t = WorkloadParams::default().keys)]
    keys: usize,
    #[arg(long, default_value = "zipfian", value_parser = |s: &str| s.parse::<KeyDist>())]
    dist: KeyDist,
    #[arg(long, default_value = "general", value_parser = |s: &str| s.parse::<Profile>())]
    profile: Profile,
    #[arg(long, default_value_t = WorkloadParams::default().long_txn_pct)]
    long_txn_pct: u32,
    #[arg(long, default_value_t = WorkloadParams::default().long_ops_per_txn)]
    long_ops: usize,
    /// Pattern appended to the generated history, or `none`.
    #[arg(long, default_value = "none", value_parser = parse_anomaly)]
    anomaly: AnomalyChoice,
    /// Overridden by the SI_SENTINEL_SEED environment variable.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct AnomalyChoice(Option<AnomalyKind>);

fn parse_anomaly(s: &str) -> Result<AnomalyChoice, String> {
    if s == "none" {
        Ok(AnomalyChoice(None))
    } else {
        s.parse().map(|k| AnomalyChoice(Some(k)))
    }
}

/// An error carrying the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: e.into(),
        }
    }
}

fn read_history(path: &Path) -> Result<History> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_history(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn check_failure(path: &Path, e: CheckError) -> Failure {
    let code = match e {
        CheckError::Budget(_) => EXIT_BUDGET,
        _ => EXIT_INPUT,
    };
    Failure {
        code,
        error: anyhow::Error::new(e).context(path.display().to_string()),
    }
}

fn budget(ms: Option<u64>) -> SolverBudget {
    SolverBudget {
        time: ms.map(Duration::from_millis),
        conflicts: None,
    }
}

fn verdict_code(v: &Verdict) -> u8 {
    if v.holds {
        EXIT_HOLDS
    } else {
        EXIT_VIOLATION
    }
}

fn write_output(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn fmt_ms(x: f64) -> String {
    format!("{x:.1}")
}

fn text_report(path: &Path, v: &Verdict, timings: bool) -> String {
    let mut out = String::new();
    let name = path.display();
    match (v.holds, v.classification) {
        (true, _) => out.push_str(&format!("{name}: SI holds\n")),
        (false, Some(c)) => out.push_str(&format!("{name}: SI violated ({c})\n")),
        (false, None) => out.push_str(&format!("{name}: SI violated\n")),
    }
    let s = &v.stats;
    out.push_str(&format!(
        "  transactions {}, operations {}\n  constraints {} -> {}, unknown dependencies {} -> {}\n",
        s.transactions,
        s.operations,
        s.constraints_before,
        s.constraints_after,
        s.unknown_dependencies_before,
        s.unknown_dependencies_after,
    ));
    if let (Some(c), Some(g)) = (&v.witness, &v.graph) {
        out.push_str(&format!("  witness {}\n", c.display(g)));
    }
    if let Some(ok) = v.witness_verified {
        out.push_str(&format!("  witness verified: {ok}\n"));
    }
    if timings {
        let t = &v.timings;
        out.push_str(&format!(
            "  timings ms: gate {}, constructing {}, pruning {}, encoding {}, solving {}, interpreting {}\n",
            fmt_ms(t.gate),
            fmt_ms(t.constructing),
            fmt_ms(t.pruning),
            fmt_ms(t.encoding),
            fmt_ms(t.solving),
            fmt_ms(t.interpreting),
        ));
    }
    out
}

#[derive(Serialize)]
struct BatchLine<'a> {
    file: String,
    #[serde(flatten)]
    record: &'a VerdictRecord,
}

fn check_one(path: &Path, args: &CheckArgs) -> Result<(Verdict, String), Failure> {
    let h = read_history(path)?;
    let opts = CheckOptions {
        prune: !args.no_prune,
        solver: budget(args.budget_ms),
        interpret: Some(InterpretBudget::default()),
    };
    let v = check_si(&h, &opts).map_err(|e| check_failure(path, e))?;
    let text = if args.json {
        let record = v.record(!args.no_timings);
        if args.histories.len() == 1 {
            serde_json::to_string_pretty(&record)? + "\n"
        } else {
            serde_json::to_string(&BatchLine {
                file: path.display().to_string(),
                record: &record,
            })? + "\n"
        }
    } else {
        text_report(path, &v, !args.no_timings)
    };
    if let Some(out) = &args.emit_encoding {
        if let Some(g) = &v.graph {
            let mut buf = Vec::new();
            export_encoding(&encode(g), &mut buf)?;
            write_output(out, &buf)?;
        }
    }
    Ok((v, text))
}

fn run_check(args: &CheckArgs) -> Result<u8, Failure> {
    let _ = args.input.format;
    if args.emit_encoding.is_some() && args.histories.len() > 1 {
        return Err(anyhow::anyhow!("--emit-encoding takes a single history").into());
    }
    let n = args.histories.len();
    let results: Vec<Mutex<Option<Result<(Verdict, String), Failure>>>> =
        (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = args.jobs.clamp(1, n);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = check_one(&args.histories[i], args);
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    let mut code = EXIT_HOLDS;
    for slot in results {
        match slot.into_inner().expect("result slot").expect("every file checked") {
            Ok((v, text)) => {
                print!("{text}");
                code = code.max(verdict_code(&v));
            }
            Err(f) => {
                eprintln!("error: {:#}", f.error);
                code = code.max(f.code);
            }
        }
    }
    Ok(code)
}

fn run_explain(args: &ExplainArgs) -> Result<u8, Failure> {
    let h = read_history(&args.history)?;
    let mut interpret = InterpretBudget::default();
    if let Some(ms) = args.budget_ms {
        interpret.time = Duration::from_millis(ms);
    }
    let opts = CheckOptions {
        prune: true,
        solver: budget(args.budget_ms),
        interpret: Some(interpret),
    };
    let v = check_si(&h, &opts).map_err(|e| check_failure(&args.history, e))?;
    if v.holds {
        println!("SI holds; nothing to explain");
        return Ok(EXIT_HOLDS);
    }
    let class = v.classification.map_or_else(|| "unclassified".to_string(), |c| c.to_string());
    println!("classification: {class}");
    let (Some(ce), Some(g)) = (&v.counterexample, &v.graph) else {
        let r = &v.gate;
        println!("rejected before graph construction");
        for (what, issues) in [
            ("aborted read", &r.aborted_reads),
            ("intermediate read", &r.intermediate_reads),
            ("future read", &r.future_reads),
        ] {
            for i in issues.iter() {
                let writer = i.writer.map_or_else(String::new, |w| format!(" of {w}"));
                println!("  {what}: {} op #{}{writer}", i.txn, i.op_index);
            }
        }
        for t in &r.int_violations {
            println!("  internal inconsistency: {} op #{}", t.txn, t.op_index);
        }
        return Ok(EXIT_VIOLATION);
    };
    let stage = ce.stage(args.stage);
    println!("minimal: {}", ce.minimal);
    println!(
        "stage {}: {} transactions, {} dependencies",
        stage_name(args.stage),
        stage.transactions().len(),
        stage.len()
    );
    for t in &stage.deps {
        let tag = match t.tag {
            Certainty::Certain => "certain",
            Certainty::Uncertain => "uncertain",
        };
        let recovered = if stage.recovered.contains(&t.dep.edge.from) {
            " (recovered)"
        } else {
            ""
        };
        println!("  {}{recovered} [{tag}]", g.edge_name(&t.dep.edge));
    }
    if let Some(path) = &args.dot {
        write_output(path, render_dot(ce, args.stage, g).as_bytes())?;
    }
    Ok(EXIT_VIOLATION)
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Original => "original",
        Stage::Participants => "participants",
        Stage::Recovered => "recovered",
        Stage::Final => "final",
    }
}

#[derive(Serialize)]
struct OracleRecord {
    verdict: &'static str,
    reason: Option<&'static str>,
    write_order: Option<std::collections::BTreeMap<String, Vec<String>>>,
}

fn run_oracle(args: &OracleArgs) -> Result<u8, Failure> {
    let h = read_history(&args.history)?;
    let limits = OracleLimits {
        max_transactions: args.max_txns,
        max_writers_per_key: args.max_writers,
    };
    let v = match oracle_check(&h, &limits) {
        Ok(v) => v,
        Err(OracleError::LimitExceeded(msg)) => {
            return Err(Failure {
                code: EXIT_BUDGET,
                error: anyhow::anyhow!(msg),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let record = match &v {
        OracleVerdict::Satisfies(order) => OracleRecord {
            verdict: "holds",
            reason: None,
            write_order: Some(
                order
                    .iter()
                    .map(|(k, ts)| (k.clone(), ts.iter().map(|t| t.to_string()).collect()))
                    .collect(),
            ),
        },
        OracleVerdict::Violates(r) => OracleRecord {
            verdict: "violation",
            reason: Some(match r {
                Rejection::IncompleteRead => "incomplete-read",
                Rejection::Cyclic => "cyclic",
            }),
            write_order: None,
        },
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&record)?);
    } else {
        match (&record.reason, &record.write_order) {
            (Some(reason), _) => println!("SI violated ({reason})"),
            (None, Some(order)) => {
                println!("SI holds");
                for (k, ts) in order {
                    println!("  {k}: {}", ts.join(" < "));
                }
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(if v.satisfies() { EXIT_HOLDS } else { EXIT_VIOLATION })
}

#[derive(Serialize)]
struct StatsRow {
    stage: &'static str,
    constraints: usize,
    unknown_dependencies: usize,
}

fn run_stats(args: &StatsArgs) -> Result<u8, Failure> {
    let h = read_history(&args.history)?;
    let g = si_sentinel_core::polygraph::build_polygraph(&h);
    let before = constraint_count(&g);
    let after = constraint_count(&prune_constraints(g).pruned);
    let rows = [
        StatsRow {
            stage: "before-pruning",
            constraints: before.constraints,
            unknown_dependencies: before.unknown_dependencies,
        },
        StatsRow {
            stage: "after-pruning",
            constraints: after.constraints,
            unknown_dependencies: after.unknown_dependencies,
        },
    ];
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        println!("{:<16}{:>14}{:>22}", "stage", "constraints", "unknown dependencies");
        for r in &rows {
            println!("{:<16}{:>14}{:>22}", r.stage, r.constraints, r.unknown_dependencies);
        }
    }
    Ok(EXIT_HOLDS)
}

fn seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={s:?} is not a 64-bit seed")),
        Err(_) => Ok(flag),
    }
}

fn run_generate(args: &GenerateArgs) -> Result<u8, Failure> {
    let seed = seed(args.seed)?;
    let params = WorkloadParams {
        sessions: args.sessions,
        txns_per_session: args.txns,
        ops_per_txn: args.ops,
        read_pct: args.read_pct,
        keys: args.keys,
        dist: args.dist,
        seed,
        profile: args.profile,
        long_txn_pct: args.long_txn_pct,
        long_ops_per_txn: args.long_ops,
    };
    let mut h = generate(&params)?;
    if let AnomalyChoice(Some(kind)) = args.anomaly {
        h = inject(&h, kind, seed)?;
    }
    let json = h.to_json() + "\n";
    match &args.output {
        Some(path) => write_output(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(EXIT_HOLDS)
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Check(a) => run_check(a),
        Command::Explain(a) => run_explain(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Stats(a) => run_stats(a),
        Command::Generate(a) => run_generate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
