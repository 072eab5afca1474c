//! `aam`: run a concrete machine or the abstract analysis on a program file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aam_core::abstract_machine::PolicySpec;
use aam_core::concrete::{eval_reference, run_machine, Machine, RefError, RefOutcome};
use aam_core::engine::{analyze, to_dot, to_json, AnalysisConfig, AnalysisError, DEFAULT_NODE_CAP};
use aam_core::gc::GcMode;
use aam_core::syntax::{check_closed, parse, Expr};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Substitution-based reduction (pure core and `if` only).
    Ref,
    /// The CEK machine (pure core and `if` only).
    Cek,
    /// The time-stamped CESK* machine with the counter allocator.
    Cesk,
    /// Reachable states of the abstract machine.
    Analyze,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyName {
    #[value(name = "0cfa")]
    ZeroCfa,
    #[value(name = "kcfa")]
    KCfa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GcArg {
    None,
    Free,
}

#[derive(Debug, Parser)]
#[command(
    name = "aam",
    version,
    about = "Abstract machines and control-flow analysis for a small higher-order language"
)]
struct Args {
    /// Program file: one s-expression, `;` starts a comment.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Analyze)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = PolicyName::ZeroCfa)]
    policy: PolicyName,
    /// Contour length for kcfa [default: 1].
    #[arg(long)]
    k: Option<usize>,
    /// Collect after every step [default: free for analyze and cesk, none
    /// otherwise].
    #[arg(long, value_enum)]
    gc: Option<GcArg>,
    /// Maximum number of machine steps.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    fuel: u64,
    /// Write the state graph in Graphviz format (analyze only).
    #[arg(long, value_name = "PATH")]
    dot: Option<PathBuf>,
    /// Write the state graph as JSON (analyze only).
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Print every machine state, one per line (cek and cesk only).
    #[arg(long)]
    trace: bool,
    /// Worker threads for the analysis.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
}

enum Failure {
    Usage(String),
    Cap(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Usage(msg) => {
                eprintln!("aam: {msg}");
                ExitCode::from(1)
            }
            Failure::Cap(msg) => {
                eprintln!("aam: {msg}");
                ExitCode::from(2)
            }
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn validate(args: &Args) -> Result<(PolicySpec, GcMode), Failure> {
    let policy = match (args.policy, args.k) {
        (PolicyName::ZeroCfa, None) => PolicySpec::zero_cfa(),
        (PolicyName::ZeroCfa, Some(_)) => return usage("--k is only meaningful with --policy kcfa"),
        (PolicyName::KCfa, k) => PolicySpec::k_cfa(k.unwrap_or(1)),
    };
    let concrete_only = matches!(args.mode, Mode::Ref | Mode::Cek);
    let gc = match (args.gc, concrete_only) {
        (Some(GcArg::Free), true) => return usage("--gc free needs a machine with a store (cesk or analyze)"),
        (Some(GcArg::None), _) | (None, true) => GcMode::None,
        (Some(GcArg::Free), false) | (None, false) => GcMode::Free,
    };
    if args.mode != Mode::Analyze && (args.dot.is_some() || args.json.is_some()) {
        return usage("--dot and --json need --mode analyze");
    }
    if args.trace && !matches!(args.mode, Mode::Cek | Mode::Cesk) {
        return usage("--trace needs --mode cek or --mode cesk");
    }
    Ok((policy, gc))
}

fn read_program(path: &Path) -> Result<Expr, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let e = parse(&text).map_err(|e| Failure::Usage(format!("{}:{e}", path.display())))?;
    check_closed(&e).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(e)
}

fn node_cap() -> Result<usize, Failure> {
    match std::env::var("AAM_NODE_CAP") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("AAM_NODE_CAP must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_NODE_CAP),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(args: &Args) -> Result<(), Failure> {
    let (policy, gc) = validate(args)?;
    let e = read_program(&args.input)?;
    let fuel = usize::try_from(args.fuel).unwrap_or(usize::MAX);
    match args.mode {
        Mode::Ref => match eval_reference(&e, fuel) {
            Ok(RefOutcome::Value(v)) => println!("result: {v}"),
            Ok(RefOutcome::Timeout) => println!("result: timeout"),
            Ok(RefOutcome::Stuck) => println!("result: stuck"),
            Err(RefError::Unsupported(l)) => {
                return usage(format!("ref mode supports neither set! nor callcc (found at label {l})"))
            }
            Err(err) => return usage(err.to_string()),
        },
        Mode::Cek | Mode::Cesk => {
            let machine = if args.mode == Mode::Cek {
                if !e.is_pure() {
                    return usage("cek mode supports neither set! nor callcc");
                }
                Machine::Cek
            } else {
                Machine::Cesk(gc)
            };
            let run = run_machine(&e, machine, fuel).map_err(|err| Failure::Usage(err.to_string()))?;
            if args.trace {
                for line in run.trace_lines() {
                    println!("{line}");
                }
            }
            println!("result: {}", run.outcome());
        }
        Mode::Analyze => {
            let policy = policy.build(&e).map_err(|err| Failure::Usage(err.to_string()))?;
            let config = AnalysisConfig {
                gc,
                node_cap: node_cap()?,
                jobs: args.jobs.map(|j| usize::try_from(j).unwrap_or(usize::MAX)),
            };
            let g = match analyze(&e, &policy, &config) {
                Ok(g) => g,
                Err(err @ AnalysisError::CapExceeded { .. }) => return Err(Failure::Cap(err.to_string())),
                Err(err) => return usage(err.to_string()),
            };
            if let Some(path) = &args.json {
                write_file(path, &to_json(&g))?;
            }
            if let Some(path) = &args.dot {
                write_file(path, &to_dot(&g))?;
            }
            println!(
                "nodes: {}, edges: {}, final: {}, stuck: {}",
                g.nodes.len(),
                g.edges.len(),
                g.finals.len(),
                g.stuck.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}
