use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use gomk::experiments::{
    all_passed, apply_overrides, parse_assignment, run_graph_classification, run_invariant_suite, run_iso_learning,
    run_motif_classification, run_node_classification, run_pattern_mining, Check, CheckConfig, GraphClassifyConfig, IsoConfig,
    MineConfig, MotifClassifyConfig, NodeClassifyConfig,
};
use gomk::{gomk, Error, GraphBundle, Matcher, Result};

#[derive(Parser)]
#[command(name = "gomk", version, about = "Graph optimal matching kernel experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON config; missing keys take the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for metrics.csv, summary.json and filters/*.dot.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit single filters to random target graphs.
    IsoLearn(RunArgs),
    /// Mine frequent patterns in the planted-motif graph.
    MinePatterns(RunArgs),
    /// Train and probe the synthetic motif classifier.
    MotifClassify(RunArgs),
    /// Node classification on a dataset manifest.
    NodeClassify(RunArgs),
    /// k-fold graph classification on a TU directory or manifest.
    GraphClassify(RunArgs),
    /// Kernel value and matching between two graph bundles.
    Kernel(KernelArgs),
    /// Randomized invariant suite.
    Check(RunArgs),
}

#[derive(Args)]
struct KernelArgs {
    /// First graph bundle (JSON).
    a: PathBuf,
    /// Second graph bundle (JSON).
    b: PathBuf,
    #[arg(long, default_value_t = 2)]
    t: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, value_enum, default_value = "greedy")]
    matcher: MatcherArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MatcherArg {
    Greedy,
    Exact,
}

/// Defaults, then the config file, then `--seed`, then `--set` overrides.
fn resolve<T: Serialize + DeserializeOwned + Default>(args: &RunArgs) -> Result<T> {
    let base: T = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => T::default(),
    };
    let mut sets = Vec::new();
    if let Some(seed) = args.seed {
        sets.push(("seed".to_string(), json!(seed)));
    }
    for raw in &args.overrides {
        sets.push(parse_assignment(raw)?);
    }
    apply_overrides(&base, &sets)
}

fn finish(command: &str, config: Value, report: Value, checks: &[Check], out: Option<&Path>) -> Result<bool> {
    for c in checks {
        println!("{}", c.line());
    }
    let passed = all_passed(checks);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let summary = json!({ "command": command, "config": config, "report": report, "passed": passed });
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(passed)
}

fn run<T, R>(name: &str, args: &RunArgs, driver: impl Fn(&T, Option<&Path>) -> Result<R>, checks: impl Fn(&R) -> &[Check]) -> Result<bool>
where
    T: Serialize + DeserializeOwned + Default,
    R: Serialize,
{
    let cfg: T = resolve(args)?;
    let report = driver(&cfg, args.out.as_deref())?;
    finish(name, serde_json::to_value(&cfg)?, serde_json::to_value(&report)?, checks(&report), args.out.as_deref())
}

fn kernel(args: &KernelArgs) -> Result<bool> {
    let a = GraphBundle::read(&args.a)?.to_graph()?;
    let b = GraphBundle::read(&args.b)?.to_graph()?;
    let m = a.n().max(b.n());
    let matcher = match args.matcher {
        MatcherArg::Greedy => Matcher::Greedy,
        MatcherArg::Exact => Matcher::Exact,
    };
    let k = gomk(&a.padded(m)?, &b.padded(m)?, args.t, args.tau, matcher)?;
    let matching: Vec<Value> = k
        .matching
        .pairs
        .iter()
        .zip(&k.matching.pair_similarities)
        .map(|(&(x, y), &s)| json!([x, y, s]))
        .collect();
    println!("{}", serde_json::to_string(&json!({ "kappa": k.kappa, "matching": matching }))?);
    Ok(true)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::IsoLearn(a) => run::<IsoConfig, _>("iso-learn", a, run_iso_learning, |r| &r.checks),
        Command::MinePatterns(a) => run::<MineConfig, _>("mine-patterns", a, run_pattern_mining, |r| &r.checks),
        Command::MotifClassify(a) => run::<MotifClassifyConfig, _>("motif-classify", a, run_motif_classification, |r| &r.checks),
        Command::NodeClassify(a) => run::<NodeClassifyConfig, _>("node-classify", a, run_node_classification, |r| &r.checks),
        Command::GraphClassify(a) => run::<GraphClassifyConfig, _>("graph-classify", a, run_graph_classification, |r| &r.checks),
        Command::Check(a) => run::<CheckConfig, _>("check", a, |c, _| run_invariant_suite(c), |r| &r.checks),
        Command::Kernel(a) => kernel(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
