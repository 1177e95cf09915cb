//! `predbench`: build a benchmark, score architectures, run budget grids
//! and search loops, and summarize the results.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use predbench::eval::TestProtocol;
use predbench::nas::Framework;

use crate::config::RunConfig;
use crate::error::{config as config_err, CliError};

#[derive(Parser, Debug)]
#[command(name = "predbench", version, about = "Performance-predictor benchmark for neural architecture search")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed (falls back to PREDBENCH_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, short = 'j', global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train sampled architectures into a benchmark file.
    Build(BuildArgs),
    /// Score architectures with one or more predictors.
    Score(ScoreArgs),
    /// Evaluate predictors over the init × query budget grid.
    Grid(GridArgs),
    /// Run predictor-guided search.
    Nas(NasArgs),
    /// Summarize grid and search results.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    archs: Option<usize>,
    /// Trainings averaged per curve.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// File name inside the output directory.
    #[arg(long)]
    file: Option<String>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
    /// Architectures such as `3|1|0|4|2|0`, comma separated.
    #[arg(long, value_delimiter = ',')]
    archs: Option<Vec<String>>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    query_budget: Option<f64>,
    #[arg(long)]
    hpo_iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
    /// Init-budget levels in epoch-equivalents.
    #[arg(long, value_delimiter = ',')]
    init: Option<Vec<f64>>,
    /// Query-budget levels in epoch-equivalents.
    #[arg(long, value_delimiter = ',')]
    query: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<TestProtocol>,
    #[arg(long)]
    hpo_iterations: Option<usize>,
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args, Debug)]
struct NasArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<Framework>().map_err(|e| e.to_string()))]
    framework: Option<Framework>,
    /// Evolution: predictor name. BO: surrogate model or `oracle`.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    hpo_iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, value_delimiter = ',')]
    grids: Option<Vec<PathBuf>>,
    #[arg(long, value_delimiter = ',')]
    nas: Option<Vec<PathBuf>>,
    #[arg(long)]
    metric: Option<String>,
}

fn parse_protocol(s: &str) -> Result<TestProtocol, String> {
    match s {
        "uniform" => Ok(TestProtocol::Uniform),
        "mutation" => Ok(TestProtocol::Mutation),
        _ => Err(format!("unknown protocol {s:?}; expected uniform or mutation")),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Applies flags on top of the file and returns the subcommand name.
fn merge(cfg: &mut RunConfig, cli: Cli) -> &'static str {
    if cli.output.is_some() {
        cfg.output = cli.output;
    }
    set(&mut cfg.threads, cli.threads);
    match cli.command {
        Command::Build(a) => {
            set(&mut cfg.build.archs, a.archs);
            set(&mut cfg.build.seeds, a.runs);
            set(&mut cfg.build.train.epochs, a.epochs);
            set(&mut cfg.build.file, a.file);
            "build"
        }
        Command::Score(a) => {
            let s = &mut cfg.score;
            if a.store.is_some() {
                s.store = a.store;
            }
            set(&mut s.predictors, a.predictors);
            set(&mut s.archs, a.archs);
            set(&mut s.count, a.count);
            set(&mut s.train_size, a.train_size);
            if a.query_budget.is_some() {
                s.query_budget = a.query_budget;
            }
            if a.hpo_iterations.is_some() {
                s.hpo_iterations = a.hpo_iterations;
            }
            "score"
        }
        Command::Grid(a) => {
            let g = &mut cfg.grid;
            if a.store.is_some() {
                g.store = a.store;
            }
            set(&mut g.predictors, a.predictors);
            set(&mut g.init, a.init);
            set(&mut g.query, a.query);
            set(&mut g.trials, a.trials);
            set(&mut g.test_size, a.test_size);
            set(&mut g.protocol, a.protocol);
            set(&mut g.metric, a.metric);
            if a.hpo_iterations.is_some() {
                g.hpo_iterations = a.hpo_iterations;
            }
            "grid"
        }
        Command::Nas(a) => {
            let n = &mut cfg.nas;
            if a.store.is_some() {
                n.store = a.store;
            }
            set(&mut n.framework, a.framework);
            set(&mut n.predictor, a.predictor);
            set(&mut n.runs, a.runs);
            set(&mut n.iterations, a.iterations);
            set(&mut n.hpo_iterations, a.hpo_iterations);
            "nas"
        }
        Command::Report(a) => {
            set(&mut cfg.report.grids, a.grids);
            set(&mut cfg.report.nas, a.nas);
            set(&mut cfg.report.metric, a.metric);
            "report"
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed_flag = cli.seed;
    let sub = merge(&mut cfg, cli);
    // report only needs a seed when it recomputes seed variance
    if sub != "report" || cfg.report.seed_variance.is_some() {
        cfg.resolve_seed(seed_flag)?;
    } else if seed_flag.is_some() {
        cfg.seed = seed_flag;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;
    match sub {
        "build" => commands::build(&cfg),
        "score" => commands::score(&cfg),
        "grid" => commands::grid(&cfg),
        "nas" => commands::nas(&cfg),
        _ => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", config_err(e.to_string().trim().lines().next().unwrap_or_default()).to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
