//! Thin command-line front end: parse flags, pin the thread pool, load
//! the experiment configuration, and dispatch into the harness. All
//! behaviour lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cafewidth::harness::{self, config::parse_policy, Overrides};
use cafewidth::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cafewidth",
    version,
    about = "Network-width search over a weight-sharing supernet",
    propagate_version = true
)]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run a single seed instead of the config's seed list.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Single-threaded reference mode (byte-identical replays).
    #[arg(long, global = true)]
    reference: bool,
    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// FLOPs budget as a fraction of the full-width network.
    #[arg(long, global = true, value_name = "F")]
    budget_fraction: Option<f64>,
    /// Number of budget-decay stages.
    #[arg(long, global = true, value_name = "T")]
    stages: Option<usize>,
    /// Free-zone half-width r.
    #[arg(long, global = true, value_name = "R")]
    offset: Option<usize>,
    /// Candidate policy: 'shared' or 'sampled:M'.
    #[arg(long, global = true, value_name = "POLICY")]
    policy: Option<String>,
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchStrategy {
    Random,
    Evo,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Uniform,
    Random,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Plan FLOPs-sensitive channel bins and report the search space.
    PlanBins,
    /// Show per-stage budgets, bin counts, and search-space sizes.
    AnalyzeSpace,
    /// Train the weight-sharing supernet (one run per seed).
    Train,
    /// Train a supernet, then search widths under the FLOPs budget.
    Search {
        #[arg(value_enum)]
        strategy: SearchStrategy,
    },
    /// Repeated train-then-search rounds with a decaying budget.
    MultiStage,
    /// Train a standalone network at exact widths from scratch.
    Retrain {
        /// Comma-separated channel counts, one per group (e.g. 8,8,4,4).
        #[arg(long, value_name = "W,W,...")]
        width: Option<String>,
        /// Take the width from a previous result.json's best entry.
        #[arg(long, value_name = "PATH")]
        from_result: Option<PathBuf>,
    },
    /// Reference widths: uniform scaling or best-of-random.
    Baseline {
        #[arg(value_enum)]
        kind: BaselineKind,
    },
    /// Sweep the free-zone half-width r over 0..=3.
    AblateR,
    /// Sweep the random-candidate warmup fraction over {0,.25,.5,.75,1}.
    AblateLambda,
    /// Compare sensitivity-aware and uniform bin planning.
    AblateBins,
    /// Kendall tau-b of supernet scores against from-scratch oracles.
    RankCorr,
}

fn parse_width_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad channel count '{part}' in --width")))
        })
        .collect()
}

fn pin_thread_pool(reference: bool) -> Result<()> {
    let threads = if reference {
        Some(1)
    } else {
        match std::env::var("CAFEWIDTH_THREADS") {
            Ok(v) => Some(v.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(|| {
                Error::InvalidConfig(format!("CAFEWIDTH_THREADS must be a positive integer, got '{v}'"))
            })?),
            Err(_) => None,
        }
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    pin_thread_pool(cli.reference)?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        budget_fraction: cli.budget_fraction,
        stages: cli.stages,
        offset: cli.offset,
        policy: cli.policy.as_deref().map(parse_policy).transpose()?,
        reference: cli.reference,
    };
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("--config PATH is required".into()))?;
    let loaded = harness::LoadedConfig::load(config_path, &overrides)?;
    let command = match cli.command {
        CliCommand::PlanBins => harness::Command::PlanBins,
        CliCommand::AnalyzeSpace => harness::Command::AnalyzeSpace,
        CliCommand::Train => harness::Command::Train,
        CliCommand::Search { strategy } => match strategy {
            SearchStrategy::Random => harness::Command::SearchRandom,
            SearchStrategy::Evo => harness::Command::SearchEvo,
        },
        CliCommand::MultiStage => harness::Command::MultiStage,
        CliCommand::Retrain { width, from_result } => harness::Command::Retrain {
            width: width.as_deref().map(parse_width_list).transpose()?,
            from_result,
        },
        CliCommand::Baseline { kind } => match kind {
            BaselineKind::Uniform => harness::Command::BaselineUniform,
            BaselineKind::Random => harness::Command::BaselineRandom,
        },
        CliCommand::AblateR => harness::Command::AblateR,
        CliCommand::AblateLambda => harness::Command::AblateLambda,
        CliCommand::AblateBins => harness::Command::AblateBins,
        CliCommand::RankCorr => harness::Command::RankCorr,
    };
    harness::run_command(&loaded, &command)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let doc = serde_json::json!({
                "error": {
                    "kind": err.kind(),
                    "message": err.to_string(),
                    "exit_code": err.exit_code(),
                }
            });
            eprintln!("{doc}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
