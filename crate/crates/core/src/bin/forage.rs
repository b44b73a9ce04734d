//! Command-line runner: benchmark episodes, the full-context baseline,
//! trajectory replay and re-scoring of saved results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use forage_core::controller::{replay_trajectory, Instance, Mode, TrajectoryLog};
use forage_core::document::{DocumentEnv, Tokenizer};
use forage_core::gateway::{ChatBackend, HttpBackend};
use forage_core::harness::{
    load_instances, load_results, run_baseline_benchmark, run_benchmark, BenchConfig,
    BenchmarkReport, EpisodeBackends, HarnessConfig,
};
use forage_core::policy::LlmPolicy;
use log::info;

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "forage",
    version,
    about = "Anchored long-document question answering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes over an instance file and write results and a report.
    Run(RunArgs),
    /// Re-execute a saved trajectory offline and check it against the log.
    Replay {
        #[arg(long)]
        trajectory: PathBuf,
        /// Directory for a relative document path in the trajectory header.
        #[arg(long)]
        doc_root: Option<PathBuf>,
    },
    /// Answer each instance from the middle-truncated whole document.
    Baseline(BaselineArgs),
    /// Recompute the report from a results file.
    Score {
        #[arg(long)]
        results: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Instance file, one JSON object per line.
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    doc_root: Option<PathBuf>,
    /// TOML settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    backend_endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Output directory for results.jsonl, report.json and trajectories.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    t_max: Option<usize>,
    /// Base seed; run r uses seed + r. 0 sends no seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    max_context: Option<usize>,
    #[arg(long)]
    tokenizer: Option<Tokenizer>,
}

impl Common {
    fn settings(&self) -> CliResult<HarnessConfig> {
        let mut config = match &self.config {
            Some(path) => HarnessConfig::load(path)?,
            None => HarnessConfig::default(),
        };
        if let Some(runs) = self.runs {
            config.runs = runs;
        }
        if let Some(parallel) = self.parallel {
            config.parallel = parallel;
        }
        if let Some(endpoint) = &self.backend_endpoint {
            config.backend.endpoint = endpoint.clone();
        }
        if let Some(model) = &self.model {
            config.backend.model = model.clone();
        }
        Ok(config)
    }

    fn instances(&self) -> CliResult<Vec<Instance>> {
        let instances = load_instances(&self.instances, self.doc_root.as_deref())?;
        info!(
            "loaded {} instances from {}",
            instances.len(),
            self.instances.display()
        );
        Ok(instances)
    }
}

fn backend(config: &HarnessConfig) -> CliResult<Arc<dyn ChatBackend>> {
    config.backend.validate()?;
    Ok(Arc::new(HttpBackend::new(config.backend.clone())))
}

fn print_report(report: &BenchmarkReport, out: Option<&Path>) -> CliResult<()> {
    if let Some(dir) = out {
        report.write(dir)?;
        info!("wrote results to {}", dir.display());
    }
    let summary = serde_json::json!({
        "runs": report.runs,
        "episodes": report.per_instance.len(),
        "failures": report.failures,
        "accuracy": report.accuracy,
        "per_run_accuracy": report.per_run_accuracy,
        "mean_cost_k": report.mean_cost_k,
        "token_eff": report.token_eff,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(args: RunArgs) -> CliResult<()> {
    let mut settings = args.common.settings()?;
    if let Some(mode) = args.mode {
        settings.episode.mode = mode;
    }
    if let Some(t_max) = args.t_max {
        settings.episode.t_max = t_max;
    }
    if let Some(seed) = args.seed {
        settings.episode.seed = seed;
    }
    let instances = args.common.instances()?;
    let chat = backend(&settings)?;
    let factory = |_: &Instance, _: u64| EpisodeBackends {
        policy: Box::new(LlmPolicy::new(chat.clone())),
        diagnosis: chat.clone(),
        answer: chat.clone(),
    };
    let config = BenchConfig {
        episode: settings.episode.clone(),
        runs: settings.runs,
        parallel: settings.parallel,
        out_dir: args.common.out.clone(),
    };
    let report = run_benchmark(&instances, &config, &factory, &DocumentEnv::new())?;
    print_report(&report, None)
}

fn baseline(args: BaselineArgs) -> CliResult<()> {
    let mut settings = args.common.settings()?;
    if let Some(max_context) = args.max_context {
        settings.baseline.max_context = max_context;
    }
    if let Some(tokenizer) = args.tokenizer {
        settings.baseline.tokenizer = tokenizer;
    }
    let instances = args.common.instances()?;
    let chat = backend(&settings)?;
    let report = run_baseline_benchmark(
        &instances,
        &settings.baseline,
        settings.runs,
        settings.parallel,
        chat.as_ref(),
        &DocumentEnv::new(),
        args.common.out.as_deref(),
    )?;
    print_report(&report, None)
}

fn replay(trajectory: &Path, doc_root: Option<&Path>) -> CliResult<bool> {
    let log = TrajectoryLog::from_jsonl(&std::fs::read_to_string(trajectory)?)?;
    let replay = replay_trajectory(&log, doc_root, &DocumentEnv::new())?;
    let summary = serde_json::json!({
        "faithful": replay.is_faithful(),
        "steps": replay.run.result.steps_used,
        "terminated": replay.run.result.terminated,
        "answer": replay.run.result.answer,
        "audit": replay.audit,
        "divergence": replay.divergence,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(replay.is_faithful())
}

fn score(results: &Path) -> CliResult<()> {
    let rows = load_results(results)?;
    let runs = rows.iter().map(|r| r.run + 1).max().unwrap_or(1);
    print_report(&BenchmarkReport::aggregate(rows, runs), None)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let outcome = match Cli::parse().command {
        Command::Run(args) => run(args).map(|()| true),
        Command::Baseline(args) => baseline(args).map(|()| true),
        Command::Replay {
            trajectory,
            doc_root,
        } => replay(&trajectory, doc_root.as_deref()),
        Command::Score { results } => score(&results).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
