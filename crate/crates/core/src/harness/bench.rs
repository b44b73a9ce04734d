use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::{run_full_context_baseline, BaselineConfig};
use super::metrics::token_efficiency;
use super::score::score;
use crate::controller::{
    run_episode, Backends, EpisodeConfig, EpisodeResult, Instance, Termination, TrajectoryLog,
};
use crate::document::DocumentEnv;
use crate::gateway::ChatBackend;
use crate::policy::Policy;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid instance: {message}")]
    InstanceParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads instances from JSONL. Relative document paths resolve against
/// `doc_root`, or the instance file's directory when none is given.
pub fn load_instances(path: &Path, doc_root: Option<&Path>) -> Result<Vec<Instance>, BenchError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    let root = doc_root
        .map(Path::to_path_buf)
        .or_else(|| path.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let mut instances = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut instance: Instance =
            serde_json::from_str(&line).map_err(|e| BenchError::InstanceParse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
        if instance.query.trim().is_empty() {
            return Err(BenchError::InstanceParse {
                path: path.to_path_buf(),
                line: n + 1,
                message: "query is empty".into(),
            });
        }
        if instance.doc_path.is_relative() {
            instance.doc_path = root.join(&instance.doc_path);
        }
        instances.push(instance);
    }
    Ok(instances)
}

/// Model backends for one episode.
pub struct EpisodeBackends {
    pub policy: Box<dyn Policy>,
    pub diagnosis: Arc<dyn ChatBackend>,
    pub answer: Arc<dyn ChatBackend>,
}

/// Builds fresh backends for each (instance, seed) episode.
pub trait BackendFactory: Sync {
    fn episode(&self, instance: &Instance, seed: u64) -> EpisodeBackends;
}

impl<F> BackendFactory for F
where
    F: Fn(&Instance, u64) -> EpisodeBackends + Sync,
{
    fn episode(&self, instance: &Instance, seed: u64) -> EpisodeBackends {
        self(instance, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub episode: EpisodeConfig,
    pub runs: usize,
    /// Episodes run at once.
    pub parallel: usize,
    /// Where results, the report and trajectories go.
    pub out_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            runs: 1,
            parallel: 1,
            out_dir: None,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<(), BenchError> {
        if self.runs == 0 {
            return Err(BenchError::InvalidConfig("runs must be at least 1".into()));
        }
        if self.parallel == 0 {
            return Err(BenchError::InvalidConfig(
                "parallel must be at least 1".into(),
            ));
        }
        self.episode
            .validate()
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))
    }
}

/// One (instance, run) result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub run: usize,
    pub seed: u64,
    /// `None` when the instance has no gold answer.
    pub correct: Option<bool>,
    pub cost_k: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_ref: Option<PathBuf>,
    /// Why the episode failed, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl InstanceOutcome {
    fn from_result(instance: &Instance, run: usize, seed: u64, result: &EpisodeResult) -> Self {
        let correct = instance
            .gold
            .as_ref()
            .map(|_| score(&result.answer, instance).unwrap_or(false));
        Self {
            id: instance.id.clone(),
            run,
            seed,
            correct,
            cost_k: result.cost_k,
            steps: result.steps_used,
            terminated: Some(result.terminated),
            answer: Some(result.answer.clone()),
            answer_label: result.answer_label.clone(),
            trace_ref: result.trace_ref.clone(),
            error: None,
        }
    }

    fn failed(
        instance: &Instance,
        run: usize,
        seed: u64,
        error: String,
        cost_k: f64,
        steps: usize,
    ) -> Self {
        Self {
            id: instance.id.clone(),
            run,
            seed,
            correct: instance.gold.as_ref().map(|_| false),
            cost_k,
            steps,
            terminated: None,
            answer: None,
            answer_label: None,
            trace_ref: None,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub per_instance: Vec<InstanceOutcome>,
    /// Mean over runs of each run's accuracy, in percent. `None` without
    /// scorable results.
    pub accuracy: Option<f64>,
    pub per_run_accuracy: Vec<Option<f64>>,
    /// Mean cost over all rows; `None` without rows.
    pub mean_cost_k: Option<f64>,
    pub token_eff: Option<f64>,
    pub runs: usize,
    pub failures: usize,
}

impl BenchmarkReport {
    /// Reduces result rows into a report.
    pub fn aggregate(per_instance: Vec<InstanceOutcome>, runs: usize) -> Self {
        let per_run_accuracy: Vec<Option<f64>> = (0..runs)
            .map(|r| {
                let scored: Vec<bool> = per_instance
                    .iter()
                    .filter(|o| o.run == r)
                    .filter_map(|o| o.correct)
                    .collect();
                (!scored.is_empty()).then(|| {
                    100.0 * scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64
                })
            })
            .collect();
        let defined: Vec<f64> = per_run_accuracy.iter().flatten().copied().collect();
        let accuracy =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let mean_cost_k = (!per_instance.is_empty()).then(|| {
            per_instance.iter().map(|o| o.cost_k).sum::<f64>() / per_instance.len() as f64
        });
        let token_eff = match (accuracy, mean_cost_k) {
            (Some(a), Some(c)) => token_efficiency(a, c).ok(),
            _ => None,
        };
        let failures = per_instance.iter().filter(|o| o.error.is_some()).count();
        Self {
            per_instance,
            accuracy,
            per_run_accuracy,
            mean_cost_k,
            token_eff,
            runs,
            failures,
        }
    }

    /// Writes `results.jsonl` (one row per episode) and `report.json`.
    pub fn write(&self, out_dir: &Path) -> Result<(), BenchError> {
        fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
        let results = out_dir.join("results.jsonl");
        let mut file = fs::File::create(&results).map_err(io_error(&results))?;
        for row in &self.per_instance {
            let line = serde_json::to_string(row).expect("row serializes");
            writeln!(file, "{line}").map_err(io_error(&results))?;
        }
        let report = out_dir.join("report.json");
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(&report, text).map_err(io_error(&report))
    }
}

/// Reads a `results.jsonl` file back.
pub fn load_results(path: &Path) -> Result<Vec<InstanceOutcome>, BenchError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::InstanceParse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn trajectory_path(out_dir: &Path, id: &str, run: usize) -> PathBuf {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    out_dir
        .join("trajectories")
        .join(format!("{safe}-run{run}.jsonl"))
}

fn write_trajectory(out_dir: &Path, id: &str, run: usize, log: &TrajectoryLog) -> Option<PathBuf> {
    let path = trajectory_path(out_dir, id, run);
    let written = path
        .parent()
        .map_or(Ok(()), fs::create_dir_all)
        .and_then(|_| fs::write(&path, log.to_jsonl(true)));
    match written {
        Ok(()) => Some(path),
        Err(e) => {
            warn!("could not write trajectory {}: {e}", path.display());
            None
        }
    }
}

fn sweep<F>(
    instances: &[Instance],
    runs: usize,
    parallel: usize,
    episode: F,
) -> Vec<InstanceOutcome>
where
    F: Fn(&Instance, usize) -> InstanceOutcome + Sync,
{
    let jobs: Vec<(usize, &Instance)> = (0..runs)
        .flat_map(|r| instances.iter().map(move |i| (r, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .expect("thread pool builds");
    pool.install(|| jobs.par_iter().map(|&(r, i)| episode(i, r)).collect())
}

/// Runs every instance `runs` times and aggregates the results. Run `r`
/// uses seed `config.episode.seed + r`. Failed episodes become failed rows.
pub fn run_benchmark(
    instances: &[Instance],
    config: &BenchConfig,
    factory: &dyn BackendFactory,
    env: &DocumentEnv,
) -> Result<BenchmarkReport, BenchError> {
    config.validate()?;
    let out_dir = config.out_dir.as_deref();
    let rows = sweep(instances, config.runs, config.parallel, |instance, run| {
        let seed = config.episode.seed.wrapping_add(run as u64);
        let episode_config = EpisodeConfig {
            seed,
            ..config.episode.clone()
        };
        let mut backends = factory.episode(instance, seed);
        let outcome = run_episode(
            instance,
            &episode_config,
            Backends {
                policy: backends.policy.as_mut(),
                diagnosis: backends.diagnosis.as_ref(),
                answer: backends.answer.as_ref(),
            },
            env,
        );
        match outcome {
            Ok(mut episode) => {
                if let Some(dir) = out_dir {
                    episode.result.trace_ref =
                        write_trajectory(dir, &instance.id, run, &episode.log);
                }
                info!(
                    "{} run {run}: {:?} after {} steps",
                    instance.id, episode.result.terminated, episode.result.steps_used
                );
                InstanceOutcome::from_result(instance, run, seed, &episode.result)
            }
            Err(err) => {
                warn!("{} run {run} failed: {err}", instance.id);
                let (cost_k, steps, trace_ref) = match err.partial() {
                    Some(p) => (
                        super::metrics::episode_cost(&p.ledger),
                        p.trace.len(),
                        out_dir.and_then(|d| write_trajectory(d, &instance.id, run, &p.log)),
                    ),
                    None => (0.0, 0, None),
                };
                let mut row =
                    InstanceOutcome::failed(instance, run, seed, err.to_string(), cost_k, steps);
                row.trace_ref = trace_ref;
                row
            }
        }
    });
    let report = BenchmarkReport::aggregate(rows, config.runs);
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

/// The single-call baseline over a set of instances.
pub fn run_baseline_benchmark(
    instances: &[Instance],
    baseline: &BaselineConfig,
    runs: usize,
    parallel: usize,
    backend: &dyn ChatBackend,
    env: &DocumentEnv,
    out_dir: Option<&Path>,
) -> Result<BenchmarkReport, BenchError> {
    if runs == 0 || parallel == 0 {
        return Err(BenchError::InvalidConfig(
            "runs and parallel must be at least 1".into(),
        ));
    }
    let rows = sweep(instances, runs, parallel, |instance, run| {
        let seed = baseline.seed.wrapping_add(run as u64);
        let config = BaselineConfig { seed, ..*baseline };
        match run_full_context_baseline(instance, &config, backend, env) {
            Ok(out) => InstanceOutcome::from_result(instance, run, seed, &out.result),
            Err(err) => InstanceOutcome::failed(instance, run, seed, err.to_string(), 0.0, 0),
        }
    });
    let report = BenchmarkReport::aggregate(rows, runs);
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}
