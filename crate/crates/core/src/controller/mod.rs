//! The episode loop.
//!
//! Each step asks the policy for one action and dispatches it: foraging
//! actions read the document, Update commits to the epistemic state, Evaluate
//! refreshes the gap diagnosis. The loop stops once a diagnosis reports
//! sufficiency or the step budget runs out, and the answer is then written
//! from the epistemic state alone.

mod answer;
mod dispatch;
mod heuristic;
mod log;
mod replay;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnosis::{is_terminal, GapDiagnosis};
use crate::document::{DocumentEnv, DocumentError, DEFAULT_OBSERVATION_BUDGET};
use crate::epistemic::{EpistemicState, GroundingMode};
use crate::gateway::{ChatBackend, CostLedger, GatewayError};
use crate::harness::episode_cost;
use crate::policy::{
    ActionClass, ActionKind, ContextWindow, Policy, PolicyError, PolicyInput, TodoList, Trace,
    DEFAULT_CONTEXT_BUDGET,
};

pub use answer::{
    answer_decoupled, answer_react, extract_label, option_label, Answer, AnswerRequest,
    TraceAnswerRequest,
};
pub use dispatch::{
    dispatch_action, error_observation, render_grep, DispatchContext, DispatchError, Outcome,
    DEFAULT_READ_LIMIT,
};
pub use heuristic::NeedlePolicy;
pub use log::{
    audit_trajectory, AuditReport, FooterRecord, HeaderRecord, LogRecord, StepRecord,
    TrajectoryLog, Violation,
};
pub use replay::{replay_trajectory, Divergence, Replay, ReplayError};

pub const DEFAULT_T_MAX: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full method: answer from the epistemic state.
    #[default]
    Scout,
    /// History-as-state ablation: answer from the trace.
    React,
    /// No access to the document; answer from an empty state.
    NoForage,
    /// Only Read and GetFileInfo remain among the document tools.
    NoFileTools,
    /// Anchors are not checked when committing.
    NoGrounding,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Scout,
        Mode::React,
        Mode::NoForage,
        Mode::NoFileTools,
        Mode::NoGrounding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Scout => "scout",
            Self::React => "react",
            Self::NoForage => "no_forage",
            Self::NoFileTools => "no_file_tools",
            Self::NoGrounding => "no_grounding",
        }
    }

    pub fn grounding(self) -> GroundingMode {
        match self {
            Self::NoGrounding => GroundingMode::Off,
            _ => GroundingMode::Strict,
        }
    }

    /// Whether an action kind may run in this mode.
    pub fn allows(self, kind: ActionKind, auxiliary_tools: bool) -> bool {
        if kind.class() == ActionClass::Auxiliary && !auxiliary_tools {
            return false;
        }
        match self {
            Self::NoForage => kind.class() != ActionClass::Forage && kind != ActionKind::Update,
            Self::NoFileTools => match kind.class() {
                ActionClass::Forage => matches!(kind, ActionKind::Read | ActionKind::GetFileInfo),
                ActionClass::State => true,
                ActionClass::Auxiliary => false,
            },
            _ => true,
        }
    }

    pub fn tools(self, auxiliary_tools: bool) -> Vec<ActionKind> {
        ActionKind::ALL
            .into_iter()
            .filter(|&k| self.allows(k, auxiliary_tools))
            .collect()
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mode `{0}` (expected scout, react, no_forage, no_file_tools or no_grounding)")]
pub struct UnknownMode(pub String);

impl FromStr for Mode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub t_max: usize,
    pub mode: Mode,
    /// Token budget of the acting prompt.
    pub context_budget: usize,
    /// Token budget of one tool observation.
    pub observation_budget: usize,
    /// Most recent steps shown to the policy; `None` means as many as fit.
    pub window_steps: Option<usize>,
    pub auxiliary_tools: bool,
    /// Sampling seed passed to backends; 0 sends none.
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_T_MAX,
            mode: Mode::Scout,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
            window_steps: None,
            auxiliary_tools: true,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), EpisodeError> {
        let invalid = |m: &str| Err(EpisodeError::InvalidConfig(m.to_string()));
        if self.t_max == 0 {
            return invalid("t_max must be at least 1");
        }
        if self.context_budget == 0 || self.observation_budget == 0 {
            return invalid("budgets must be positive");
        }
        Ok(())
    }

    pub fn window(&self) -> ContextWindow {
        ContextWindow {
            max_steps: self.window_steps,
            token_budget: self.context_budget,
        }
    }

    fn seed(&self) -> Option<u64> {
        (self.seed != 0).then_some(self.seed)
    }
}

/// One question over one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub query: String,
    pub doc_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Sufficient,
    BudgetExhausted,
    /// Single-call baseline; no loop ran.
    SinglePass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_label: Option<String>,
    pub steps_used: usize,
    pub terminated: Termination,
    pub final_state: EpistemicState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_ref: Option<PathBuf>,
    pub cost_k: f64,
    pub wall_ms: u64,
}

/// A finished episode with everything it produced.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub result: EpisodeResult,
    pub trace: Trace,
    pub log: TrajectoryLog,
    pub ledger: CostLedger,
    pub final_diagnosis: Option<GapDiagnosis>,
}

/// What had happened before an episode failed.
#[derive(Debug, Clone)]
pub struct PartialEpisode {
    pub trace: Trace,
    pub log: TrajectoryLog,
    pub ledger: CostLedger,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum EpisodeError {
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("query is empty")]
    EmptyQuery,
    #[error("document unavailable: {0}")]
    Document(String),
    #[error("policy failed at step {step}: {source}")]
    Policy {
        step: usize,
        source: PolicyError,
        partial: Box<PartialEpisode>,
    },
    #[error("step {step} failed: {source}")]
    Dispatch {
        step: usize,
        source: DispatchError,
        partial: Box<PartialEpisode>,
    },
    #[error("answer call failed: {source}")]
    Answer {
        source: GatewayError,
        partial: Box<PartialEpisode>,
    },
}

impl EpisodeError {
    pub fn partial(&self) -> Option<&PartialEpisode> {
        match self {
            Self::Policy { partial, .. }
            | Self::Dispatch { partial, .. }
            | Self::Answer { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

impl From<DocumentError> for EpisodeError {
    fn from(err: DocumentError) -> Self {
        Self::Document(err.to_string())
    }
}

/// The three model roles of an episode.
pub struct Backends<'a> {
    pub policy: &'a mut dyn Policy,
    pub diagnosis: &'a dyn ChatBackend,
    pub answer: &'a dyn ChatBackend,
}

fn elapsed_ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

/// Runs one episode to its answer.
pub fn run_episode(
    instance: &Instance,
    config: &EpisodeConfig,
    backends: Backends<'_>,
    env: &DocumentEnv,
) -> Result<EpisodeRun, EpisodeError> {
    config.validate()?;
    if instance.query.trim().is_empty() {
        return Err(EpisodeError::EmptyQuery);
    }
    let started = Instant::now();
    let doc = env.register_document(&instance.doc_path)?.id;
    let window = config.window();
    let tools = config.mode.tools(config.auxiliary_tools);
    let seed = config.seed();
    let ctx = DispatchContext {
        env,
        doc: &doc,
        query: &instance.query,
        diagnosis_backend: backends.diagnosis,
        grounding: config.mode.grounding(),
        observation_budget: config.observation_budget,
        seed,
    };

    let mut log = TrajectoryLog::default();
    log.push(LogRecord::Header(HeaderRecord {
        instance_id: instance.id.clone(),
        query: instance.query.clone(),
        doc_path: instance.doc_path.display().to_string(),
        choices: instance.choices.clone(),
        mode: config.mode,
        config: config.clone(),
    }));
    let mut trace = Trace::new();
    let mut ledger = CostLedger::new();
    let mut state = EpistemicState::new();
    let mut diagnosis: Option<GapDiagnosis> = None;
    let mut todo = TodoList::default();
    let partial = |trace: &Trace, log: &TrajectoryLog, ledger: &CostLedger| {
        Box::new(PartialEpisode {
            trace: trace.clone(),
            log: log.clone(),
            ledger: ledger.clone(),
        })
    };

    let mut t = 0;
    while t < config.t_max && !is_terminal(diagnosis.as_ref()) {
        let step_started = Instant::now();
        let mark = ledger.len();
        let input = PolicyInput {
            query: &instance.query,
            trace: &trace,
            state: &state,
            window: &window,
            tools: &tools,
            seed,
        };
        let action = match backends.policy.decide(&input, &mut ledger) {
            Ok(action) => action,
            Err(source) => {
                return Err(EpisodeError::Policy {
                    step: t,
                    source,
                    partial: partial(&trace, &log, &ledger),
                })
            }
        };
        let outcome = if config.mode.allows(action.kind(), config.auxiliary_tools) {
            match dispatch_action(
                &action,
                &ctx,
                t,
                &state,
                diagnosis.as_ref(),
                &mut todo,
                &mut ledger,
            ) {
                Ok(outcome) => outcome,
                Err(source) => {
                    return Err(EpisodeError::Dispatch {
                        step: t,
                        source,
                        partial: partial(&trace, &log, &ledger),
                    })
                }
            }
        } else {
            Outcome {
                observation: error_observation(format!(
                    "{} is not available in {} mode",
                    action.kind(),
                    config.mode
                )),
                state: state.clone(),
                diagnosis: diagnosis.clone(),
                is_error: true,
            }
        };
        state = outcome.state;
        diagnosis = outcome.diagnosis;
        let usage = ledger.since(mark);
        let wall_ms = elapsed_ms(step_started);
        log.push(LogRecord::Step(StepRecord {
            t,
            action: action.clone(),
            observation: outcome.observation.clone(),
            usage,
            wall_ms,
            state_id: state.state_id().to_string(),
            state_units: state.len(),
            diagnosis: diagnosis.clone(),
            is_error: outcome.is_error,
        }));
        trace.push(action, outcome.observation, usage, wall_ms);
        t += 1;
    }
    let terminated = if is_terminal(diagnosis.as_ref()) {
        Termination::Sufficient
    } else {
        Termination::BudgetExhausted
    };

    let choices = instance.choices.as_deref();
    let answered = match config.mode {
        Mode::React => answer_react(
            &instance.query,
            &trace,
            choices,
            config.context_budget,
            backends.answer,
            &mut ledger,
            seed,
        ),
        _ => answer_decoupled(
            &instance.query,
            &state,
            choices,
            backends.answer,
            &mut ledger,
            seed,
        ),
    };
    let answer = match answered {
        Ok(answer) => answer,
        Err(source) => {
            return Err(EpisodeError::Answer {
                source,
                partial: partial(&trace, &log, &ledger),
            })
        }
    };

    let result = EpisodeResult {
        answer: answer.text,
        answer_label: answer.label,
        steps_used: trace.len(),
        terminated,
        final_state: state,
        trace_ref: None,
        cost_k: episode_cost(&ledger),
        wall_ms: elapsed_ms(started),
    };
    log.push(LogRecord::Footer(FooterRecord {
        answer: result.answer.clone(),
        answer_label: result.answer_label.clone(),
        terminated: result.terminated,
        steps_used: result.steps_used,
        final_state: result.final_state.clone(),
        cost_k: result.cost_k,
        wall_ms: result.wall_ms,
    }));
    Ok(EpisodeRun {
        result,
        trace,
        log,
        ledger,
        final_diagnosis: diagnosis,
    })
}
