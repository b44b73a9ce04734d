//! The acting policy: builds the acting prompt from the question, the trace
//! and the epistemic state, obtains one tool call and parses it into an
//! [`Action`].
//!
//! [`LlmPolicy`] asks a chat backend. [`ScriptedPolicy`] replays a recorded
//! action list, e.g. a trajectory log.

mod action;
mod context;
mod trace;

use std::sync::Arc;

use serde_json::Value;

use crate::document::estimate_tokens;
use crate::epistemic::EpistemicState;
use crate::gateway::{
    tracked_chat, CallKind, ChatBackend, ChatRequest, CostLedger, GatewayError, Message, Usage,
};

pub use action::{
    parse_action, tool_catalog, tool_specs, Action, ActionClass, ActionError, ActionKind,
    AnchorRef, TodoItem, TodoStatus, UpdateUnit,
};
pub use context::{
    assemble_policy_context, render_trace_window, ContextWindow, DEFAULT_CONTEXT_BUDGET,
};
pub use trace::{Step, TodoList, Trace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("no usable action after retries: {reason}")]
    UnparsableAction { reason: String, raw: String },
    #[error("action script exhausted")]
    ScriptExhausted,
}

/// Everything a policy may condition on for one decision.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub query: &'a str,
    pub trace: &'a Trace,
    pub state: &'a EpistemicState,
    pub window: &'a ContextWindow,
    /// Tools offered in this decision.
    pub tools: &'a [ActionKind],
    pub seed: Option<u64>,
}

impl PolicyInput<'_> {
    pub fn prompt(&self) -> String {
        assemble_policy_context(self.query, self.trace, self.state, self.window, self.tools)
    }
}

pub trait Policy: Send {
    fn decide(
        &mut self,
        input: &PolicyInput<'_>,
        ledger: &mut CostLedger,
    ) -> Result<Action, PolicyError>;
}

const SYSTEM_PROMPT: &str =
    "You answer questions about a long document that you cannot see in full. \
Explore it with the tools: search cheaply first, then read small anchored windows. \
Commit each relevant finding with Update, citing the line anchor it came from; only the committed \
epistemic state is available when the final answer is written. Call Evaluate to check whether the \
state is sufficient; exploration stops once it is. Call exactly one tool per turn.";

/// Re-asks after an invalid tool call before giving up.
pub const ACTION_RETRIES: usize = 2;

/// Policy backed by a chat model with tool calling.
pub struct LlmPolicy {
    backend: Arc<dyn ChatBackend>,
    retries: usize,
}

impl LlmPolicy {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            retries: ACTION_RETRIES,
        }
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }
}

impl Policy for LlmPolicy {
    fn decide(
        &mut self,
        input: &PolicyInput<'_>,
        ledger: &mut CostLedger,
    ) -> Result<Action, PolicyError> {
        let tools = tool_specs(input.tools);
        let mut messages = vec![
            Message::system(SYSTEM_PROMPT),
            Message::user(input.prompt()),
        ];
        let mut retries_left = self.retries;
        let mut prose_reasked = false;
        loop {
            let request = ChatRequest::new(messages.clone())
                .with_tools(tools.clone())
                .with_seed(input.seed);
            let response = tracked_chat(self.backend.as_ref(), &request, CallKind::Policy, ledger)?;
            let (reason, raw, reask) = match &response.tool_call {
                Some(call) => match parse_action(call) {
                    Ok(action) => return Ok(action),
                    Err(err) => (
                        err.to_string(),
                        serde_json::to_string(call).unwrap_or_default(),
                        format!("That tool call was rejected: {err}. Call one tool with valid arguments."),
                    ),
                },
                None => {
                    let raw = response.text.clone().unwrap_or_default();
                    if prose_reasked {
                        return Err(PolicyError::UnparsableAction {
                            reason: "reply contained no tool call".into(),
                            raw,
                        });
                    }
                    prose_reasked = true;
                    (
                        "reply contained no tool call".to_string(),
                        raw,
                        "Reply with exactly one tool call.".to_string(),
                    )
                }
            };
            if retries_left == 0 {
                return Err(PolicyError::UnparsableAction { reason, raw });
            }
            retries_left -= 1;
            log::warn!("policy reply rejected ({reason}); re-asking");
            messages.push(Message::assistant(raw));
            messages.push(Message::user(reask));
        }
    }
}

/// Replays a fixed action list. Each decision is billed with a local
/// estimate of the acting prompt and the emitted call.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    script: Vec<Action>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(script: Vec<Action>) -> Self {
        Self { script, cursor: 0 }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - self.cursor
    }

    /// The action at the cursor; advances the cursor.
    pub fn scripted_next(&mut self) -> Result<Action, PolicyError> {
        let action = self
            .script
            .get(self.cursor)
            .cloned()
            .ok_or(PolicyError::ScriptExhausted)?;
        self.cursor += 1;
        Ok(action)
    }
}

impl Policy for ScriptedPolicy {
    fn decide(
        &mut self,
        input: &PolicyInput<'_>,
        ledger: &mut CostLedger,
    ) -> Result<Action, PolicyError> {
        let action = self.scripted_next()?;
        let output = serde_json::to_string(&action).expect("action serializes");
        ledger.record(
            CallKind::Policy,
            Usage {
                input_tokens: estimate_tokens(&input.prompt()) as u64,
                output_tokens: estimate_tokens(&output) as u64,
                estimated: true,
            },
        );
        Ok(action)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses an action script: JSONL with one `{name, args}` action per line.
/// Trajectory logs are accepted too; their step records contribute their
/// `action` and other records are skipped.
pub fn parse_script(text: &str) -> Result<Vec<Action>, ScriptError> {
    let mut actions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| ScriptError::Malformed {
            line: i + 1,
            message,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let action_value = match value.get("record").and_then(Value::as_str) {
            Some("step") => value
                .get("action")
                .cloned()
                .ok_or_else(|| malformed("step record has no action".into()))?,
            Some(_) => continue,
            None => value,
        };
        let action: Action =
            serde_json::from_value(action_value).map_err(|e| malformed(e.to_string()))?;
        actions.push(action);
    }
    Ok(actions)
}

pub fn load_script(path: impl AsRef<std::path::Path>) -> Result<Vec<Action>, ScriptError> {
    parse_script(&std::fs::read_to_string(path)?)
}
