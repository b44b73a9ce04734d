use serde::{Deserialize, Serialize};

use super::action::{tool_specs, ActionKind};
use super::trace::{Step, Trace};
use crate::document::estimate_tokens;
use crate::epistemic::EpistemicState;

pub const DEFAULT_CONTEXT_BUDGET: usize = 32_000;

/// How much of the trace the acting prompt may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    /// Most recent steps to include at most; `None` means as many as fit.
    pub max_steps: Option<usize>,
    /// Hard cap on the whole prompt, in estimated tokens.
    pub token_budget: usize,
}

impl Default for ContextWindow {
    fn default() -> Self {
        Self {
            max_steps: None,
            token_budget: DEFAULT_CONTEXT_BUDGET,
        }
    }
}

const OBSERVATION_CLIP_MARKER: &str = "\n[observation clipped]";
const MIN_OBSERVATION_BYTES: usize = 256;

fn elision_marker(count: usize) -> String {
    format!("[... {count} earlier steps elided ...]\n")
}

fn clip(text: &str, max_bytes: usize) -> &str {
    if text.len() <= max_bytes {
        return text;
    }
    let mut end = max_bytes;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

fn render_step(step: &Step, observation_cap: usize) -> String {
    let observation = if step.observation.len() > observation_cap {
        format!(
            "{}{OBSERVATION_CLIP_MARKER}",
            clip(
                &step.observation,
                observation_cap.saturating_sub(OBSERVATION_CLIP_MARKER.len())
            )
        )
    } else {
        step.observation.clone()
    };
    format!(
        "Step {}: {}\nObservation:\n{}\n\n",
        step.index, step.action, observation
    )
}

/// Renders the newest steps that fit in `max_bytes`, oldest first, with an
/// elision marker when earlier steps were left out.
pub fn render_trace_window(trace: &Trace, max_steps: Option<usize>, max_bytes: usize) -> String {
    let steps = trace.steps();
    if steps.is_empty() {
        return String::new();
    }
    let marker_room = elision_marker(steps.len()).len();
    let room = max_bytes.saturating_sub(marker_room);
    let observation_cap = (room / 4).max(MIN_OBSERVATION_BYTES);
    let window = max_steps.unwrap_or(steps.len()).min(steps.len());
    let mut kept: Vec<String> = Vec::new();
    let mut used = 0;
    for step in steps[steps.len() - window..].iter().rev() {
        let rendered = render_step(step, observation_cap);
        if used + rendered.len() > room {
            break;
        }
        used += rendered.len();
        kept.push(rendered);
    }
    let elided = steps.len() - kept.len();
    let mut out = String::new();
    if elided > 0 {
        out.push_str(&elision_marker(elided));
    }
    for rendered in kept.iter().rev() {
        out.push_str(rendered);
    }
    out
}

/// Deterministic acting prompt: question, tool catalog, epistemic state and
/// the most recent steps. Never exceeds `window.token_budget` estimated
/// tokens.
pub fn assemble_policy_context(
    query: &str,
    trace: &Trace,
    state: &EpistemicState,
    window: &ContextWindow,
    tools: &[ActionKind],
) -> String {
    let mut head = format!("Question:\n{query}\n\nTools:\n");
    for tool in tool_specs(tools) {
        head.push_str(&format!("- {}: {}\n", tool.name, tool.description));
    }
    head.push_str(&format!(
        "\nEpistemic state:\n{}\n\nRecent steps:\n",
        state.render()
    ));
    let budget_bytes = window.token_budget.saturating_mul(4);
    if head.len() >= budget_bytes {
        return clip(&head, budget_bytes).to_string();
    }
    let steps = if trace.is_empty() {
        "(none yet)\n".to_string()
    } else {
        render_trace_window(trace, window.max_steps, budget_bytes - head.len())
    };
    let prompt = head + &steps;
    debug_assert!(estimate_tokens(&prompt) <= window.token_budget);
    prompt
}
