use regex::Regex;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::epistemic::EpistemicState;
use crate::gateway::{
    tracked_chat, CallKind, ChatBackend, ChatRequest, CostLedger, GatewayError, Message,
};
use crate::policy::{render_trace_window, Trace};

const ANSWER_SYSTEM_PROMPT: &str = "Answer the question using only the evidence provided. \
If options are listed, start the answer with the option label in parentheses, e.g. (B), \
followed by the option text. If the evidence is insufficient, still give your best answer.";

/// Everything the final answer may see. There is deliberately no field for
/// the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub query: String,
    pub state_rendering: String,
    pub choices: Option<Vec<String>>,
}

impl AnswerRequest {
    pub fn new(query: &str, state: &EpistemicState, choices: Option<&[String]>) -> Self {
        Self {
            query: query.to_string(),
            state_rendering: state.render(),
            choices: choices.map(<[String]>::to_vec),
        }
    }

    pub fn messages(&self) -> Vec<Message> {
        vec![
            Message::system(ANSWER_SYSTEM_PROMPT),
            Message::user(format!(
                "{}\nEvidence:\n{}",
                question_block(&self.query, self.choices.as_deref()),
                self.state_rendering
            )),
        ]
    }
}

/// History-as-state answer input used by the ablation arm: the windowed
/// trace replaces the epistemic state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceAnswerRequest {
    pub query: String,
    pub trace_rendering: String,
    pub choices: Option<Vec<String>>,
}

impl TraceAnswerRequest {
    pub fn new(
        query: &str,
        trace: &Trace,
        choices: Option<&[String]>,
        budget_tokens: usize,
    ) -> Self {
        Self {
            query: query.to_string(),
            trace_rendering: render_trace_window(trace, None, budget_tokens.saturating_mul(4)),
            choices: choices.map(<[String]>::to_vec),
        }
    }

    pub fn messages(&self) -> Vec<Message> {
        let mut user = question_block(&self.query, self.choices.as_deref());
        if !self.trace_rendering.is_empty() {
            user.push_str(&format!("\nInteraction history:\n{}", self.trace_rendering));
        }
        vec![Message::system(ANSWER_SYSTEM_PROMPT), Message::user(user)]
    }
}

/// Option label for position `i` (0 → `A`).
pub fn option_label(i: usize) -> String {
    char::from(b'A' + (i % 26) as u8).to_string()
}

fn strip_label_prefix(choice: &str) -> &str {
    let t = choice.trim_start();
    let b = t.as_bytes();
    if b.len() >= 3 && b[0] == b'(' && b[1].is_ascii_uppercase() && b[2] == b')' {
        t[3..].trim_start()
    } else {
        t
    }
}

fn question_block(query: &str, choices: Option<&[String]>) -> String {
    let mut out = format!("Question:\n{query}\n");
    if let Some(choices) = choices.filter(|c| !c.is_empty()) {
        out.push_str("Options:\n");
        for (i, choice) in choices.iter().enumerate() {
            out.push_str(&format!(
                "({}) {}\n",
                option_label(i),
                strip_label_prefix(choice)
            ));
        }
    }
    out
}

/// First standalone option label among the first `n_choices` labels.
/// Parenthesized labels win over bare ones.
pub fn extract_label(text: &str, n_choices: usize) -> Option<String> {
    static PAREN: OnceLock<Regex> = OnceLock::new();
    static BARE: OnceLock<Regex> = OnceLock::new();
    let paren = PAREN.get_or_init(|| Regex::new(r"\(([A-Za-z])\)").expect("valid regex"));
    let bare = BARE.get_or_init(|| Regex::new(r"\b([A-Z])\b").expect("valid regex"));
    let in_range = |c: &str| {
        let c = c.to_ascii_uppercase();
        let idx = c.as_bytes()[0].wrapping_sub(b'A') as usize;
        (idx < n_choices.max(1)).then_some(c)
    };
    paren
        .captures_iter(text)
        .find_map(|c| in_range(&c[1]))
        .or_else(|| bare.captures_iter(text).find_map(|c| in_range(&c[1])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub label: Option<String>,
}

fn finish(text: String, choices: Option<&[String]>) -> Answer {
    let label = choices
        .filter(|c| !c.is_empty())
        .and_then(|c| extract_label(&text, c.len()));
    Answer { text, label }
}

fn call(
    messages: Vec<Message>,
    backend: &dyn ChatBackend,
    ledger: &mut CostLedger,
    seed: Option<u64>,
) -> Result<String, GatewayError> {
    let request = ChatRequest::new(messages).with_seed(seed);
    let response = tracked_chat(backend, &request, CallKind::Answer, ledger)?;
    Ok(match (response.text, response.tool_call) {
        (Some(text), _) => text,
        (None, Some(call)) => call.args.to_string(),
        (None, None) => String::new(),
    })
}

/// Answers from the epistemic state alone.
pub fn answer_decoupled(
    query: &str,
    state: &EpistemicState,
    choices: Option<&[String]>,
    backend: &dyn ChatBackend,
    ledger: &mut CostLedger,
    seed: Option<u64>,
) -> Result<Answer, GatewayError> {
    let request = AnswerRequest::new(query, state, choices);
    let text = call(request.messages(), backend, ledger, seed)?;
    Ok(finish(text, choices))
}

/// Answers from the windowed trace (history-as-state ablation).
pub fn answer_react(
    query: &str,
    trace: &Trace,
    choices: Option<&[String]>,
    budget_tokens: usize,
    backend: &dyn ChatBackend,
    ledger: &mut CostLedger,
    seed: Option<u64>,
) -> Result<Answer, GatewayError> {
    let request = TraceAnswerRequest::new(query, trace, choices, budget_tokens);
    let text = call(request.messages(), backend, ledger, seed)?;
    Ok(finish(text, choices))
}
