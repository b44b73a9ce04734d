//! Gap diagnosis: a schema-fixed model call that judges whether the
//! epistemic state suffices for the query and, if not, what is missing.
//!
//! The prompt is built from the query and the rendered state only. The
//! acting trace never reaches this call.

use serde::{Deserialize, Serialize};

use crate::epistemic::EpistemicState;
use crate::gateway::{
    tracked_chat, CallKind, ChatBackend, ChatRequest, CostLedger, GatewayError, Message,
};

/// Re-asks after an unparsable reply before giving up.
pub const PARSE_RETRIES: usize = 2;

const EMPTY_STATE_GAP: &str = "no evidence has been collected from the document yet";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDiagnosis {
    pub is_sufficient: bool,
    pub missing_info: Vec<String>,
    pub reasoning: String,
    pub confidence: f64,
}

impl GapDiagnosis {
    pub fn sufficient(reasoning: impl Into<String>, confidence: f64) -> Self {
        Self {
            is_sufficient: true,
            missing_info: Vec::new(),
            reasoning: reasoning.into(),
            confidence,
        }
    }

    pub fn insufficient<I, S>(missing: I, reasoning: impl Into<String>, confidence: f64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            is_sufficient: false,
            missing_info: missing.into_iter().map(Into::into).collect(),
            reasoning: reasoning.into(),
            confidence,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.is_sufficient && !self.missing_info.is_empty() {
            return Err("is_sufficient is true but missing_info is not empty".into());
        }
        if !self.is_sufficient && self.missing_info.is_empty() {
            return Err("is_sufficient is false but missing_info is empty".into());
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} is outside [0, 1]", self.confidence));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("diagnosis serializes")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosisError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("diagnosis does not match the schema ({reason}): {raw}")]
    SchemaViolation { raw: String, reason: String },
}

#[derive(Deserialize)]
struct WireDiagnosis {
    is_sufficient: bool,
    missing_info: Vec<String>,
    reasoning: String,
    confidence: f64,
    #[serde(default)]
    no_evidence_needed: bool,
}

fn strip_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn parse_wire(raw: &str) -> Result<(GapDiagnosis, bool), DiagnosisError> {
    let violation = |reason: String| DiagnosisError::SchemaViolation {
        raw: raw.to_string(),
        reason,
    };
    let wire: WireDiagnosis =
        serde_json::from_str(strip_fences(raw)).map_err(|e| violation(e.to_string()))?;
    let diagnosis = GapDiagnosis {
        is_sufficient: wire.is_sufficient,
        missing_info: wire.missing_info,
        reasoning: wire.reasoning,
        confidence: wire.confidence,
    };
    diagnosis.check().map_err(violation)?;
    Ok((diagnosis, wire.no_evidence_needed))
}

/// Strict parse of the diagnosis schema. Unknown fields are ignored; a
/// surrounding markdown code fence is tolerated.
pub fn parse_diagnosis(raw: &str) -> Result<GapDiagnosis, DiagnosisError> {
    parse_wire(raw).map(|(d, _)| d)
}

/// Whether a diagnosis ends the foraging loop. No diagnosis yet is not
/// terminal.
pub fn is_terminal(diagnosis: Option<&GapDiagnosis>) -> bool {
    diagnosis.is_some_and(|g| g.is_sufficient)
}

const SYSTEM_PROMPT: &str = "You audit collected evidence for a question about a long document. \
Decide whether the evidence below is sufficient to answer the question. \
Reply with a single JSON object and nothing else, with exactly these fields:\n\
{\"is_sufficient\": bool, \"missing_info\": [string], \"reasoning\": string, \"confidence\": number}\n\
Rules: if is_sufficient is true, missing_info must be []; if false, list each missing piece of \
information as one short string. confidence is between 0 and 1. If the question can be answered \
without any document evidence, also set \"no_evidence_needed\": true.";

/// The messages sent for a diagnosis: the query and the rendered state,
/// nothing else.
pub fn diagnosis_messages(query: &str, state: &EpistemicState) -> Vec<Message> {
    vec![
        Message::system(SYSTEM_PROMPT),
        Message::user(format!(
            "Question:\n{query}\n\nCollected evidence:\n{}",
            state.render()
        )),
    ]
}

/// Runs one diagnosis, re-asking up to [`PARSE_RETRIES`] times on output that
/// does not fit the schema. Every call is recorded in `ledger`.
pub fn diagnose(
    query: &str,
    state: &EpistemicState,
    backend: &dyn ChatBackend,
    ledger: &mut CostLedger,
    seed: Option<u64>,
) -> Result<GapDiagnosis, DiagnosisError> {
    if query.trim().is_empty() {
        return Err(DiagnosisError::EmptyQuery);
    }
    let mut messages = diagnosis_messages(query, state);
    let mut attempt = 0;
    loop {
        let request = ChatRequest::new(messages.clone()).with_seed(seed);
        let response = tracked_chat(backend, &request, CallKind::Evaluate, ledger)?;
        let raw = match (&response.text, &response.tool_call) {
            (Some(text), _) => text.clone(),
            (None, Some(call)) => call.args.to_string(),
            (None, None) => String::new(),
        };
        match parse_wire(&raw) {
            Ok((diagnosis, no_evidence_needed)) => {
                return Ok(coerce_empty_state(diagnosis, state, no_evidence_needed));
            }
            Err(DiagnosisError::SchemaViolation { reason, .. }) if attempt < PARSE_RETRIES => {
                attempt += 1;
                log::warn!("diagnosis reply rejected ({reason}); re-asking");
                messages.push(Message::assistant(raw));
                messages.push(Message::user(format!(
                    "That reply was rejected: {reason}. Reply again with only the JSON object."
                )));
            }
            Err(err) => return Err(err),
        }
    }
}

fn coerce_empty_state(
    diagnosis: GapDiagnosis,
    state: &EpistemicState,
    no_evidence_needed: bool,
) -> GapDiagnosis {
    if !state.is_empty() || !diagnosis.is_sufficient || no_evidence_needed {
        return diagnosis;
    }
    GapDiagnosis {
        is_sufficient: false,
        missing_info: vec![EMPTY_STATE_GAP.to_string()],
        reasoning: format!("overridden (state is empty): {}", diagnosis.reasoning),
        confidence: diagnosis.confidence,
    }
}
