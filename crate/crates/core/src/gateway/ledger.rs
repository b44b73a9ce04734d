use serde::{Deserialize, Serialize};

use super::{estimate_usage, ChatBackend, ChatRequest, ChatResponse, GatewayError, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Policy,
    Evaluate,
    Answer,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub call_kind: CallKind,
    pub usage: Usage,
}

/// Append-only per-episode record of model calls.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, call_kind: CallKind, usage: Usage) {
        self.entries.push(LedgerEntry { call_kind, usage });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> Usage {
        self.entries
            .iter()
            .fold(Usage::default(), |acc, e| acc + e.usage)
    }

    /// Usage of the entries recorded since `mark` (an earlier `len()`).
    pub fn since(&self, mark: usize) -> Usage {
        self.entries[mark..]
            .iter()
            .fold(Usage::default(), |acc, e| acc + e.usage)
    }
}

/// Runs one chat call and records its usage. Failed calls that reached the
/// backend are billed for their input side only.
pub fn tracked_chat(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    kind: CallKind,
    ledger: &mut CostLedger,
) -> Result<ChatResponse, GatewayError> {
    match backend.chat(request) {
        Ok(response) => {
            ledger.record(kind, response.usage);
            Ok(response)
        }
        Err(err) => {
            if err.reached_backend() {
                ledger.record(kind, estimate_usage(request, None));
            }
            Err(err)
        }
    }
}
