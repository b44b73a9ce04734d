//! The epistemic state: distilled statements, each tied to the document span
//! it came from.
//!
//! A state only ever grows. [`EpistemicState::commit`] returns a new value
//! with the prior units untouched; exact duplicates are dropped. Under
//! [`GroundingMode::Strict`] every new anchor must re-read to nonempty text.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::document::{Anchor, DocumentEnv, ReadOptions};

pub const EMPTY_STATE_SENTINEL: &str = "(epistemic state is empty: no units committed)";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingMode {
    #[default]
    Strict,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpistemicUnit {
    pub content: String,
    pub anchor: Anchor,
    pub committed_at: usize,
}

/// A statement/anchor pair waiting to be committed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitDraft {
    pub content: String,
    pub anchor: Anchor,
}

impl UnitDraft {
    pub fn new(content: impl Into<String>, anchor: Anchor) -> Self {
        Self {
            content: content.into(),
            anchor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("unit {index} is invalid: {reason}")]
    InvalidUnit { index: usize, reason: String },
    #[error("unit {index} is not grounded: anchor {anchor} does not resolve ({reason})")]
    UngroundedUnit {
        index: usize,
        anchor: Anchor,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpistemicState {
    units: Vec<EpistemicUnit>,
    state_id: String,
}

/// Persisted form of one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub index: usize,
    pub content: String,
    pub anchor: Anchor,
    pub committed_at: usize,
}

impl EpistemicState {
    pub fn new() -> Self {
        Self {
            units: Vec::new(),
            state_id: digest(EMPTY_STATE_SENTINEL),
        }
    }

    pub fn units(&self) -> &[EpistemicUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Content-derived identifier; equal states share it.
    pub fn state_id(&self) -> &str {
        &self.state_id
    }

    /// Commits `drafts` at `step`. All-or-nothing: if any draft is rejected the
    /// state is not changed.
    pub fn commit(
        &self,
        drafts: &[UnitDraft],
        step: usize,
        mode: GroundingMode,
        env: &DocumentEnv,
    ) -> Result<EpistemicState, StoreError> {
        if drafts.is_empty() {
            return Ok(self.clone());
        }
        if let Some(last) = self.units.last() {
            if step < last.committed_at {
                return Err(StoreError::InvalidUnit {
                    index: 0,
                    reason: format!(
                        "step {step} precedes the last commit at step {}",
                        last.committed_at
                    ),
                });
            }
        }
        let mut units = self.units.clone();
        for (index, draft) in drafts.iter().enumerate() {
            let content = draft.content.trim();
            if content.is_empty() {
                return Err(StoreError::InvalidUnit {
                    index,
                    reason: "content is empty".into(),
                });
            }
            if mode == GroundingMode::Strict {
                if let Err(reason) = resolve_nonempty(&draft.anchor, env) {
                    return Err(StoreError::UngroundedUnit {
                        index,
                        anchor: draft.anchor.clone(),
                        reason,
                    });
                }
            }
            let duplicate = units
                .iter()
                .any(|u| u.content == content && u.anchor == draft.anchor);
            if !duplicate {
                units.push(EpistemicUnit {
                    content: content.to_string(),
                    anchor: draft.anchor.clone(),
                    committed_at: step,
                });
            }
        }
        Ok(Self::from_units(units))
    }

    fn from_units(units: Vec<EpistemicUnit>) -> Self {
        let mut state = Self {
            units,
            state_id: String::new(),
        };
        state.state_id = digest(&state.render());
        state
    }

    /// Deterministic text form used in prompts and observations.
    pub fn render(&self) -> String {
        if self.units.is_empty() {
            return EMPTY_STATE_SENTINEL.to_string();
        }
        let mut out = format!("Epistemic state ({} units):\n", self.units.len());
        for (i, unit) in self.units.iter().enumerate() {
            out.push_str(&format!(
                "[e{}] {}\n     anchor: {} (step {})\n",
                i + 1,
                unit.content,
                unit.anchor,
                unit.committed_at
            ));
        }
        out
    }

    pub fn records(&self) -> Vec<UnitRecord> {
        self.units
            .iter()
            .enumerate()
            .map(|(i, u)| UnitRecord {
                index: i + 1,
                content: u.content.clone(),
                anchor: u.anchor.clone(),
                committed_at: u.committed_at,
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.records()).expect("records serialize")
    }

    pub fn from_records(records: Vec<UnitRecord>) -> Self {
        Self::from_units(
            records
                .into_iter()
                .map(|r| EpistemicUnit {
                    content: r.content,
                    anchor: r.anchor,
                    committed_at: r.committed_at,
                })
                .collect(),
        )
    }

    /// True if `self` is `earlier` with zero or more units appended.
    pub fn extends(&self, earlier: &EpistemicState) -> bool {
        self.units.len() >= earlier.units.len()
            && self.units[..earlier.units.len()] == earlier.units[..]
    }
}

impl Default for EpistemicState {
    fn default() -> Self {
        Self::new()
    }
}

impl Serialize for EpistemicState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.records().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EpistemicState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Self::from_records(Vec::<UnitRecord>::deserialize(
            deserializer,
        )?))
    }
}

pub(crate) fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn resolve_nonempty(anchor: &Anchor, env: &DocumentEnv) -> Result<(), String> {
    let obs = env
        .read(anchor, &ReadOptions::default())
        .map_err(|e| e.to_string())?;
    if obs.text.trim().is_empty() {
        return Err("anchored span is blank".into());
    }
    Ok(())
}

/// True iff the unit's anchor reads back nonempty text.
pub fn validate_grounding(unit: &EpistemicUnit, env: &DocumentEnv) -> bool {
    resolve_nonempty(&unit.anchor, env).is_ok()
}
