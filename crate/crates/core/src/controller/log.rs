use serde::{Deserialize, Serialize};

use super::{EpisodeConfig, Mode, Termination};
use crate::diagnosis::GapDiagnosis;
use crate::epistemic::EpistemicState;
use crate::gateway::Usage;
use crate::policy::{Action, ActionClass, ActionKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub instance_id: String,
    pub query: String,
    pub doc_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub mode: Mode,
    pub config: EpisodeConfig,
}

/// One executed step plus digests of the state and diagnosis right after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: Action,
    pub observation: String,
    pub usage: Usage,
    pub wall_ms: u64,
    pub state_id: String,
    pub state_units: usize,
    #[serde(default)]
    pub diagnosis: Option<GapDiagnosis>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FooterRecord {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_label: Option<String>,
    pub terminated: Termination,
    pub steps_used: usize,
    pub final_state: EpistemicState,
    pub cost_k: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header(HeaderRecord),
    Step(StepRecord),
    Footer(FooterRecord),
}

/// A whole episode as JSONL: header, steps, footer. Step records are valid
/// replay script lines.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn header(&self) -> Option<&HeaderRecord> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Header(h) => Some(h),
            _ => None,
        })
    }

    pub fn footer(&self) -> Option<&FooterRecord> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Footer(f) => Some(f),
            _ => None,
        })
    }

    /// One JSON object per line. Without timing, wall-clock fields are zeroed
    /// so that deterministic runs serialize to identical bytes.
    pub fn to_jsonl(&self, include_timing: bool) -> String {
        let mut out = String::new();
        for record in &self.records {
            let mut record = record.clone();
            if !include_timing {
                match &mut record {
                    LogRecord::Step(s) => s.wall_ms = 0,
                    LogRecord::Footer(f) => f.wall_ms = 0,
                    LogRecord::Header(_) => {}
                }
            }
            out.push_str(&serde_json::to_string(&record).expect("log record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub t: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.t {
            Some(t) => write!(f, "step {t}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct AuditReport {
    pub steps_checked: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a trajectory against the per-branch mutation rules: foraging and
/// other non-state actions change neither the state nor the diagnosis,
/// Update changes only the state (and only by growing it), Evaluate changes
/// only the diagnosis. Also checks step numbering and the footer.
pub fn audit_trajectory(log: &TrajectoryLog) -> AuditReport {
    let mut report = AuditReport::default();
    let mut violation = |t: Option<usize>, message: String| {
        report.violations.push(Violation { t, message });
    };
    let initial = EpistemicState::new();
    let mut state_id = initial.state_id().to_string();
    let mut units = 0usize;
    let mut diagnosis: Option<GapDiagnosis> = None;
    let mut expected_t = 0usize;
    for step in log.steps() {
        if step.t != expected_t {
            violation(Some(step.t), format!("expected step index {expected_t}"));
        }
        expected_t = step.t + 1;
        let state_changed = step.state_id != state_id || step.state_units != units;
        let diagnosis_changed = step.diagnosis != diagnosis;
        let kind = step.action.kind();
        match (kind.class(), kind) {
            (_, ActionKind::Update) => {
                if diagnosis_changed {
                    violation(Some(step.t), "Update changed the diagnosis".into());
                }
                if step.state_units < units {
                    violation(Some(step.t), "Update shrank the state".into());
                }
            }
            (_, ActionKind::Evaluate) => {
                if state_changed {
                    violation(Some(step.t), "Evaluate changed the state".into());
                }
            }
            (class, _) => {
                if state_changed || diagnosis_changed {
                    let what = if class == ActionClass::Forage {
                        "foraging"
                    } else {
                        "non-state"
                    };
                    violation(
                        Some(step.t),
                        format!("{what} action {kind} changed the state or the diagnosis"),
                    );
                }
            }
        }
        state_id = step.state_id.clone();
        units = step.state_units;
        diagnosis = step.diagnosis.clone();
        report.steps_checked += 1;
    }
    if let Some(footer) = log.footer() {
        if footer.steps_used != report.steps_checked {
            violation(
                None,
                format!(
                    "footer reports {} steps but the log has {}",
                    footer.steps_used, report.steps_checked
                ),
            );
        }
        if footer.final_state.state_id() != state_id && footer.terminated != Termination::SinglePass
        {
            violation(
                None,
                "final state differs from the last step's state".into(),
            );
        }
        let sufficient = diagnosis.as_ref().is_some_and(|g| g.is_sufficient);
        if (footer.terminated == Termination::Sufficient) != sufficient
            && footer.terminated != Termination::SinglePass
        {
            violation(
                None,
                format!(
                    "terminated={:?} but the last diagnosis sufficiency is {sufficient}",
                    footer.terminated
                ),
            );
        }
    }
    report
}
