use std::path::{Path, PathBuf};

use super::{
    audit_trajectory, run_episode, AuditReport, Backends, EpisodeError, EpisodeRun, Instance,
    TrajectoryLog,
};
use crate::document::DocumentEnv;
use crate::gateway::{ChatResponse, MockBackend};
use crate::policy::{ActionKind, ScriptedPolicy};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("trajectory has no header record")]
    MissingHeader,
    #[error("trajectory has no footer record")]
    MissingFooter,
    #[error("replay failed: {0}")]
    Episode(#[from] EpisodeError),
}

/// First point where a replay departs from the recording.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Divergence {
    pub t: Option<usize>,
    pub field: &'static str,
}

pub struct Replay {
    pub audit: AuditReport,
    pub divergence: Option<Divergence>,
    pub run: EpisodeRun,
}

impl Replay {
    pub fn is_faithful(&self) -> bool {
        self.audit.is_clean() && self.divergence.is_none()
    }
}

/// Re-executes a recorded episode offline. The logged actions drive a
/// scripted policy, the logged diagnoses and answer drive mock backends, and
/// the document tools run for real. `doc_root` resolves a relative document
/// path recorded in the header.
pub fn replay_trajectory(
    log: &TrajectoryLog,
    doc_root: Option<&Path>,
    env: &DocumentEnv,
) -> Result<Replay, ReplayError> {
    let header = log.header().ok_or(ReplayError::MissingHeader)?;
    let footer = log.footer().ok_or(ReplayError::MissingFooter)?;
    let mut doc_path = PathBuf::from(&header.doc_path);
    if let (Some(root), true) = (doc_root, doc_path.is_relative()) {
        doc_path = root.join(doc_path);
    }
    let instance = Instance {
        id: header.instance_id.clone(),
        query: header.query.clone(),
        doc_path,
        gold: None,
        choices: header.choices.clone(),
    };
    let script = log.steps().map(|s| s.action.clone()).collect();
    let diagnoses = log
        .steps()
        .filter(|s| s.action.kind() == ActionKind::Evaluate && !s.is_error)
        .filter_map(|s| s.diagnosis.as_ref())
        .map(|g| ChatResponse::text(g.to_json()))
        .collect();
    let mut policy = ScriptedPolicy::new(script);
    let diagnosis = MockBackend::new(diagnoses);
    let answer = MockBackend::texts([footer.answer.clone()]);
    let run = run_episode(
        &instance,
        &header.config,
        Backends {
            policy: &mut policy,
            diagnosis: &diagnosis,
            answer: &answer,
        },
        env,
    )?;
    Ok(Replay {
        audit: audit_trajectory(log),
        divergence: first_divergence(log, &run.log),
        run,
    })
}

fn first_divergence(recorded: &TrajectoryLog, replayed: &TrajectoryLog) -> Option<Divergence> {
    let mut a = recorded.steps();
    let mut b = replayed.steps();
    loop {
        match (a.next(), b.next()) {
            (None, None) => break,
            (Some(x), Some(y)) => {
                let field = if x.action != y.action {
                    "action"
                } else if x.observation != y.observation {
                    "observation"
                } else if x.state_id != y.state_id {
                    "state"
                } else if x.diagnosis != y.diagnosis {
                    "diagnosis"
                } else {
                    continue;
                };
                return Some(Divergence {
                    t: Some(x.t),
                    field,
                });
            }
            (Some(x), None) | (None, Some(x)) => {
                return Some(Divergence {
                    t: Some(x.t),
                    field: "length",
                })
            }
        }
    }
    let (x, y) = (recorded.footer()?, replayed.footer()?);
    if x.final_state != y.final_state {
        Some(Divergence {
            t: None,
            field: "final_state",
        })
    } else if x.terminated != y.terminated {
        Some(Divergence {
            t: None,
            field: "terminated",
        })
    } else {
        None
    }
}
