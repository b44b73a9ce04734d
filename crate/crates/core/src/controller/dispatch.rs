use std::path::Path;

use crate::diagnosis::{diagnose, DiagnosisError, GapDiagnosis};
use crate::document::{
    Anchor, DocumentEnv, DocumentError, DocumentId, GrepRequest, GrepResult, LineRange,
    ReadOptions, ScanRequest, DEFAULT_GREP_MAX_MATCHES,
};
use crate::epistemic::{EpistemicState, GroundingMode, UnitDraft};
use crate::gateway::{ChatBackend, CostLedger, GatewayError};
use crate::policy::{Action, TodoList};

/// Lines returned by an offset-form Read without a limit.
pub const DEFAULT_READ_LIMIT: usize = 100;

/// Fixed inputs of the dispatcher for one episode.
pub struct DispatchContext<'a> {
    pub env: &'a DocumentEnv,
    pub doc: &'a DocumentId,
    pub query: &'a str,
    pub diagnosis_backend: &'a dyn ChatBackend,
    pub grounding: GroundingMode,
    pub observation_budget: usize,
    pub seed: Option<u64>,
}

/// What one step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub observation: String,
    pub state: EpistemicState,
    pub diagnosis: Option<GapDiagnosis>,
    /// The observation reports a failed tool call.
    pub is_error: bool,
}

pub fn error_observation(message: impl std::fmt::Display) -> String {
    format!("Error: {message}")
}

fn resolve_source(
    ctx: &DispatchContext<'_>,
    source: Option<&str>,
) -> Result<DocumentId, DocumentError> {
    match source {
        Some(s) => ctx.env.resolve(s),
        None => Ok(ctx.doc.clone()),
    }
}

pub fn render_grep(result: &GrepResult) -> String {
    if result.snippets.is_empty() {
        return "No matches found.".into();
    }
    let mut out = String::new();
    for snippet in &result.snippets {
        let line = snippet.anchor.start_line;
        for (k, text) in snippet.context_before.iter().enumerate() {
            let n = line - snippet.context_before.len() + k;
            out.push_str(&format!("  {n}: {text}\n"));
        }
        out.push_str(&format!("{} → {}\n", snippet.anchor, snippet.line));
        for (k, text) in snippet.context_after.iter().enumerate() {
            out.push_str(&format!("  {}: {text}\n", line + 1 + k));
        }
    }
    if result.truncated {
        out.push_str("[more matches omitted; narrow the pattern or the scope]\n");
    }
    out
}

fn render_read(text: &str, anchor: &Anchor, truncated: bool) -> String {
    let mut out = format!("[{anchor}]\n");
    for (k, line) in text.split('\n').enumerate() {
        out.push_str(&format!("{}: {line}\n", anchor.start_line + k));
    }
    if truncated {
        out.push_str(&format!(
            "[truncated; continue at line {}]\n",
            anchor.end_line + 1
        ));
    }
    out
}

fn forage(action: &Action, ctx: &DispatchContext<'_>) -> Result<String, DocumentError> {
    Ok(match action {
        Action::Glob { pattern, scope } => {
            let ids = ctx.env.glob(pattern, scope.as_deref().map(Path::new))?;
            if ids.is_empty() {
                "No matching sources.".into()
            } else {
                ids.iter().map(|id| format!("{id}\n")).collect()
            }
        }
        Action::Grep {
            pattern,
            context,
            scope,
            case_insensitive,
            max_matches,
            source,
        } => {
            let doc = resolve_source(ctx, source.as_deref())?;
            let mut request = GrepRequest::new(pattern.clone())
                .case_insensitive(*case_insensitive)
                .context(context.unwrap_or(0))
                .max_matches(max_matches.unwrap_or(DEFAULT_GREP_MAX_MATCHES))
                .budget(ctx.observation_budget);
            if let Some(scope) = scope {
                request = request.scope(*scope);
            }
            render_grep(&ctx.env.grep(&doc, &request)?)
        }
        Action::Read {
            anchor,
            offset,
            limit,
        } => {
            let options = ReadOptions {
                limit: *limit,
                observation_budget: ctx.observation_budget,
            };
            let anchor = match (anchor, offset) {
                (Some(a), _) => a.resolve(ctx.env, ctx.doc)?,
                (None, Some(offset)) => {
                    let handle = ctx.env.handle(ctx.doc)?;
                    let end = (offset + limit.unwrap_or(DEFAULT_READ_LIMIT) - 1)
                        .min(handle.line_count)
                        .max(*offset);
                    Anchor::new(ctx.doc.clone(), *offset, end).with_revision(handle.revision)
                }
                (None, None) => unreachable!("parse_action requires anchor or offset"),
            };
            let obs = ctx.env.read(&anchor, &options)?;
            render_read(&obs.text, &obs.anchor, obs.truncated)
        }
        Action::Scan {
            pattern,
            scope,
            source,
        } => {
            let doc = resolve_source(ctx, source.as_deref())?;
            let mut request = ScanRequest::new(pattern.clone());
            if let Some(scope) = scope {
                request = request.scope(*scope);
            }
            let anchors = ctx.env.scan(&doc, &request)?;
            if anchors.is_empty() {
                "No matches found.".into()
            } else {
                anchors.iter().map(|a| format!("{a}\n")).collect()
            }
        }
        Action::GetFileInfo { source } => {
            let doc = ctx.env.resolve(source)?;
            let info = ctx.env.get_file_info(&doc)?;
            format!(
                "file_size: {}KB, byte_size: {}, estimated_tokens: {}, line_count: {}, needs_normalization: {}",
                info.byte_size.div_ceil(1024),
                info.byte_size,
                info.estimated_tokens,
                info.line_count,
                info.needs_normalization
            )
        }
        _ => unreachable!("not a foraging action"),
    })
}

/// Failures that end the episode rather than becoming observations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DispatchError {
    #[error("diagnosis backend failed: {0}")]
    DiagnosisBackend(#[from] GatewayError),
}

/// Executes one action. Foraging leaves the state and diagnosis untouched;
/// Update only changes the state; Evaluate only changes the diagnosis;
/// everything else changes neither. Tool failures become error
/// observations.
pub fn dispatch_action(
    action: &Action,
    ctx: &DispatchContext<'_>,
    step: usize,
    state: &EpistemicState,
    diagnosis: Option<&GapDiagnosis>,
    todo: &mut TodoList,
    ledger: &mut CostLedger,
) -> Result<Outcome, DispatchError> {
    let unchanged = |observation: String, is_error: bool| Outcome {
        observation,
        state: state.clone(),
        diagnosis: diagnosis.cloned(),
        is_error,
    };
    let outcome = match action {
        Action::Glob { .. }
        | Action::Grep { .. }
        | Action::Read { .. }
        | Action::Scan { .. }
        | Action::GetFileInfo { .. } => match forage(action, ctx) {
            Ok(obs) => unchanged(obs, false),
            Err(err) => unchanged(error_observation(err), true),
        },
        Action::Update { units } => {
            let drafts: Result<Vec<UnitDraft>, DocumentError> = units
                .iter()
                .map(|u| {
                    Ok(UnitDraft::new(
                        u.content.clone(),
                        resolve_lenient(&u.anchor, ctx)?,
                    ))
                })
                .collect();
            match drafts.map_err(|e| e.to_string()).and_then(|drafts| {
                state
                    .commit(&drafts, step, ctx.grounding, ctx.env)
                    .map_err(|e| e.to_string())
            }) {
                Ok(next) => Outcome {
                    observation: next.render(),
                    state: next,
                    diagnosis: diagnosis.cloned(),
                    is_error: false,
                },
                Err(message) => unchanged(error_observation(message), true),
            }
        }
        Action::View { .. } => unchanged(state.render(), false),
        Action::Evaluate => {
            match diagnose(ctx.query, state, ctx.diagnosis_backend, ledger, ctx.seed) {
                Ok(g) => Outcome {
                    observation: g.to_json(),
                    state: state.clone(),
                    diagnosis: Some(g),
                    is_error: false,
                },
                Err(DiagnosisError::Backend(err)) => return Err(err.into()),
                Err(err) => unchanged(error_observation(err), true),
            }
        }
        Action::CountTokens { text, model } => match ctx.env.count_tokens(text, model.as_deref()) {
            Ok(n) => unchanged(format!("Token count: {n}"), false),
            Err(err) => unchanged(error_observation(err), true),
        },
        Action::TodoWrite { todos } => {
            todo.replace(todos.clone());
            unchanged(todo.render(), false)
        }
        Action::NormalizeDocument { source, max_length } => {
            let result = ctx
                .env
                .resolve(source)
                .and_then(|id| Ok((ctx.env.normalize_document(&id, *max_length)?, id)));
            match result {
                Ok((info, id)) => {
                    let handle = ctx.env.handle(&id).ok();
                    unchanged(
                        format!(
                            "Normalized {id}: line_count: {}, needs_normalization: {}, revision: {}",
                            info.line_count,
                            info.needs_normalization,
                            handle.map_or(0, |h| h.revision)
                        ),
                        false,
                    )
                }
                Err(err) => unchanged(error_observation(err), true),
            }
        }
    };
    Ok(outcome)
}

/// Resolves an Update anchor. Under disabled grounding an unknown document
/// still yields an anchor so that the unit can be committed unchecked.
fn resolve_lenient(
    anchor: &crate::policy::AnchorRef,
    ctx: &DispatchContext<'_>,
) -> Result<Anchor, DocumentError> {
    match anchor.resolve(ctx.env, ctx.doc) {
        Ok(a) => Ok(a),
        Err(_) if ctx.grounding == GroundingMode::Off => {
            let range: LineRange = anchor.range();
            Ok(Anchor::new(ctx.doc.clone(), range.start, range.end))
        }
        Err(e) => Err(e),
    }
}
