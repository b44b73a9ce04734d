use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{episode_cost, middle_truncate};
use crate::controller::{extract_label, option_label, EpisodeResult, Instance, Termination};
use crate::document::{DocumentEnv, DocumentError, Tokenizer};
use crate::epistemic::EpistemicState;
use crate::gateway::{
    tracked_chat, CallKind, ChatBackend, ChatRequest, CostLedger, GatewayError, Message,
};

const BASELINE_SYSTEM_PROMPT: &str = "Answer the question about the document below. \
If options are listed, start the answer with the option label in parentheses, e.g. (B).";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Context limit of the model, in tokens of `tokenizer`.
    pub max_context: usize,
    pub tokenizer: Tokenizer,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            max_context: 128_000,
            tokenizer: Tokenizer::Words,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("document unavailable: {0}")]
    Document(#[from] DocumentError),
    #[error("baseline call failed: {0}")]
    Backend(#[from] GatewayError),
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub result: EpisodeResult,
    pub request: ChatRequest,
    pub ledger: CostLedger,
    /// Document tokens kept after truncation, and before.
    pub kept_tokens: usize,
    pub document_tokens: usize,
}

fn user_message(document: &str, instance: &Instance) -> String {
    let mut out = format!("Document:\n{document}\n\nQuestion:\n{}\n", instance.query);
    if let Some(choices) = instance.choices.as_deref().filter(|c| !c.is_empty()) {
        out.push_str("Options:\n");
        for (i, choice) in choices.iter().enumerate() {
            out.push_str(&format!("({}) {choice}\n", option_label(i)));
        }
    }
    out
}

/// The document as the baseline sees it: middle-truncated to what fits in
/// `budget` tokens. Returns the text and the kept and original token counts.
pub fn truncate_document(
    text: &str,
    budget: usize,
    tokenizer: Tokenizer,
) -> (String, usize, usize) {
    let tokens = tokenizer.tokenize(text);
    let kept = middle_truncate(&tokens, budget);
    (kept.concat(), kept.len(), tokens.len())
}

/// Answers in one call from the whole document, middle-truncated to the
/// context limit minus the prompt around it.
pub fn run_full_context_baseline(
    instance: &Instance,
    config: &BaselineConfig,
    backend: &dyn ChatBackend,
    env: &DocumentEnv,
) -> Result<BaselineRun, BaselineError> {
    let started = Instant::now();
    let id = env.register_document(&instance.doc_path)?.id;
    let text = env.text(&id)?;
    let overhead = config.tokenizer.count(BASELINE_SYSTEM_PROMPT)
        + config.tokenizer.count(&user_message("", instance));
    let budget = config.max_context.saturating_sub(overhead);
    let (document, kept_tokens, document_tokens) =
        truncate_document(&text, budget, config.tokenizer);
    let request = ChatRequest::new(vec![
        Message::system(BASELINE_SYSTEM_PROMPT),
        Message::user(user_message(&document, instance)),
    ])
    .with_seed((config.seed != 0).then_some(config.seed));
    let mut ledger = CostLedger::new();
    let response = tracked_chat(backend, &request, CallKind::Baseline, &mut ledger)?;
    let answer = response.text.unwrap_or_default();
    let answer_label = instance
        .choices
        .as_deref()
        .filter(|c| !c.is_empty())
        .and_then(|c| extract_label(&answer, c.len()));
    let result = EpisodeResult {
        answer,
        answer_label,
        steps_used: 0,
        terminated: Termination::SinglePass,
        final_state: EpistemicState::new(),
        trace_ref: None,
        cost_k: episode_cost(&ledger),
        wall_ms: started.elapsed().as_millis() as u64,
    };
    Ok(BaselineRun {
        result,
        request,
        ledger,
        kept_tokens,
        document_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;
    use std::io::Write;

    fn instance(dir: &tempfile::TempDir, text: &str) -> Instance {
        let path = dir.path().join("doc.txt");
        std::fs::File::create(&path)
            .unwrap()
            .write_all(text.as_bytes())
            .unwrap();
        Instance {
            id: "i".into(),
            query: "What?".into(),
            doc_path: path,
            gold: None,
            choices: None,
        }
    }

    #[test]
    fn short_document_is_verbatim_and_billed_once() {
        let dir = tempfile::tempdir().unwrap();
        let text = "alpha beta\ngamma delta\n";
        let inst = instance(&dir, text);
        let mock = MockBackend::texts(["gamma"]);
        let run = run_full_context_baseline(
            &inst,
            &BaselineConfig::default(),
            &mock,
            &DocumentEnv::new(),
        )
        .unwrap();
        assert!(run.request.messages[1].content.contains(text));
        assert_eq!(run.ledger.len(), 1);
        assert_eq!(run.ledger.entries()[0].call_kind, CallKind::Baseline);
        assert_eq!(run.result.terminated, Termination::SinglePass);
        assert_eq!(run.kept_tokens, run.document_tokens);
    }

    #[test]
    fn long_document_keeps_both_ends() {
        let dir = tempfile::tempdir().unwrap();
        let text: String = (0..400).map(|i| format!("w{i} ")).collect();
        let inst = instance(&dir, &text);
        let config = BaselineConfig {
            max_context: 100,
            tokenizer: Tokenizer::Whitespace,
            seed: 0,
        };
        let mock = MockBackend::texts(["x"]);
        let run = run_full_context_baseline(&inst, &config, &mock, &DocumentEnv::new()).unwrap();
        let content = &run.request.messages[1].content;
        assert!(content.contains("w0 ") && content.contains("w399"));
        assert!(!content.contains(" w200 "));
        assert!(run.kept_tokens < 100);
    }
}
