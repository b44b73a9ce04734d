use crate::document::estimate_tokens;
use crate::gateway::{CallKind, CostLedger, Usage};
use crate::policy::{Action, AnchorRef, Policy, PolicyError, PolicyInput};

/// Rule-based policy for single-fact lookups: grep for a key phrase, read the
/// first hit, commit what was read, then evaluate. Repeats the cycle if the
/// diagnosis asks for more. Decisions are billed like a scripted policy.
#[derive(Debug, Clone)]
pub struct NeedlePolicy {
    pattern: String,
    case_insensitive: bool,
}

impl NeedlePolicy {
    pub fn new(pattern: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            case_insensitive: false,
        }
    }

    pub fn case_insensitive(mut self, yes: bool) -> Self {
        self.case_insensitive = yes;
        self
    }

    fn search(&self) -> Action {
        match Action::grep(self.pattern.clone()) {
            Action::Grep {
                pattern,
                context,
                scope,
                source,
                ..
            } => Action::Grep {
                pattern,
                context,
                scope,
                case_insensitive: self.case_insensitive,
                max_matches: Some(1),
                source,
            },
            other => other,
        }
    }

    fn next_action(&self, input: &PolicyInput<'_>) -> Action {
        let Some(last) = input.trace.last() else {
            return self.search();
        };
        match &last.action {
            Action::Grep { .. } => match first_grep_anchor(&last.observation) {
                Some(anchor) => Action::Read {
                    anchor: Some(anchor),
                    offset: None,
                    limit: None,
                },
                None => Action::Evaluate,
            },
            Action::Read { .. } => match parse_read(&last.observation) {
                Some((anchor, text)) => Action::update(text, anchor),
                None => Action::Evaluate,
            },
            Action::Update { .. } => Action::Evaluate,
            _ => self.search(),
        }
    }
}

/// Anchor of the first match line (`doc:s-e → text`) in a grep observation.
fn first_grep_anchor(observation: &str) -> Option<AnchorRef> {
    observation
        .lines()
        .find_map(|l| l.split_once(" → "))
        .and_then(|(anchor, _)| anchor.parse().ok())
}

/// Anchor and plain text of a read observation (`[anchor]` then `n: line`).
fn parse_read(observation: &str) -> Option<(AnchorRef, String)> {
    let mut lines = observation.lines();
    let anchor = lines
        .next()?
        .strip_prefix('[')?
        .strip_suffix(']')?
        .parse()
        .ok()?;
    let text: Vec<&str> = lines
        .take_while(|l| !l.starts_with("[truncated"))
        .map(|l| l.split_once(": ").map_or(l, |(_, rest)| rest))
        .collect();
    let text = text.join(" ").trim().to_string();
    (!text.is_empty()).then_some((anchor, text))
}

impl Policy for NeedlePolicy {
    fn decide(
        &mut self,
        input: &PolicyInput<'_>,
        ledger: &mut CostLedger,
    ) -> Result<Action, PolicyError> {
        let action = self.next_action(input);
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
