use serde::{Deserialize, Serialize};

use super::action::{Action, TodoItem};
use crate::gateway::Usage;

/// One executed action and what it returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub action: Action,
    pub observation: String,
    pub usage: Usage,
    pub wall_ms: u64,
}

/// Append-only action/observation history of an episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    steps: Vec<Step>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a step, numbering it after the last one.
    pub fn push(
        &mut self,
        action: Action,
        observation: String,
        usage: Usage,
        wall_ms: u64,
    ) -> &Step {
        let index = self.steps.len();
        self.steps.push(Step {
            index,
            action,
            observation,
            usage,
            wall_ms,
        });
        &self.steps[index]
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&Step> {
        self.steps.last()
    }

    /// True if `earlier` is a prefix of `self`.
    pub fn extends(&self, earlier: &Trace) -> bool {
        self.steps.len() >= earlier.steps.len()
            && self.steps[..earlier.steps.len()] == earlier.steps[..]
    }
}

/// The plan kept by TodoWrite. Lives beside the trace, never in the
/// epistemic state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TodoList {
    pub items: Vec<TodoItem>,
}

impl TodoList {
    pub fn replace(&mut self, items: Vec<TodoItem>) {
        self.items = items;
    }

    pub fn render(&self) -> String {
        if self.items.is_empty() {
            return "Updated todo list (empty)".into();
        }
        let mut out = String::from("Updated todo list:");
        for item in &self.items {
            let mark = match item.status {
                super::action::TodoStatus::Pending => " ",
                super::action::TodoStatus::InProgress => "~",
                super::action::TodoStatus::Done => "x",
            };
            out.push_str(&format!("\n[{mark}] {}", item.content));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_contiguous_and_prefix_holds() {
        let mut trace = Trace::new();
        trace.push(Action::Evaluate, "a".into(), Usage::default(), 0);
        let snapshot = trace.clone();
        trace.push(Action::grep("x"), "b".into(), Usage::default(), 1);
        assert!(trace.extends(&snapshot));
        assert!(!snapshot.extends(&trace));
        let idx: Vec<_> = trace.steps().iter().map(|s| s.index).collect();
        assert_eq!(idx, vec![0, 1]);
    }
}
