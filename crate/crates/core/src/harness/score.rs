use crate::controller::{extract_label, option_label, Instance};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("instance `{0}` has no gold answer")]
    Unscorable(String),
}

/// Lowercases, turns punctuation into spaces and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().next().unwrap_or(c)
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// The option label a gold answer denotes: either the label itself or the
/// text of one of the options.
fn gold_label(gold: &str, choices: &[String]) -> Option<String> {
    let norm = normalize_answer(gold);
    if norm.len() == 1 {
        let label = norm.to_ascii_uppercase();
        let idx = label.as_bytes()[0].wrapping_sub(b'A') as usize;
        if idx < choices.len() {
            return Some(label);
        }
    }
    choices
        .iter()
        .position(|c| normalize_answer(c) == norm)
        .map(option_label)
}

/// Whether `answer` matches the instance's gold answer.
///
/// Multiple-choice instances compare option labels; an answer without a
/// recognizable label falls back to normalized matching against the gold
/// answer and the gold option's text. Free-form instances use normalized
/// exact match.
pub fn score(answer: &str, instance: &Instance) -> Result<bool, ScoreError> {
    let gold = instance
        .gold
        .as_deref()
        .filter(|g| !g.trim().is_empty())
        .ok_or_else(|| ScoreError::Unscorable(instance.id.clone()))?;
    let norm = normalize_answer(answer);
    let choices = instance.choices.as_deref().unwrap_or(&[]);
    if choices.is_empty() {
        return Ok(norm == normalize_answer(gold));
    }
    let Some(gold_label) = gold_label(gold, choices) else {
        return Ok(norm == normalize_answer(gold));
    };
    if let Some(label) = extract_label(answer, choices.len()) {
        return Ok(label == gold_label);
    }
    let gold_idx = (gold_label.as_bytes()[0] - b'A') as usize;
    Ok(norm == normalize_answer(&gold_label) || norm == normalize_answer(&choices[gold_idx]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc(gold: &str) -> Instance {
        Instance {
            id: "x".into(),
            query: "q".into(),
            doc_path: "d".into(),
            gold: Some(gold.into()),
            choices: Some(vec![
                "heart rate".into(),
                "typing speed".into(),
                "facial expression, music, and screen content".into(),
                "room temperature".into(),
            ]),
        }
    }

    #[test]
    fn multiple_choice() {
        assert_eq!(
            score("(C) facial expression, music, and screen content", &mc("C")),
            Ok(true)
        );
        assert_eq!(score("c", &mc("C")), Ok(true));
        assert_eq!(score("B", &mc("C")), Ok(false));
        assert_eq!(
            score("facial expression music and screen content", &mc("C")),
            Ok(true)
        );
        assert_eq!(
            score("(C)", &mc("facial expression, music, and screen content")),
            Ok(true)
        );
    }

    #[test]
    fn free_form_and_unscorable() {
        let mut inst = mc("Paris.");
        inst.choices = None;
        assert_eq!(score("  paris ", &inst), Ok(true));
        assert_eq!(score("Lyon", &inst), Ok(false));
        inst.gold = None;
        assert!(matches!(score("x", &inst), Err(ScoreError::Unscorable(_))));
    }
}
