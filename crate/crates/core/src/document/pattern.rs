//! The regex dialect accepted by `grep` and `scan`.
//!
//! Patterns are POSIX-extended style: literals, `.`, bracket classes
//! (including `[:alpha:]`-style names), anchors `^ $`, word boundaries,
//! capturing groups, alternation and greedy `* + ? {m,n}`. The Perl shorthands
//! `\d \w \s` are accepted. Inline flags, non-capturing or named groups, lazy
//! quantifiers, Unicode property classes and class set operators are rejected,
//! as are backreferences and lookaround (the engine has neither).

use regex::{Regex, RegexBuilder};
use regex_syntax::ast::{self, parse::Parser, Ast, ClassSetItem, GroupKind, Visitor};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid pattern `{pattern}`: {reason}")]
pub struct PatternError {
    pub pattern: String,
    pub reason: String,
}

struct DialectCheck;

impl Visitor for DialectCheck {
    type Output = ();
    type Err = String;

    fn finish(self) -> Result<(), String> {
        Ok(())
    }

    fn visit_pre(&mut self, node: &Ast) -> Result<(), String> {
        match node {
            Ast::Flags(_) => Err("inline flags are not supported".into()),
            Ast::ClassUnicode(_) => Err("Unicode property classes are not supported".into()),
            Ast::Repetition(rep) if !rep.greedy => Err("lazy quantifiers are not supported".into()),
            Ast::Group(group) => match group.kind {
                GroupKind::CaptureIndex(_) => Ok(()),
                GroupKind::CaptureName { .. } => Err("named groups are not supported".into()),
                GroupKind::NonCapturing(_) => {
                    Err("non-capturing and flag groups are not supported".into())
                }
            },
            _ => Ok(()),
        }
    }

    fn visit_class_set_item_pre(&mut self, item: &ClassSetItem) -> Result<(), String> {
        match item {
            ClassSetItem::Unicode(_) => Err("Unicode property classes are not supported".into()),
            _ => Ok(()),
        }
    }

    fn visit_class_set_binary_op_pre(&mut self, _op: &ast::ClassSetBinaryOp) -> Result<(), String> {
        Err("class set operators are not supported".into())
    }
}

/// Validates `pattern` against the dialect and compiles it.
pub fn compile(pattern: &str, case_insensitive: bool) -> Result<Regex, PatternError> {
    let fail = |reason: String| PatternError {
        pattern: pattern.to_string(),
        reason,
    };
    if pattern.is_empty() {
        return Err(fail("pattern is empty".into()));
    }
    let parsed = Parser::new()
        .parse(pattern)
        .map_err(|e| fail(e.kind().to_string()))?;
    ast::visit(&parsed, DialectCheck).map_err(fail)?;
    RegexBuilder::new(pattern)
        .case_insensitive(case_insensitive)
        .build()
        .map_err(|e| fail(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_posix_style_constructs() {
        for p in [
            "five types|contextual information",
            "^Table [0-9]+",
            "[[:alpha:]]+ing$",
            "(ab)+c{2,3}",
            r"\bword\b",
            r"\d+\s\w",
            r"a\.b",
        ] {
            compile(p, false).unwrap_or_else(|e| panic!("{p}: {e}"));
        }
    }

    #[test]
    fn rejects_constructs_outside_the_dialect() {
        for p in [
            "(?i)abc",
            "(?:ab)",
            "(?P<x>ab)",
            "a+?",
            r"\p{Greek}",
            r"[\pL]",
            "[a-z&&[^x]]",
            r"(a)\1",
            "(?=a)",
            "",
            "(",
        ] {
            assert!(compile(p, false).is_err(), "{p} should be rejected");
        }
    }

    #[test]
    fn case_insensitive_flag() {
        let re = compile("system overview", true).unwrap();
        assert!(re.is_match("System Overview"));
        assert!(!compile("system overview", false)
            .unwrap()
            .is_match("System Overview"));
    }
}
