use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Stable identifier of a registered document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocumentId(String);

impl DocumentId {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DocumentId {
    fn from(value: &str) -> Self {
        Self(value.to_string())
    }
}

/// Inclusive, 1-based line range inside one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRange {
    pub start: usize,
    pub end: usize,
}

impl LineRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }
}

impl fmt::Display for LineRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl FromStr for LineRange {
    type Err = AnchorParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (start, end) = parse_range(s.trim())?;
        Ok(Self { start, end })
    }
}

/// Provenance pointer: a document plus an inclusive 1-based line range.
///
/// Serialized as `doc_id:start-end`. Documents rewritten by normalization get a
/// new revision; anchors minted against an older revision carry it as
/// `doc_id@rev:start-end` and no longer resolve.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Anchor {
    pub doc: DocumentId,
    pub start_line: usize,
    pub end_line: usize,
    pub revision: u32,
}

impl Anchor {
    pub fn new(doc: DocumentId, start_line: usize, end_line: usize) -> Self {
        Self {
            doc,
            start_line,
            end_line,
            revision: 0,
        }
    }

    pub fn line(doc: DocumentId, line: usize) -> Self {
        Self::new(doc, line, line)
    }

    pub fn with_revision(mut self, revision: u32) -> Self {
        self.revision = revision;
        self
    }

    pub fn len(&self) -> usize {
        self.end_line + 1 - self.start_line
    }

    pub fn is_empty(&self) -> bool {
        self.end_line < self.start_line
    }

    pub fn range(&self) -> LineRange {
        LineRange::new(self.start_line, self.end_line)
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.revision == 0 {
            write!(f, "{}:{}-{}", self.doc, self.start_line, self.end_line)
        } else {
            write!(
                f,
                "{}@{}:{}-{}",
                self.doc, self.revision, self.start_line, self.end_line
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed anchor `{input}`: {reason}")]
pub struct AnchorParseError {
    pub input: String,
    pub reason: &'static str,
}

fn parse_range(s: &str) -> Result<(usize, usize), AnchorParseError> {
    let err = |reason| AnchorParseError {
        input: s.to_string(),
        reason,
    };
    let (start, end) = match s.split_once('-') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, s),
    };
    let start: usize = start
        .parse()
        .map_err(|_| err("line numbers must be integers"))?;
    let end: usize = end
        .parse()
        .map_err(|_| err("line numbers must be integers"))?;
    if start == 0 {
        return Err(err("lines are 1-based"));
    }
    if end < start {
        return Err(err("end line precedes start line"));
    }
    Ok((start, end))
}

impl FromStr for Anchor {
    type Err = AnchorParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, range) = s.rsplit_once(':').ok_or(AnchorParseError {
            input: s.to_string(),
            reason: "expected `doc:start-end`",
        })?;
        let (start, end) = parse_range(range.trim())?;
        let (doc, revision) = match head.rsplit_once('@') {
            Some((doc, rev)) => match rev.parse::<u32>() {
                Ok(rev) => (doc, rev),
                Err(_) => (head, 0),
            },
            None => (head, 0),
        };
        if doc.is_empty() {
            return Err(AnchorParseError {
                input: s.to_string(),
                reason: "empty document id",
            });
        }
        Ok(Anchor {
            doc: DocumentId::new(doc),
            start_line: start,
            end_line: end,
            revision,
        })
    }
}

impl Serialize for Anchor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Anchor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse_agree() {
        let a = Anchor::new("context_file.txt".into(), 437, 438);
        assert_eq!(a.to_string(), "context_file.txt:437-438");
        assert_eq!("context_file.txt:437-438".parse::<Anchor>().unwrap(), a);
        let stale = a.clone().with_revision(2);
        assert_eq!(stale.to_string(), "context_file.txt@2:437-438");
        assert_eq!(stale.to_string().parse::<Anchor>().unwrap(), stale);
    }

    #[test]
    fn single_line_form() {
        let a: Anchor = "doc:12".parse().unwrap();
        assert_eq!((a.start_line, a.end_line), (12, 12));
    }

    #[test]
    fn doc_ids_may_contain_colons() {
        let a: Anchor = "C:/data/x.txt:3-4".parse().unwrap();
        assert_eq!(a.doc.as_str(), "C:/data/x.txt");
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!("doc:0-3".parse::<Anchor>().is_err());
        assert!("doc:5-3".parse::<Anchor>().is_err());
        assert!("doc:a-b".parse::<Anchor>().is_err());
        assert!(":1-2".parse::<Anchor>().is_err());
        assert!("1-2".parse::<Anchor>().is_err());
    }
}
