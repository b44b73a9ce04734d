//! Read-only, line-anchored access to raw long documents.
//!
//! Documents are plain UTF-8 text files registered once and never indexed,
//! chunked or summarized. Every operation that returns text also returns an
//! [`Anchor`] that re-reads to exactly that text. The only mutation is
//! [`DocumentEnv::normalize_document`], which rewrites the in-memory working
//! copy (never the file on disk) and bumps the document revision so that older
//! anchors stop resolving.

mod anchor;
pub mod pattern;
pub mod tokenizer;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

pub use anchor::{Anchor, AnchorParseError, DocumentId, LineRange};
pub use pattern::PatternError;
pub use tokenizer::{count_tokens, estimate_tokens, Tokenizer, UnknownTokenizer};

pub const DEFAULT_OBSERVATION_BUDGET: usize = 4_000;
pub const DEFAULT_NORMALIZATION_THRESHOLD: usize = 4_000;
pub const DEFAULT_GREP_MAX_MATCHES: usize = 20;
pub const DEFAULT_SCAN_MAX_MATCHES: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid document {path}: {reason}")]
    InvalidDocument { path: PathBuf, reason: String },
    #[error(transparent)]
    InvalidPattern(#[from] PatternError),
    #[error("anchor {anchor} is out of range (document has {line_count} lines)")]
    AnchorOutOfRange { anchor: Anchor, line_count: usize },
    #[error("anchor {anchor} predates normalization (document is at revision {current})")]
    StaleAnchor { anchor: Anchor, current: u32 },
    #[error(transparent)]
    UnknownTokenizer(#[from] UnknownTokenizer),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = DocumentError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentHandle {
    pub id: DocumentId,
    pub path: PathBuf,
    pub byte_size: u64,
    pub line_count: usize,
    pub estimated_tokens: usize,
    /// Set once the working copy has been rewritten by normalization.
    pub normalized: bool,
    /// Bumped by each normalization that changes the text.
    pub revision: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileInfo {
    pub byte_size: u64,
    pub estimated_tokens: usize,
    pub needs_normalization: bool,
    pub line_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSnippet {
    pub anchor: Anchor,
    /// The matched substring of the anchored line.
    pub matched_text: String,
    /// The anchored line, clipped only when it alone exceeds the budget.
    pub line: String,
    pub context_before: Vec<String>,
    pub context_after: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GrepResult {
    pub snippets: Vec<MatchSnippet>,
    /// More matches existed than were returned (match cap or budget).
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub anchor: Anchor,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrepRequest {
    pub pattern: String,
    pub context: usize,
    pub case_insensitive: bool,
    pub max_matches: usize,
    pub scope: Option<LineRange>,
    pub observation_budget: usize,
}

impl GrepRequest {
    pub fn new(pattern: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            context: 0,
            case_insensitive: false,
            max_matches: DEFAULT_GREP_MAX_MATCHES,
            scope: None,
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
        }
    }

    pub fn case_insensitive(mut self, yes: bool) -> Self {
        self.case_insensitive = yes;
        self
    }

    pub fn context(mut self, lines: usize) -> Self {
        self.context = lines;
        self
    }

    pub fn max_matches(mut self, cap: usize) -> Self {
        self.max_matches = cap;
        self
    }

    pub fn scope(mut self, scope: LineRange) -> Self {
        self.scope = Some(scope);
        self
    }

    pub fn budget(mut self, tokens: usize) -> Self {
        self.observation_budget = tokens;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanRequest {
    pub pattern: String,
    pub scope: Option<LineRange>,
    pub max_matches: usize,
}

impl ScanRequest {
    pub fn new(pattern: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            scope: None,
            max_matches: DEFAULT_SCAN_MAX_MATCHES,
        }
    }

    pub fn scope(mut self, scope: LineRange) -> Self {
        self.scope = Some(scope);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOptions {
    pub limit: Option<usize>,
    pub observation_budget: usize,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            limit: None,
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
        }
    }
}

impl ReadOptions {
    pub fn limit(limit: usize) -> Self {
        Self {
            limit: Some(limit),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnvConfig {
    pub normalization_threshold: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            normalization_threshold: DEFAULT_NORMALIZATION_THRESHOLD,
        }
    }
}

#[derive(Debug)]
struct Document {
    id: DocumentId,
    path: PathBuf,
    text: String,
    /// Byte range of each line, newline excluded.
    lines: Vec<(usize, usize)>,
    revision: u32,
    normalized: bool,
}

impl Document {
    fn new(id: DocumentId, path: PathBuf, text: String) -> Self {
        let lines = line_spans(&text);
        Self {
            id,
            path,
            text,
            lines,
            revision: 0,
            normalized: false,
        }
    }

    fn line_count(&self) -> usize {
        self.lines.len()
    }

    fn line(&self, n: usize) -> &str {
        let (s, e) = self.lines[n - 1];
        &self.text[s..e]
    }

    fn span(&self, start: usize, end: usize) -> &str {
        &self.text[self.lines[start - 1].0..self.lines[end - 1].1]
    }

    fn max_line_chars(&self) -> usize {
        (1..=self.line_count())
            .map(|n| self.line(n).chars().count())
            .max()
            .unwrap_or(0)
    }

    fn info(&self, threshold: usize) -> FileInfo {
        FileInfo {
            byte_size: self.text.len() as u64,
            estimated_tokens: estimate_tokens(&self.text),
            needs_normalization: self.max_line_chars() > threshold,
            line_count: self.line_count(),
        }
    }

    fn handle(&self) -> DocumentHandle {
        DocumentHandle {
            id: self.id.clone(),
            path: self.path.clone(),
            byte_size: self.text.len() as u64,
            line_count: self.line_count(),
            estimated_tokens: estimate_tokens(&self.text),
            normalized: self.normalized,
            revision: self.revision,
        }
    }

    fn clamp(&self, scope: Option<LineRange>) -> Option<(usize, usize)> {
        let n = self.line_count();
        if n == 0 {
            return None;
        }
        let (s, e) = match scope {
            Some(r) => (r.start.max(1), r.end.min(n)),
            None => (1, n),
        };
        (s <= e).then_some((s, e))
    }
}

fn line_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (idx, byte) in text.bytes().enumerate() {
        if byte == b'\n' {
            spans.push((start, idx));
            start = idx + 1;
        }
    }
    if start < text.len() {
        spans.push((start, text.len()));
    }
    spans
}

fn clip_to_bytes(text: &str, max_bytes: usize) -> &str {
    if text.len() <= max_bytes {
        return text;
    }
    let mut end = max_bytes;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

#[derive(Debug, Default)]
struct Registry {
    docs: BTreeMap<DocumentId, Arc<Document>>,
    by_path: HashMap<PathBuf, DocumentId>,
}

/// The set of documents an agent may explore.
///
/// Read operations take a shared lock and may run from many episodes at once.
#[derive(Debug, Default)]
pub struct DocumentEnv {
    config: EnvConfig,
    registry: RwLock<Registry>,
}

impl DocumentEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_config(config: EnvConfig) -> Self {
        Self {
            config,
            registry: RwLock::default(),
        }
    }

    fn get(&self, id: &DocumentId) -> Result<Arc<Document>> {
        let reg = self.registry.read().expect("registry lock poisoned");
        reg.docs
            .get(id)
            .cloned()
            .ok_or_else(|| DocumentError::NotFound(id.to_string()))
    }

    /// Registers a text file. Registering the same path again returns the
    /// existing handle.
    pub fn register_document(&self, path: impl AsRef<Path>) -> Result<DocumentHandle> {
        let path = path.as_ref();
        let canonical = path.canonicalize().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => DocumentError::NotFound(path.display().to_string()),
            _ => DocumentError::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        if let Some(id) = self
            .registry
            .read()
            .expect("registry lock poisoned")
            .by_path
            .get(&canonical)
        {
            return Ok(self.get(id)?.handle());
        }
        if !canonical.is_file() {
            return Err(DocumentError::InvalidDocument {
                path: canonical,
                reason: "not a regular file".into(),
            });
        }
        let bytes = std::fs::read(&canonical).map_err(|source| DocumentError::Io {
            path: canonical.clone(),
            source,
        })?;
        if bytes.contains(&0) {
            return Err(DocumentError::InvalidDocument {
                path: canonical,
                reason: "binary content (NUL byte)".into(),
            });
        }
        let text = String::from_utf8(bytes).map_err(|e| DocumentError::InvalidDocument {
            path: canonical.clone(),
            reason: format!("not valid UTF-8: {e}"),
        })?;

        let mut reg = self.registry.write().expect("registry lock poisoned");
        if let Some(id) = reg.by_path.get(&canonical) {
            return Ok(reg.docs[id].handle());
        }
        let base = canonical
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "document".into());
        let mut id = DocumentId::new(base.clone());
        let mut suffix = 2;
        while reg.docs.contains_key(&id) {
            id = DocumentId::new(format!("{base}#{suffix}"));
            suffix += 1;
        }
        let doc = Document::new(id.clone(), canonical.clone(), text);
        let handle = doc.handle();
        reg.by_path.insert(canonical, id.clone());
        reg.docs.insert(id, Arc::new(doc));
        Ok(handle)
    }

    pub fn handle(&self, id: &DocumentId) -> Result<DocumentHandle> {
        Ok(self.get(id)?.handle())
    }

    pub fn documents(&self) -> Vec<DocumentHandle> {
        let reg = self.registry.read().expect("registry lock poisoned");
        reg.docs.values().map(|d| d.handle()).collect()
    }

    /// Resolves a user-facing source reference: a document id, a registered
    /// path, or an unambiguous file name.
    pub fn resolve(&self, source: &str) -> Result<DocumentId> {
        let reg = self.registry.read().expect("registry lock poisoned");
        let id = DocumentId::new(source);
        if reg.docs.contains_key(&id) {
            return Ok(id);
        }
        if let Ok(canonical) = Path::new(source).canonicalize() {
            if let Some(id) = reg.by_path.get(&canonical) {
                return Ok(id.clone());
            }
        }
        let mut by_name = reg.docs.values().filter(|d| {
            d.path
                .file_name()
                .is_some_and(|n| n.to_string_lossy() == source)
        });
        match (by_name.next(), by_name.next()) {
            (Some(doc), None) => Ok(doc.id.clone()),
            _ => Err(DocumentError::NotFound(source.to_string())),
        }
    }

    pub fn get_file_info(&self, id: &DocumentId) -> Result<FileInfo> {
        Ok(self.get(id)?.info(self.config.normalization_threshold))
    }

    /// Registered documents whose path matches a shell-style pattern, ordered
    /// by path. Without a scope the pattern is matched against the file name;
    /// with one, against the path relative to the scope directory.
    pub fn glob(&self, pattern: &str, scope: Option<&Path>) -> Result<Vec<DocumentId>> {
        let invalid = |reason: String| {
            DocumentError::InvalidPattern(PatternError {
                pattern: pattern.to_string(),
                reason,
            })
        };
        if pattern.is_empty() {
            return Err(invalid("pattern is empty".into()));
        }
        let matcher = globset::GlobBuilder::new(pattern)
            .literal_separator(true)
            .build()
            .map_err(|e| invalid(e.kind().to_string()))?
            .compile_matcher();
        let scope = match scope {
            Some(dir) => Some(
                dir.canonicalize()
                    .map_err(|_| DocumentError::NotFound(dir.display().to_string()))?,
            ),
            None => None,
        };
        let reg = self.registry.read().expect("registry lock poisoned");
        let mut hits: Vec<(&PathBuf, &DocumentId)> = reg
            .docs
            .values()
            .filter(|doc| match &scope {
                Some(dir) => doc
                    .path
                    .strip_prefix(dir)
                    .is_ok_and(|rel| matcher.is_match(rel)),
                None => doc.path.file_name().is_some_and(|n| matcher.is_match(n)),
            })
            .map(|doc| (&doc.path, &doc.id))
            .collect();
        hits.sort();
        Ok(hits.into_iter().map(|(_, id)| id.clone()).collect())
    }

    /// Line-by-line regex search.
    pub fn grep(&self, id: &DocumentId, request: &GrepRequest) -> Result<GrepResult> {
        let re = pattern::compile(&request.pattern, request.case_insensitive)?;
        let doc = self.get(id)?;
        let mut result = GrepResult::default();
        let Some((first, last)) = doc.clamp(request.scope) else {
            return Ok(result);
        };
        let byte_budget = request.observation_budget.saturating_mul(4);
        let mut used = 0usize;
        for n in first..=last {
            let line = doc.line(n);
            let Some(m) = re.find(line) else { continue };
            if result.snippets.len() >= request.max_matches {
                result.truncated = true;
                break;
            }
            let before: Vec<String> = (n.saturating_sub(request.context).max(first)..n)
                .map(|k| doc.line(k).to_string())
                .collect();
            let after: Vec<String> = (n + 1..=(n + request.context).min(last))
                .map(|k| doc.line(k).to_string())
                .collect();
            let cost = line.len()
                + before
                    .iter()
                    .chain(after.iter())
                    .map(|l| l.len() + 1)
                    .sum::<usize>()
                + 1;
            let mut snippet = MatchSnippet {
                anchor: Anchor::line(doc.id.clone(), n).with_revision(doc.revision),
                matched_text: m.as_str().to_string(),
                line: line.to_string(),
                context_before: before,
                context_after: after,
            };
            if used + cost > byte_budget {
                result.truncated = true;
                if !result.snippets.is_empty() {
                    break;
                }
                // A single oversized hit is still reported, clipped around the match.
                let from = line[..m.start()]
                    .char_indices()
                    .rev()
                    .map(|(i, _)| i)
                    .find(|&i| m.start() - i >= byte_budget / 4)
                    .unwrap_or(0);
                snippet.line = clip_to_bytes(&line[from..], byte_budget.max(m.len())).to_string();
                snippet.context_before.clear();
                snippet.context_after.clear();
                if snippet.line.len() < m.end() - from {
                    snippet.matched_text =
                        clip_to_bytes(m.as_str(), snippet.line.len() - (m.start() - from))
                            .to_string();
                }
                result.snippets.push(snippet);
                break;
            }
            used += cost;
            result.snippets.push(snippet);
        }
        Ok(result)
    }

    /// Case-insensitive structural scan returning matching line anchors only.
    pub fn scan(&self, id: &DocumentId, request: &ScanRequest) -> Result<Vec<Anchor>> {
        let re = pattern::compile(&request.pattern, true)?;
        let doc = self.get(id)?;
        let Some((first, last)) = doc.clamp(request.scope) else {
            return Ok(Vec::new());
        };
        Ok((first..=last)
            .filter(|&n| re.is_match(doc.line(n)))
            .take(request.max_matches)
            .map(|n| Anchor::line(doc.id.clone(), n).with_revision(doc.revision))
            .collect())
    }

    /// Validates an anchor against the current document revision and returns
    /// the document's line count.
    pub fn check_anchor(&self, anchor: &Anchor) -> Result<usize> {
        let doc = self.get(&anchor.doc)?;
        Self::check(&doc, anchor)?;
        Ok(doc.line_count())
    }

    fn check(doc: &Document, anchor: &Anchor) -> Result<()> {
        if anchor.revision != doc.revision {
            return Err(DocumentError::StaleAnchor {
                anchor: anchor.clone(),
                current: doc.revision,
            });
        }
        let n = doc.line_count();
        if anchor.start_line == 0 || anchor.start_line > anchor.end_line || anchor.end_line > n {
            return Err(DocumentError::AnchorOutOfRange {
                anchor: anchor.clone(),
                line_count: n,
            });
        }
        Ok(())
    }

    /// Returns the exact anchored lines, cut by `limit` lines and then by the
    /// observation budget.
    pub fn read(&self, anchor: &Anchor, options: &ReadOptions) -> Result<Observation> {
        let doc = self.get(&anchor.doc)?;
        Self::check(&doc, anchor)?;
        let mut end = anchor.end_line;
        let mut truncated = false;
        if let Some(limit) = options.limit {
            let capped = anchor.start_line + limit.max(1) - 1;
            if capped < end {
                end = capped;
                truncated = true;
            }
        }
        let mut text = doc.span(anchor.start_line, end);
        let byte_budget = options.observation_budget.saturating_mul(4);
        if text.len() > byte_budget {
            truncated = true;
            // Prefer whole lines; fall back to a character cut of the first one.
            text = match text[..=byte_budget.min(text.len() - 1)].rfind('\n') {
                Some(cut) if cut > 0 => &text[..cut],
                _ => clip_to_bytes(text, byte_budget),
            };
        }
        Ok(Observation {
            text: text.to_string(),
            anchor: Anchor::new(doc.id.clone(), anchor.start_line, end).with_revision(doc.revision),
            truncated,
        })
    }

    pub fn count_tokens(&self, text: &str, tokenizer: Option<&str>) -> Result<usize> {
        Ok(count_tokens(text, tokenizer)?)
    }

    /// The full current text of a document.
    pub fn text(&self, id: &DocumentId) -> Result<String> {
        Ok(self.get(id)?.text.clone())
    }

    /// Splits every line longer than `max_length` characters (default: the
    /// normalization threshold) into cap-sized lines. Invalidates existing
    /// anchors when anything changes.
    pub fn normalize_document(
        &self,
        id: &DocumentId,
        max_length: Option<usize>,
    ) -> Result<FileInfo> {
        let cap = max_length
            .unwrap_or(self.config.normalization_threshold)
            .max(1);
        let mut reg = self.registry.write().expect("registry lock poisoned");
        let doc = reg
            .docs
            .get(id)
            .cloned()
            .ok_or_else(|| DocumentError::NotFound(id.to_string()))?;
        if doc.max_line_chars() <= cap {
            return Ok(doc.info(self.config.normalization_threshold));
        }
        let mut out = String::with_capacity(doc.text.len() + doc.text.len() / cap + 1);
        for n in 1..=doc.line_count() {
            if n > 1 {
                out.push('\n');
            }
            let line = doc.line(n);
            let mut count = 0;
            for ch in line.chars() {
                if count == cap {
                    out.push('\n');
                    count = 0;
                }
                out.push(ch);
                count += 1;
            }
        }
        if doc.text.ends_with('\n') {
            out.push('\n');
        }
        let mut rewritten = Document::new(doc.id.clone(), doc.path.clone(), out);
        rewritten.revision = doc.revision + 1;
        rewritten.normalized = true;
        let info = rewritten.info(self.config.normalization_threshold);
        reg.docs.insert(id.clone(), Arc::new(rewritten));
        Ok(info)
    }
}
