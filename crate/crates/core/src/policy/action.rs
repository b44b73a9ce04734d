use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};

use crate::document::{
    Anchor, AnchorParseError, DocumentEnv, DocumentError, DocumentId, LineRange,
};
use crate::gateway::{ToolCall, ToolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionClass {
    /// Reads the document; never touches the state or the diagnosis.
    Forage,
    /// Operates on the epistemic state or the diagnosis.
    State,
    /// Bookkeeping utilities outside the core action space.
    Auxiliary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Glob,
    Grep,
    Read,
    Scan,
    GetFileInfo,
    Update,
    View,
    Evaluate,
    CountTokens,
    TodoWrite,
    NormalizeDocument,
}

impl ActionKind {
    pub const ALL: [ActionKind; 11] = [
        ActionKind::Glob,
        ActionKind::Grep,
        ActionKind::Read,
        ActionKind::Scan,
        ActionKind::GetFileInfo,
        ActionKind::Update,
        ActionKind::View,
        ActionKind::Evaluate,
        ActionKind::CountTokens,
        ActionKind::TodoWrite,
        ActionKind::NormalizeDocument,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Glob => "Glob",
            Self::Grep => "Grep",
            Self::Read => "Read",
            Self::Scan => "Scan",
            Self::GetFileInfo => "GetFileInfo",
            Self::Update => "Update",
            Self::View => "View",
            Self::Evaluate => "Evaluate",
            Self::CountTokens => "CountTokens",
            Self::TodoWrite => "TodoWrite",
            Self::NormalizeDocument => "NormalizeDocument",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn class(self) -> ActionClass {
        match self {
            Self::Glob | Self::Grep | Self::Read | Self::Scan | Self::GetFileInfo => {
                ActionClass::Forage
            }
            Self::Update | Self::View | Self::Evaluate => ActionClass::State,
            Self::CountTokens | Self::TodoWrite | Self::NormalizeDocument => ActionClass::Auxiliary,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An anchor as written by the policy: either fully qualified
/// (`doc:start-end`, `doc@rev:start-end`) or bare lines (`start-end`, `line`)
/// that refer to the episode document at its current revision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnchorRef {
    Full(Anchor),
    Lines(LineRange),
}

impl AnchorRef {
    pub fn lines(start: usize, end: usize) -> Self {
        Self::Lines(LineRange::new(start, end))
    }

    pub fn range(&self) -> LineRange {
        match self {
            Self::Full(a) => a.range(),
            Self::Lines(r) => *r,
        }
    }

    pub fn resolve(
        &self,
        env: &DocumentEnv,
        default_doc: &DocumentId,
    ) -> Result<Anchor, DocumentError> {
        match self {
            Self::Full(anchor) => Ok(anchor.clone()),
            Self::Lines(range) => {
                let handle = env.handle(default_doc)?;
                Ok(Anchor::new(default_doc.clone(), range.start, range.end)
                    .with_revision(handle.revision))
            }
        }
    }
}

impl fmt::Display for AnchorRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full(a) => a.fmt(f),
            Self::Lines(r) => r.fmt(f),
        }
    }
}

impl FromStr for AnchorRef {
    type Err = AnchorParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.contains(':') {
            s.parse().map(Self::Full)
        } else {
            s.parse().map(Self::Lines)
        }
    }
}

impl From<Anchor> for AnchorRef {
    fn from(anchor: Anchor) -> Self {
        Self::Full(anchor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TodoStatus {
    Pending,
    InProgress,
    #[serde(alias = "completed")]
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TodoItem {
    pub content: String,
    pub status: TodoStatus,
}

/// One statement/anchor pair of an Update action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateUnit {
    pub content: String,
    pub anchor: AnchorRef,
}

impl UpdateUnit {
    pub fn new(content: impl Into<String>, anchor: AnchorRef) -> Self {
        Self {
            content: content.into(),
            anchor,
        }
    }
}

/// A validated policy decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Glob {
        pattern: String,
        scope: Option<String>,
    },
    Grep {
        pattern: String,
        context: Option<usize>,
        scope: Option<LineRange>,
        case_insensitive: bool,
        max_matches: Option<usize>,
        source: Option<String>,
    },
    /// Exactly one of `anchor` and `offset` is set.
    Read {
        anchor: Option<AnchorRef>,
        offset: Option<usize>,
        limit: Option<usize>,
    },
    Scan {
        pattern: String,
        scope: Option<LineRange>,
        source: Option<String>,
    },
    GetFileInfo {
        source: String,
    },
    Update {
        units: Vec<UpdateUnit>,
    },
    View {
        state_id: Option<String>,
    },
    Evaluate,
    CountTokens {
        text: String,
        model: Option<String>,
    },
    TodoWrite {
        todos: Vec<TodoItem>,
    },
    NormalizeDocument {
        source: String,
        max_length: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("{tool}: missing required argument `{argument}`")]
    MissingArgument { tool: String, argument: String },
    #[error("{tool}: invalid argument `{argument}`: {reason}")]
    InvalidArgument {
        tool: String,
        argument: String,
        reason: String,
    },
}

impl Action {
    pub fn grep(pattern: impl Into<String>) -> Self {
        Self::Grep {
            pattern: pattern.into(),
            context: None,
            scope: None,
            case_insensitive: false,
            max_matches: None,
            source: None,
        }
    }

    pub fn read_lines(start: usize, end: usize) -> Self {
        Self::Read {
            anchor: Some(AnchorRef::lines(start, end)),
            offset: None,
            limit: None,
        }
    }

    pub fn update(content: impl Into<String>, anchor: AnchorRef) -> Self {
        Self::Update {
            units: vec![UpdateUnit::new(content, anchor)],
        }
    }

    pub fn kind(&self) -> ActionKind {
        match self {
            Self::Glob { .. } => ActionKind::Glob,
            Self::Grep { .. } => ActionKind::Grep,
            Self::Read { .. } => ActionKind::Read,
            Self::Scan { .. } => ActionKind::Scan,
            Self::GetFileInfo { .. } => ActionKind::GetFileInfo,
            Self::Update { .. } => ActionKind::Update,
            Self::View { .. } => ActionKind::View,
            Self::Evaluate => ActionKind::Evaluate,
            Self::CountTokens { .. } => ActionKind::CountTokens,
            Self::TodoWrite { .. } => ActionKind::TodoWrite,
            Self::NormalizeDocument { .. } => ActionKind::NormalizeDocument,
        }
    }

    pub fn class(&self) -> ActionClass {
        self.kind().class()
    }

    /// Wire form: `{name, args}` with only the arguments that are set.
    pub fn to_tool_call(&self) -> ToolCall {
        let mut args = Map::new();
        let mut put = |key: &str, value: Value| {
            args.insert(key.to_string(), value);
        };
        match self {
            Self::Glob { pattern, scope } => {
                put("pattern", json!(pattern));
                if let Some(scope) = scope {
                    put("scope", json!(scope));
                }
            }
            Self::Grep {
                pattern,
                context,
                scope,
                case_insensitive,
                max_matches,
                source,
            } => {
                put("pattern", json!(pattern));
                if let Some(c) = context {
                    put("context", json!(c));
                }
                if let Some(s) = scope {
                    put("scope", json!(s.to_string()));
                }
                if *case_insensitive {
                    put("case_insensitive", json!(true));
                }
                if let Some(m) = max_matches {
                    put("max_matches", json!(m));
                }
                if let Some(s) = source {
                    put("source", json!(s));
                }
            }
            Self::Read {
                anchor,
                offset,
                limit,
            } => {
                if let Some(a) = anchor {
                    put("anchor", json!(a.to_string()));
                }
                if let Some(o) = offset {
                    put("offset", json!(o));
                }
                if let Some(l) = limit {
                    put("limit", json!(l));
                }
            }
            Self::Scan {
                pattern,
                scope,
                source,
            } => {
                put("pattern", json!(pattern));
                if let Some(s) = scope {
                    put("scope", json!(s.to_string()));
                }
                if let Some(s) = source {
                    put("source", json!(s));
                }
            }
            Self::GetFileInfo { source } => put("source", json!(source)),
            Self::Update { units } => {
                let units: Vec<Value> = units
                    .iter()
                    .map(|u| json!({"content": u.content, "anchor": u.anchor.to_string()}))
                    .collect();
                put("units", Value::Array(units));
            }
            Self::View { state_id } => {
                if let Some(id) = state_id {
                    put("state_id", json!(id));
                }
            }
            Self::Evaluate => {}
            Self::CountTokens { text, model } => {
                put("text", json!(text));
                if let Some(m) = model {
                    put("model", json!(m));
                }
            }
            Self::TodoWrite { todos } => put(
                "todos",
                serde_json::to_value(todos).expect("todos serialize"),
            ),
            Self::NormalizeDocument { source, max_length } => {
                put("source", json!(source));
                if let Some(m) = max_length {
                    put("max_length", json!(m));
                }
            }
        }
        ToolCall::new(self.kind().name(), Value::Object(args))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let call = self.to_tool_call();
        write!(f, "{}({})", call.name, call.args)
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_tool_call().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let call = ToolCall::deserialize(deserializer)?;
        parse_action(&call).map_err(serde::de::Error::custom)
    }
}

struct Args<'a> {
    tool: &'static str,
    map: Option<&'a Map<String, Value>>,
}

impl<'a> Args<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.and_then(|m| m.get(key)).filter(|v| !v.is_null())
    }

    fn missing(&self, key: &str) -> ActionError {
        ActionError::MissingArgument {
            tool: self.tool.into(),
            argument: key.into(),
        }
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> ActionError {
        ActionError::InvalidArgument {
            tool: self.tool.into(),
            argument: key.into(),
            reason: reason.into(),
        }
    }

    fn opt_str(&self, key: &str) -> Result<Option<String>, ActionError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(self.invalid(key, format!("expected a string, got {other}"))),
        }
    }

    fn req_str(&self, key: &str) -> Result<String, ActionError> {
        let value = self.opt_str(key)?.ok_or_else(|| self.missing(key))?;
        if value.trim().is_empty() {
            return Err(self.invalid(key, "must not be empty"));
        }
        Ok(value)
    }

    fn opt_usize(&self, key: &str) -> Result<Option<usize>, ActionError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => n
                .as_u64()
                .map(|v| Some(v as usize))
                .ok_or_else(|| self.invalid(key, "expected a non-negative integer")),
            Some(Value::String(s)) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| self.invalid(key, "expected a non-negative integer")),
            Some(other) => Err(self.invalid(key, format!("expected an integer, got {other}"))),
        }
    }

    fn opt_bool(&self, key: &str) -> Result<bool, ActionError> {
        match self.get(key) {
            None => Ok(false),
            Some(Value::Bool(b)) => Ok(*b),
            Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => Ok(true),
            Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => Ok(false),
            Some(other) => Err(self.invalid(key, format!("expected a boolean, got {other}"))),
        }
    }

    fn opt_range(&self, key: &str) -> Result<Option<LineRange>, ActionError> {
        let Some(value) = self.get(key) else {
            return Ok(None);
        };
        parse_range_value(value)
            .map(Some)
            .map_err(|reason| self.invalid(key, reason))
    }

    fn anchor(&self, key: &str, value: &Value) -> Result<AnchorRef, ActionError> {
        parse_anchor_value(value).map_err(|reason| self.invalid(key, reason))
    }
}

fn parse_range_value(value: &Value) -> Result<LineRange, String> {
    let pair = match value {
        Value::String(s) => return s.parse::<LineRange>().map_err(|e| e.to_string()),
        Value::Number(n) => {
            let n = n.as_u64().ok_or("expected a line number")? as usize;
            (n, n)
        }
        Value::Array(items) if items.len() == 2 => (
            items[0].as_u64().ok_or("expected two line numbers")? as usize,
            items[1].as_u64().ok_or("expected two line numbers")? as usize,
        ),
        Value::Object(map) => {
            let field = |a: &str, b: &str| {
                map.get(a)
                    .or_else(|| map.get(b))
                    .and_then(Value::as_u64)
                    .map(|v| v as usize)
                    .ok_or_else(|| format!("expected `{a}`"))
            };
            (field("start", "start_line")?, field("end", "end_line")?)
        }
        other => return Err(format!("expected a line range, got {other}")),
    };
    if pair.0 == 0 || pair.1 < pair.0 {
        return Err(format!(
            "{}-{} is not a valid 1-based line range",
            pair.0, pair.1
        ));
    }
    Ok(LineRange::new(pair.0, pair.1))
}

fn parse_anchor_value(value: &Value) -> Result<AnchorRef, String> {
    match value {
        Value::String(s) => s.parse().map_err(|e: AnchorParseError| e.to_string()),
        Value::Object(map) if map.contains_key("doc") => {
            let doc = map["doc"].as_str().ok_or("`doc` must be a string")?;
            let range = parse_range_value(value)?;
            let revision = map.get("revision").and_then(Value::as_u64).unwrap_or(0) as u32;
            Ok(AnchorRef::Full(
                Anchor::new(DocumentId::new(doc), range.start, range.end).with_revision(revision),
            ))
        }
        other => parse_range_value(other).map(AnchorRef::Lines),
    }
}

fn parse_todos(args: &Args<'_>) -> Result<Vec<TodoItem>, ActionError> {
    let value = args.get("todos").ok_or_else(|| args.missing("todos"))?;
    let item = |v: &Value| -> Result<TodoItem, ActionError> {
        match v {
            Value::String(s) => Ok(TodoItem {
                content: s.clone(),
                status: TodoStatus::Pending,
            }),
            other => serde_json::from_value(other.clone())
                .map_err(|e| args.invalid("todos", e.to_string())),
        }
    };
    let todos = match value {
        Value::Array(items) => items.iter().map(item).collect::<Result<Vec<_>, _>>()?,
        other => vec![item(other)?],
    };
    if todos.iter().any(|t| t.content.trim().is_empty()) {
        return Err(args.invalid("todos", "item content must not be empty"));
    }
    Ok(todos)
}

fn parse_units(args: &Args<'_>) -> Result<Vec<UpdateUnit>, ActionError> {
    let unit =
        |content: Option<&Value>, anchor: Option<&Value>| -> Result<UpdateUnit, ActionError> {
            let content = match content.filter(|v| !v.is_null()) {
                None => return Err(args.missing("content")),
                Some(Value::String(s)) => s.clone(),
                Some(other) => {
                    return Err(args.invalid("content", format!("expected a string, got {other}")))
                }
            };
            if content.trim().is_empty() {
                return Err(args.invalid("content", "must not be empty"));
            }
            let anchor = anchor
                .filter(|v| !v.is_null())
                .ok_or_else(|| args.missing("anchor"))?;
            Ok(UpdateUnit {
                content,
                anchor: args.anchor("anchor", anchor)?,
            })
        };
    if let Some(units) = args.get("units") {
        let Value::Array(items) = units else {
            return Err(args.invalid("units", "expected an array"));
        };
        if items.is_empty() {
            return Err(args.invalid("units", "must not be empty"));
        }
        return items
            .iter()
            .map(|item| unit(item.get("content"), item.get("anchor")))
            .collect();
    }
    Ok(vec![unit(args.get("content"), args.get("anchor"))?])
}

/// Maps a wire-level tool call to a typed action, checking required
/// arguments.
pub fn parse_action(call: &ToolCall) -> Result<Action, ActionError> {
    let kind = ActionKind::from_name(call.name.trim())
        .ok_or_else(|| ActionError::UnknownTool(call.name.clone()))?;
    let args = Args {
        tool: kind.name(),
        map: call.args.as_object(),
    };
    if !call.args.is_null() && args.map.is_none() {
        return Err(args.invalid("args", format!("expected a JSON object, got {}", call.args)));
    }
    Ok(match kind {
        ActionKind::Glob => Action::Glob {
            pattern: args.req_str("pattern")?,
            scope: args.opt_str("scope")?,
        },
        ActionKind::Grep => Action::Grep {
            pattern: args.req_str("pattern")?,
            context: args.opt_usize("context")?,
            scope: args.opt_range("scope")?,
            case_insensitive: args.opt_bool("case_insensitive")?,
            max_matches: args.opt_usize("max_matches")?,
            source: args.opt_str("source")?,
        },
        ActionKind::Read => {
            let anchor = args
                .get("anchor")
                .map(|v| args.anchor("anchor", v))
                .transpose()?;
            let offset = args.opt_usize("offset")?;
            let limit = match args.opt_usize("limit")? {
                Some(l) => Some(l),
                None => args.opt_usize("window")?,
            };
            match (&anchor, offset) {
                (None, None) => return Err(args.missing("anchor")),
                (Some(_), Some(_)) => {
                    return Err(args.invalid("offset", "give either `anchor` or `offset`, not both"))
                }
                (None, Some(0)) => return Err(args.invalid("offset", "lines are 1-based")),
                _ => {}
            }
            if limit == Some(0) {
                return Err(args.invalid("limit", "must be positive"));
            }
            Action::Read {
                anchor,
                offset,
                limit,
            }
        }
        ActionKind::Scan => Action::Scan {
            pattern: args.req_str("pattern")?,
            scope: args.opt_range("scope")?,
            source: args.opt_str("source")?,
        },
        ActionKind::GetFileInfo => Action::GetFileInfo {
            source: args.req_str("source")?,
        },
        ActionKind::Update => Action::Update {
            units: parse_units(&args)?,
        },
        ActionKind::View => Action::View {
            state_id: match args.opt_str("state_id")? {
                Some(id) => Some(id),
                None => args.opt_str("E_id")?,
            },
        },
        ActionKind::Evaluate => Action::Evaluate,
        ActionKind::CountTokens => Action::CountTokens {
            text: args.opt_str("text")?.ok_or_else(|| args.missing("text"))?,
            model: args.opt_str("model")?,
        },
        ActionKind::TodoWrite => Action::TodoWrite {
            todos: parse_todos(&args)?,
        },
        ActionKind::NormalizeDocument => Action::NormalizeDocument {
            source: args.req_str("source")?,
            max_length: match args.opt_usize("max_length")? {
                Some(0) => return Err(args.invalid("max_length", "must be positive")),
                other => other,
            },
        },
    })
}

fn spec(name: &str, description: &str, parameters: Value) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        description: description.into(),
        parameters,
    }
}

/// JSON-schema descriptions of all tools, optionally without the
/// auxiliary ones.
pub fn tool_catalog(include_auxiliary: bool) -> Vec<ToolSpec> {
    let kinds: Vec<ActionKind> = ActionKind::ALL
        .into_iter()
        .filter(|k| include_auxiliary || k.class() != ActionClass::Auxiliary)
        .collect();
    tool_specs(&kinds)
}

/// JSON-schema descriptions of the given tools, in catalog order.
pub fn tool_specs(kinds: &[ActionKind]) -> Vec<ToolSpec> {
    let range =
        json!({"type": "string", "description": "line range `start-end` (1-based, inclusive)"});
    let mut tools = vec![
        spec(
            "Glob",
            "Find registered source files whose path matches a shell-style pattern.",
            json!({"type": "object", "properties": {
                "pattern": {"type": "string"},
                "scope": {"type": "string", "description": "directory to search under"}
            }, "required": ["pattern"]}),
        ),
        spec(
            "Grep",
            "Regex search over the document, line by line. Returns matching lines with line anchors.",
            json!({"type": "object", "properties": {
                "pattern": {"type": "string", "description": "regex; use `|` for alternatives"},
                "context": {"type": "integer", "description": "lines of context around each hit"},
                "scope": range,
                "case_insensitive": {"type": "boolean"},
                "max_matches": {"type": "integer"},
                "source": {"type": "string", "description": "document id, if several are registered"}
            }, "required": ["pattern"]}),
        ),
        spec(
            "Read",
            "Read a contiguous span of lines, by anchor (`start-end` or `doc:start-end`) or by offset and limit.",
            json!({"type": "object", "properties": {
                "anchor": {"type": "string"},
                "offset": {"type": "integer", "description": "first line to read"},
                "limit": {"type": "integer", "description": "maximum number of lines"}
            }}),
        ),
        spec(
            "Scan",
            "Cheap structural scan (headings, tables, numbered items). Returns line anchors only.",
            json!({"type": "object", "properties": {
                "pattern": {"type": "string"},
                "scope": range,
                "source": {"type": "string"}
            }, "required": ["pattern"]}),
        ),
        spec(
            "GetFileInfo",
            "Size and estimated token length of a source, for budgeting.",
            json!({"type": "object", "properties": {"source": {"type": "string"}}, "required": ["source"]}),
        ),
        spec(
            "Update",
            "Commit distilled statements to the epistemic state, each with the anchor of the lines that support it. Only the epistemic state is used to answer.",
            json!({"type": "object", "properties": {
                "units": {"type": "array", "items": {"type": "object", "properties": {
                    "content": {"type": "string"},
                    "anchor": {"type": "string"}
                }, "required": ["content", "anchor"]}}
            }, "required": ["units"]}),
        ),
        spec(
            "View",
            "Show the current epistemic state.",
            json!({"type": "object", "properties": {"state_id": {"type": "string"}}}),
        ),
        spec(
            "Evaluate",
            "Check whether the epistemic state suffices to answer the question. Stops exploration when it does.",
            json!({"type": "object", "properties": {}}),
        ),
    ];
    tools.extend([
        spec(
            "CountTokens",
            "Count tokens in a text.",
            json!({"type": "object", "properties": {
                    "text": {"type": "string"},
                    "model": {"type": "string", "description": "tokenizer name"}
                }, "required": ["text"]}),
        ),
        spec(
            "TodoWrite",
            "Replace the plan / todo list.",
            json!({"type": "object", "properties": {
                    "todos": {"type": "array", "items": {"type": "object", "properties": {
                        "content": {"type": "string"},
                        "status": {"type": "string", "enum": ["pending", "in_progress", "done"]}
                    }, "required": ["content", "status"]}}
                }, "required": ["todos"]}),
        ),
        spec(
            "NormalizeDocument",
            "Split overlong lines so that line anchors stay small. Invalidates earlier anchors.",
            json!({"type": "object", "properties": {
                    "source": {"type": "string"},
                    "max_length": {"type": "integer"}
                }, "required": ["source"]}),
        ),
    ]);
    tools
        .into_iter()
        .filter(|t| ActionKind::from_name(&t.name).is_some_and(|k| kinds.contains(&k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn call(name: &str, args: Value) -> ToolCall {
        ToolCall::new(name, args)
    }

    #[test]
    fn parses_simple_calls() {
        assert_eq!(
            parse_action(&call("Evaluate", json!({}))).unwrap(),
            Action::Evaluate
        );
        assert_eq!(
            parse_action(&call("Evaluate", Value::Null)).unwrap(),
            Action::Evaluate
        );
        assert_eq!(
            parse_action(&call("Grep", json!({"pattern": "x"}))).unwrap(),
            Action::grep("x")
        );
        assert_eq!(
            parse_action(&call("Fly", json!({}))),
            Err(ActionError::UnknownTool("Fly".into()))
        );
    }

    #[test]
    fn missing_and_invalid_arguments() {
        assert!(matches!(
            parse_action(&call("Grep", json!({}))),
            Err(ActionError::MissingArgument { argument, .. }) if argument == "pattern"
        ));
        assert!(matches!(
            parse_action(&call("Read", json!({}))),
            Err(ActionError::MissingArgument { argument, .. }) if argument == "anchor"
        ));
        assert!(matches!(
            parse_action(&call("Update", json!({"content": "  ", "anchor": "3-4"}))),
            Err(ActionError::InvalidArgument { argument, .. }) if argument == "content"
        ));
        assert!(matches!(
            parse_action(&call("Update", json!({"content": "x"}))),
            Err(ActionError::MissingArgument { argument, .. }) if argument == "anchor"
        ));
        assert!(matches!(
            parse_action(&call("Grep", Value::String("{broken".into()))),
            Err(ActionError::InvalidArgument { argument, .. }) if argument == "args"
        ));
        assert!(parse_action(&call("Read", json!({"anchor": "9-3"}))).is_err());
    }

    #[test]
    fn read_accepts_both_spellings() {
        let by_offset = parse_action(&call("Read", json!({"offset": 1216, "limit": 75}))).unwrap();
        assert_eq!(
            by_offset,
            Action::Read {
                anchor: None,
                offset: Some(1216),
                limit: Some(75)
            }
        );
        let by_anchor = parse_action(&call("Read", json!({"anchor": "doc.txt:5-9"}))).unwrap();
        let Action::Read {
            anchor: Some(AnchorRef::Full(a)),
            ..
        } = by_anchor
        else {
            panic!()
        };
        assert_eq!(
            (a.doc.as_str(), a.start_line, a.end_line),
            ("doc.txt", 5, 9)
        );
        let bare = parse_action(&call("Read", json!({"anchor": 7}))).unwrap();
        assert_eq!(bare, Action::read_lines(7, 7));
    }

    #[test]
    fn todo_string_form() {
        let a = parse_action(&call("TodoWrite", json!({"todos": "Plan: find it"}))).unwrap();
        assert_eq!(
            a,
            Action::TodoWrite {
                todos: vec![TodoItem {
                    content: "Plan: find it".into(),
                    status: TodoStatus::Pending
                }]
            }
        );
        assert!(parse_action(&call(
            "TodoWrite",
            json!({"todos": [{"content": "x", "status": "later"}]})
        ))
        .is_err());
    }

    #[test]
    fn update_batches() {
        let a = parse_action(&call(
            "Update",
            json!({"units": [{"content": "a", "anchor": "1-2"}, {"content": "b", "anchor": "d:3-3"}]}),
        ))
        .unwrap();
        let Action::Update { units } = a else {
            panic!()
        };
        assert_eq!(units.len(), 2);
    }

    #[test]
    fn classes_partition_kinds() {
        let forage: Vec<_> = ActionKind::ALL
            .into_iter()
            .filter(|k| k.class() == ActionClass::Forage)
            .collect();
        assert_eq!(forage.len(), 5);
        assert_eq!(tool_catalog(true).len(), 11);
        assert_eq!(tool_catalog(false).len(), 8);
        for tool in tool_catalog(true) {
            assert!(ActionKind::from_name(&tool.name).is_some());
        }
    }

    fn text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 |]{1,12}".prop_filter("nonblank", |s| !s.trim().is_empty())
    }

    fn range() -> impl Strategy<Value = LineRange> {
        (1usize..500, 0usize..20).prop_map(|(s, l)| LineRange::new(s, s + l))
    }

    fn anchor_ref() -> impl Strategy<Value = AnchorRef> {
        prop_oneof![
            range().prop_map(AnchorRef::Lines),
            (range(), 0u32..3).prop_map(|(r, rev)| AnchorRef::Full(
                Anchor::new(DocumentId::new("doc.txt"), r.start, r.end).with_revision(rev)
            )),
        ]
    }

    fn action() -> impl Strategy<Value = Action> {
        prop_oneof![
            (text(), proptest::option::of(text()))
                .prop_map(|(pattern, scope)| Action::Glob { pattern, scope }),
            (
                text(),
                proptest::option::of(0usize..5),
                proptest::option::of(range()),
                any::<bool>(),
                proptest::option::of(1usize..50),
                proptest::option::of(text())
            )
                .prop_map(
                    |(pattern, context, scope, case_insensitive, max_matches, source)| {
                        Action::Grep {
                            pattern,
                            context,
                            scope,
                            case_insensitive,
                            max_matches,
                            source,
                        }
                    }
                ),
            (anchor_ref(), proptest::option::of(1usize..100)).prop_map(|(a, limit)| Action::Read {
                anchor: Some(a),
                offset: None,
                limit
            }),
            (1usize..1000, proptest::option::of(1usize..100)).prop_map(|(o, limit)| Action::Read {
                anchor: None,
                offset: Some(o),
                limit
            }),
            (text(), proptest::option::of(range())).prop_map(|(pattern, scope)| Action::Scan {
                pattern,
                scope,
                source: None
            }),
            text().prop_map(|source| Action::GetFileInfo { source }),
            prop::collection::vec((text(), anchor_ref()), 1..4).prop_map(|units| Action::Update {
                units: units
                    .into_iter()
                    .map(|(c, a)| UpdateUnit::new(c, a))
                    .collect()
            }),
            proptest::option::of(text()).prop_map(|state_id| Action::View { state_id }),
            Just(Action::Evaluate),
            (text(), proptest::option::of(Just("words".to_string())))
                .prop_map(|(text, model)| Action::CountTokens { text, model }),
            prop::collection::vec(text(), 1..3).prop_map(|items| Action::TodoWrite {
                todos: items
                    .into_iter()
                    .map(|content| TodoItem {
                        content,
                        status: TodoStatus::InProgress
                    })
                    .collect()
            }),
            (text(), proptest::option::of(1usize..5000))
                .prop_map(|(source, max_length)| Action::NormalizeDocument { source, max_length }),
        ]
    }

    proptest! {
        #[test]
        fn wire_round_trip(a in action()) {
            prop_assert_eq!(parse_action(&a.to_tool_call()).unwrap(), a.clone());
            let json = serde_json::to_string(&a).unwrap();
            prop_assert_eq!(serde_json::from_str::<Action>(&json).unwrap(), a);
        }
    }
}
