//! Chat-completion gateway.
//!
//! Every model call (acting policy, gap diagnosis, answer, baseline) goes
//! through a [`ChatBackend`]. [`HttpBackend`] speaks the OpenAI-compatible
//! chat-completions dialect with bounded retries; [`MockBackend`] and
//! [`FnBackend`] are deterministic stand-ins for tests and replay.
//! [`CostLedger`] collects per-call token usage for cost accounting.

mod http;
mod ledger;
mod mock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::document::estimate_tokens;

pub use http::{
    BackendConfig, Backoff, HttpBackend, HttpReply, Sleeper, ThreadSleeper, Transport,
    TransportFailure, UreqTransport,
};
pub use ledger::{tracked_chat, CallKind, CostLedger, LedgerEntry};
pub use mock::{FnBackend, MockBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// A function the model may call, described by a JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub args: Value,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, args: Value) -> Self {
        Self {
            name: name.into(),
            args,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Counted locally rather than reported by the provider.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub estimated: bool,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
            estimated: false,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl std::ops::Add for Usage {
    type Output = Usage;

    fn add(self, rhs: Usage) -> Usage {
        Usage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
            estimated: self.estimated || rhs.estimated,
        }
    }
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<ToolSpec>>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2_048;

impl ChatRequest {
    pub fn new(messages: Vec<Message>) -> Self {
        Self {
            messages,
            tools: None,
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            seed: None,
        }
    }

    pub fn with_tools(mut self, tools: Vec<ToolSpec>) -> Self {
        self.tools = Some(tools);
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed.filter(|&s| s != 0);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("no messages".into()))?;
        if first.role == Role::Assistant {
            return Err(GatewayError::InvalidRequest(
                "first message must come from the system or the user".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} is not a finite non-negative number",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Concatenated message contents; what a sentinel-leak check inspects.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Chat-completions JSON body. Field order is fixed so equal requests
    /// serialize to identical bytes.
    pub fn wire_body(&self, model: &str) -> String {
        #[derive(Serialize)]
        struct WireFunction<'a> {
            name: &'a str,
            description: &'a str,
            parameters: &'a Value,
        }
        #[derive(Serialize)]
        struct WireTool<'a> {
            #[serde(rename = "type")]
            kind: &'static str,
            function: WireFunction<'a>,
        }
        #[derive(Serialize)]
        struct WireRequest<'a> {
            model: &'a str,
            messages: &'a [Message],
            temperature: f64,
            max_tokens: u32,
            #[serde(skip_serializing_if = "Option::is_none")]
            seed: Option<u64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            tools: Option<Vec<WireTool<'a>>>,
        }
        let tools = self.tools.as_ref().map(|tools| {
            tools
                .iter()
                .map(|t| WireTool {
                    kind: "function",
                    function: WireFunction {
                        name: &t.name,
                        description: &t.description,
                        parameters: &t.parameters,
                    },
                })
                .collect()
        });
        serde_json::to_string(&WireRequest {
            model,
            messages: &self.messages,
            temperature: self.temperature,
            max_tokens: self.max_output_tokens,
            seed: self.seed,
            tools,
        })
        .expect("request serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default)]
    pub usage: Usage,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            tool_call: None,
            usage: Usage::default(),
        }
    }

    pub fn tool_call(call: ToolCall) -> Self {
        Self {
            text: None,
            tool_call: Some(call),
            usage: Usage::default(),
        }
    }

    fn output_text(&self) -> String {
        let mut out = self.text.clone().unwrap_or_default();
        if let Some(call) = &self.tool_call {
            out.push_str(&call.name);
            out.push_str(&call.args.to_string());
        }
        out
    }
}

/// Locally counted usage for a request/response pair. The input side counts
/// the serialized messages and tool schemas; sampling parameters are not
/// billed.
pub fn estimate_usage(request: &ChatRequest, response: Option<&ChatResponse>) -> Usage {
    let prompt =
        serde_json::to_string(&(&request.messages, &request.tools)).expect("request serializes");
    Usage {
        input_tokens: estimate_tokens(&prompt) as u64,
        output_tokens: response.map_or(0, |r| estimate_tokens(&r.output_text()) as u64),
        estimated: true,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("authentication failed: {message}")]
    Auth { message: String, sent: bool },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
}

impl GatewayError {
    /// Whether the request reached a backend, in which case its input side is
    /// billed.
    pub fn reached_backend(&self) -> bool {
        match self {
            Self::Transport { attempts, .. } => *attempts > 0,
            Self::Auth { sent, .. } => *sent,
            Self::Protocol(_) => true,
            Self::InvalidRequest(_) | Self::ScriptExhausted => false,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).chat(request)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).chat(request)
    }
}
