use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    estimate_usage, ChatBackend, ChatRequest, ChatResponse, GatewayError, ToolCall, Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Backoff {
    pub base_ms: u64,
    pub multiplier: f64,
    pub max_ms: u64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base_ms: 500,
            multiplier: 2.0,
            max_ms: 30_000,
        }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (0-based). Non-decreasing in `retry`
    /// for any multiplier ≥ 1.
    pub fn delay(&self, retry: u32) -> Duration {
        let ms = self.base_ms as f64 * self.multiplier.max(1.0).powi(retry as i32);
        Duration::from_millis(ms.min(self.max_ms as f64) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Base URL or full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer credential. `None` or an empty
    /// name means the endpoint needs no authentication.
    pub auth_env: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff: Backoff,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4.1".into(),
            auth_env: Some("OPENAI_API_KEY".into()),
            timeout_ms: 120_000,
            max_retries: 3,
            backoff: Backoff::default(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::InvalidRequest(
                "timeout_ms must be positive".into(),
            ));
        }
        if self.endpoint.is_empty() {
            return Err(GatewayError::InvalidRequest("endpoint is empty".into()));
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Connect(String),
}

impl std::fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Timeout => f.write_str("timed out"),
            Self::Connect(msg) => write!(f, "connection error: {msg}"),
        }
    }
}

/// One HTTP POST. Implementations must not retry on their own.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, TransportFailure>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, TransportFailure> {
        let mut request = self
            .agent
            .post(url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("content-type", "application/json");
        for (name, value) in headers {
            request = request.header(name.as_str(), value.as_str());
        }
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout,
            other => TransportFailure::Connect(other.to_string()),
        };
        let mut response = request.send(body).map_err(map_err)?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(map_err)?;
        Ok(HttpReply { status, body })
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    config: BackendConfig,
    transport: Box<dyn Transport>,
    sleeper: Box<dyn Sleeper>,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Self {
        Self::with_transport(
            config,
            Box::new(UreqTransport::default()),
            Box::new(ThreadSleeper),
        )
    }

    pub fn with_transport(
        config: BackendConfig,
        transport: Box<dyn Transport>,
        sleeper: Box<dyn Sleeper>,
    ) -> Self {
        Self {
            config,
            transport,
            sleeper,
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn credential(&self) -> Result<Option<String>, GatewayError> {
        let Some(var) = self.config.auth_env.as_deref().filter(|v| !v.is_empty()) else {
            return Ok(None);
        };
        match std::env::var(var) {
            Ok(value) if !value.trim().is_empty() => Ok(Some(value)),
            _ => Err(GatewayError::Auth {
                message: format!("credential variable {var} is not set"),
                sent: false,
            }),
        }
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || status == 408 || (500..=599).contains(&status)
}

impl ChatBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.config.validate()?;
        request.validate()?;
        let credential = self.credential()?;
        let mut headers = Vec::new();
        if let Some(key) = credential {
            headers.push(("authorization".to_string(), format!("Bearer {key}")));
        }
        let url = self.config.url();
        let body = request.wire_body(&self.config.model);
        let timeout = Duration::from_millis(self.config.timeout_ms);
        debug!("chat request to {url}: {body}");

        let mut attempts = 0;
        loop {
            attempts += 1;
            let last = match self.transport.post(&url, &headers, &body, timeout) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    debug!("chat response ({}): {}", reply.status, reply.body);
                    return parse_wire_response(&reply.body, request);
                }
                Ok(reply) if reply.status == 401 || reply.status == 403 => {
                    return Err(GatewayError::Auth {
                        message: format!("HTTP {}: {}", reply.status, reply.body),
                        sent: true,
                    });
                }
                Ok(reply) if retryable(reply.status) => {
                    format!("HTTP {}: {}", reply.status, reply.body)
                }
                Ok(reply) => {
                    return Err(GatewayError::Protocol(format!(
                        "HTTP {}: {}",
                        reply.status, reply.body
                    )));
                }
                Err(failure) => failure.to_string(),
            };
            if attempts > self.config.max_retries {
                return Err(GatewayError::Transport { attempts, last });
            }
            let delay = self.config.backoff.delay(attempts - 1);
            warn!("chat attempt {attempts} failed ({last}); retrying in {delay:?}");
            self.sleeper.sleep(delay);
        }
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Vec<WireToolCall>,
}

#[derive(Deserialize)]
struct WireToolCall {
    function: WireFunctionCall,
}

#[derive(Deserialize)]
struct WireFunctionCall {
    name: String,
    #[serde(default)]
    arguments: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Parses a chat-completions reply body.
pub(crate) fn parse_wire_response(
    body: &str,
    request: &ChatRequest,
) -> Result<ChatResponse, GatewayError> {
    let wire: WireResponse = serde_json::from_str(body)
        .map_err(|e| GatewayError::Protocol(format!("malformed response body: {e}")))?;
    let message = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::Protocol("response has no choices".into()))?
        .message;
    let tool_call = message.tool_calls.into_iter().next().map(|call| {
        let raw = call.function.arguments.unwrap_or_default();
        let args = if raw.trim().is_empty() {
            Value::Object(Default::default())
        } else {
            // Unparsable arguments are kept verbatim for the caller to reject.
            serde_json::from_str(&raw).unwrap_or(Value::String(raw))
        };
        ToolCall::new(call.function.name, args)
    });
    let text = message.content.filter(|t| !t.trim().is_empty());
    if text.is_none() && tool_call.is_none() {
        return Err(GatewayError::Protocol(
            "response carries neither text nor a tool call".into(),
        ));
    }
    let mut response = ChatResponse {
        text,
        tool_call,
        usage: Usage::default(),
    };
    response.usage = match wire.usage {
        Some(u) => Usage::new(u.prompt_tokens, u.completion_tokens),
        None => estimate_usage(request, Some(&response)),
    };
    Ok(response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn req() -> ChatRequest {
        ChatRequest::new(vec![Message::user("hi")])
    }

    #[test]
    fn parses_tool_call_with_usage() {
        let body = r#"{"choices":[{"message":{"content":null,"tool_calls":[{"id":"c1","type":"function","function":{"name":"Grep","arguments":"{\"pattern\":\"x\"}"}}]}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;
        let r = parse_wire_response(body, &req()).unwrap();
        let call = r.tool_call.unwrap();
        assert_eq!(call.name, "Grep");
        assert_eq!(call.args["pattern"], "x");
        assert_eq!(r.usage, Usage::new(12, 3));
    }

    #[test]
    fn missing_usage_is_estimated() {
        let body = r#"{"choices":[{"message":{"content":"hello there"}}]}"#;
        let r = parse_wire_response(body, &req()).unwrap();
        assert!(r.usage.estimated);
        assert!(r.usage.input_tokens > 0);
        assert_eq!(r.usage.output_tokens, 3);
    }

    #[test]
    fn malformed_bodies() {
        for body in [
            "not json",
            r#"{"choices":[]}"#,
            r#"{"choices":[{"message":{"content":""}}]}"#,
        ] {
            assert!(matches!(
                parse_wire_response(body, &req()),
                Err(GatewayError::Protocol(_))
            ));
        }
    }

    #[test]
    fn backoff_is_non_decreasing_and_capped() {
        let b = Backoff {
            base_ms: 100,
            multiplier: 2.0,
            max_ms: 1_000,
        };
        let delays: Vec<u64> = (0..8).map(|i| b.delay(i).as_millis() as u64).collect();
        assert_eq!(delays, vec![100, 200, 400, 800, 1000, 1000, 1000, 1000]);
    }

    #[test]
    fn url_joining() {
        let mut c = BackendConfig {
            endpoint: "http://localhost:8000/v1/".into(),
            ..Default::default()
        };
        assert_eq!(c.url(), "http://localhost:8000/v1/chat/completions");
        c.endpoint = "http://h/v1/chat/completions".into();
        assert_eq!(c.url(), "http://h/v1/chat/completions");
    }
}
