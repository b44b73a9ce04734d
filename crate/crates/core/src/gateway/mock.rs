use std::sync::Mutex;

use super::{estimate_usage, ChatBackend, ChatRequest, ChatResponse, GatewayError, ToolCall};

/// Replays a fixed list of responses in order and records every request.
///
/// Usage is always counted locally from the request and the canned response,
/// so two runs over the same inputs produce the same numbers.
#[derive(Debug, Default)]
pub struct MockBackend {
    script: Vec<ChatResponse>,
    cursor: Mutex<usize>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl MockBackend {
    pub fn new(script: Vec<ChatResponse>) -> Self {
        Self {
            script,
            cursor: Mutex::new(0),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(texts.into_iter().map(ChatResponse::text).collect())
    }

    pub fn tool_calls(calls: impl IntoIterator<Item = ToolCall>) -> Self {
        Self::new(calls.into_iter().map(ChatResponse::tool_call).collect())
    }

    /// Next canned response, without a request.
    pub fn mock_next(&self) -> Result<ChatResponse, GatewayError> {
        let mut cursor = self.cursor.lock().expect("mock cursor poisoned");
        let response = self
            .script
            .get(*cursor)
            .cloned()
            .ok_or(GatewayError::ScriptExhausted)?;
        *cursor += 1;
        Ok(response)
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - *self.cursor.lock().expect("mock cursor poisoned")
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().expect("mock log poisoned").clone()
    }
}

impl ChatBackend for MockBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        self.requests
            .lock()
            .expect("mock log poisoned")
            .push(request.clone());
        let mut response = self.mock_next()?;
        response.usage = estimate_usage(request, Some(&response));
        Ok(response)
    }
}

/// A backend computed by a closure. Responses reporting zero usage get a
/// local estimate.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, GatewayError> + Send + Sync,
{
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let mut response = (self.0)(request)?;
        if response.usage.total() == 0 {
            response.usage = estimate_usage(request, Some(&response));
        }
        Ok(response)
    }
}
