// SPDX-License-Identifier: Apache-2.0

//! The chat-completion contract and its implementations.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::{ApiStyle, ProviderConfig, TEMPERATURE};

/// One system + user exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("missing credential: environment variable {0} is not set")]
    Credential(String),
}

impl ChatError {
    /// Whether another attempt could succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            ChatError::Timeout(_) | ChatError::Transport(_) => true,
            ChatError::Status { status, .. } => *status == 429 || *status >= 500,
            ChatError::Malformed(_) | ChatError::Credential(_) => false,
        }
    }
}

/// Text in, text out. Vendor request shaping lives behind this.
pub trait ChatBackend: Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError>;
}

/// The JSON body sent for `request` under `api`. Temperature is always 0.
pub fn request_body(api: ApiStyle, request: &ChatRequest) -> Value {
    match api {
        ApiStyle::OpenAi => json!({
            "model": request.model,
            "temperature": TEMPERATURE,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        }),
        ApiStyle::Anthropic => json!({
            "model": request.model,
            "temperature": TEMPERATURE,
            "max_tokens": 4096,
            "system": request.system,
            "messages": [{"role": "user", "content": request.user}],
        }),
    }
}

fn response_text(api: ApiStyle, body: &Value) -> Result<String, ChatError> {
    let text = match api {
        ApiStyle::OpenAi => body.pointer("/choices/0/message/content").and_then(Value::as_str),
        ApiStyle::Anthropic => body.pointer("/content/0/text").and_then(Value::as_str),
    };
    text.map(str::to_string)
        .ok_or_else(|| ChatError::Malformed(body.to_string().chars().take(200).collect()))
}

/// Talks to a real endpoint over HTTPS.
pub struct HttpBackend {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: ProviderConfig) -> HttpBackend {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { config, agent }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let mut call = self.agent.post(&self.config.endpoint).header("content-type", "application/json");
        if let Some(var) = &self.config.credential_env {
            let key = std::env::var(var).map_err(|_| ChatError::Credential(var.clone()))?;
            call = match self.config.api {
                ApiStyle::OpenAi => call.header("authorization", &format!("Bearer {key}")),
                ApiStyle::Anthropic => call.header("x-api-key", &key).header("anthropic-version", "2023-06-01"),
            };
        }
        let mut resp = call.send_json(request_body(self.config.api, request)).map_err(|e| match e {
            ureq::Error::Timeout(t) => ChatError::Timeout(t.to_string()),
            other => ChatError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ChatError::Status { status, body: body.chars().take(500).collect() });
        }
        let body: Value = resp.body_mut().read_json().map_err(|e| ChatError::Malformed(e.to_string()))?;
        response_text(self.config.api, &body)
    }
}

/// Canned responses keyed by the user message, for tests and fixture
/// generation. Unknown messages get the fallback, or a transport error.
#[derive(Default)]
pub struct ScriptedBackend {
    replies: BTreeMap<String, Result<String, ChatError>>,
    fallback: Option<String>,
    calls: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new() -> ScriptedBackend {
        ScriptedBackend::default()
    }

    pub fn with_fallback(text: impl Into<String>) -> ScriptedBackend {
        ScriptedBackend { fallback: Some(text.into()), ..ScriptedBackend::default() }
    }

    pub fn reply(&mut self, user: impl Into<String>, result: Result<String, ChatError>) {
        self.replies.insert(user.into(), result);
    }

    /// Every request received so far, in order.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        self.calls.lock().unwrap_or_else(|p| p.into_inner()).push(request.clone());
        match (self.replies.get(&request.user), &self.fallback) {
            (Some(r), _) => r.clone(),
            (None, Some(f)) => Ok(f.clone()),
            (None, None) => Err(ChatError::Transport("no scripted reply".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest { model: "m".into(), system: "s".into(), user: "u".into() }
    }

    #[test]
    fn bodies_pin_temperature() {
        for api in [ApiStyle::OpenAi, ApiStyle::Anthropic] {
            let b = request_body(api, &req());
            assert_eq!(b["temperature"], json!(0.0));
            assert_eq!(b["model"], "m");
        }
    }

    #[test]
    fn parses_both_shapes() {
        let o = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]});
        assert_eq!(response_text(ApiStyle::OpenAi, &o).unwrap(), "hi");
        let a = json!({"content": [{"type": "text", "text": "yo"}]});
        assert_eq!(response_text(ApiStyle::Anthropic, &a).unwrap(), "yo");
        assert!(matches!(response_text(ApiStyle::OpenAi, &a), Err(ChatError::Malformed(_))));
    }

    #[test]
    fn transient_classes() {
        assert!(ChatError::Timeout("t".into()).is_transient());
        assert!(ChatError::Status { status: 503, body: String::new() }.is_transient());
        assert!(!ChatError::Status { status: 401, body: String::new() }.is_transient());
    }
}
