use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completion request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Stable content key, used to match requests against recorded replies.
    pub fn key(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

impl ChatResponse {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            usage: None,
        }
    }

    /// Parse an OpenAI-style `choices[0].message.content` body.
    pub fn from_completion_json(body: &str) -> Result<Self, TransportError> {
        #[derive(Deserialize)]
        struct Msg {
            content: Option<String>,
        }
        #[derive(Deserialize)]
        struct Choice {
            message: Msg,
        }
        #[derive(Deserialize)]
        struct Body {
            choices: Vec<Choice>,
            usage: Option<Usage>,
        }
        let b: Body =
            serde_json::from_str(body).map_err(|e| TransportError::Malformed(e.to_string()))?;
        let content = b
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                TransportError::Malformed("response has no choices[0].message.content".into())
            })?;
        Ok(Self {
            content,
            usage: b.usage,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl TransportError {
    /// Timeouts, 429, 5xx and connection failures are retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Connection(_) => true,
            TransportError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            TransportError::Malformed(_) => false,
        }
    }
}

/// One attempt at a chat completion. Retrying is the caller's job.
pub trait Transport: Send + Sync {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError>;

    /// Human-readable endpoint for transcripts.
    fn endpoint(&self) -> String;
}

/// Chat-completion client over HTTP (`POST {base_url}/chat/completions`).
pub struct HttpTransport {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into(),
            api_key,
            agent: http_agent(timeout),
        }
    }
}

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &impl Serialize,
) -> Result<String, TransportError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let payload = serde_json::to_vec(body).map_err(|e| TransportError::Malformed(e.to_string()))?;
    let mut resp = req.send(&payload[..]).map_err(map_ureq_error)?;
    let code = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(map_ureq_error)?;
    if (200..300).contains(&code) {
        Ok(text)
    } else {
        Err(TransportError::Status { code, body: text })
    }
}

fn map_ureq_error(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::StatusCode(code) => TransportError::Status {
            code,
            body: String::new(),
        },
        other => TransportError::Connection(other.to_string()),
    }
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!(
        "{}/{}",
        base.trim_end_matches('/'),
        path.trim_start_matches('/')
    )
}

impl Transport for HttpTransport {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let url = join_url(&self.base_url, "chat/completions");
        let body = post_json(&self.agent, &url, self.api_key.as_deref(), req)?;
        ChatResponse::from_completion_json(&body)
    }

    fn endpoint(&self) -> String {
        self.base_url.clone()
    }
}
