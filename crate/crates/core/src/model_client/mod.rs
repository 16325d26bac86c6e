//! Chat-completion access: an OpenAI-compatible HTTP client, a scripted model
//! for offline runs, and a fixture replayer.

mod http;
mod replay;
mod scripted;
mod sse;

use std::pin::Pin;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};

pub use http::{backoff_delay, parse_completion_body, wire_request, HttpChatClient};
pub use replay::{request_hash, Fixture, FixtureRecorder, ReplayModel};
pub use scripted::{PatternRule, ScriptedModel};
pub use sse::{parse_sse_body, SseDecoder, SseItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub model_id: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u32,
    pub output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
}

impl ChatResponse {
    pub fn stop(content: impl Into<String>) -> ChatResponse {
        ChatResponse { content: content.into(), finish_reason: FinishReason::Stop, usage: Usage::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub auth_token_env: String,
    pub model_id: String,
    pub timeout_secs: f64,
    pub retries: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
}

fn default_retry_base_ms() -> u64 {
    1000
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> ProviderConfig {
        ProviderConfig {
            base_url: base_url.into(),
            auth_token_env: "PRAXIS_API_KEY".into(),
            model_id: model_id.into(),
            timeout_secs: 60.0,
            retries: 3,
            retry_base_ms: default_retry_base_ms(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(self.timeout_secs > 0.0) {
            return Err(ModelError::Config("timeout must be positive".into()));
        }
        if self.base_url.trim().is_empty() {
            return Err(ModelError::Config("base_url is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited by provider")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("conversation exceeds the model's context window")]
    OverLength,
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("scripted model has no reply left for this request")]
    Exhausted,
    #[error("no fixture recorded for request {0}")]
    NoFixture(String),
}

impl ModelError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ModelError::RateLimited | ModelError::Timeout | ModelError::Transport(_) => true,
            ModelError::Provider { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamEvent {
    Delta(String),
    Done(ChatResponse),
}

pub type ChatStream = Pin<Box<dyn Stream<Item = StreamEvent> + Send>>;

#[async_trait]
pub trait ChatModel: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError>;

    /// Ordered deltas followed by exactly one `Done`. The default emits the
    /// whole completion as a single delta.
    async fn stream_complete(&self, request: &ChatRequest) -> Result<ChatStream, ModelError> {
        let resp = self.complete(request).await?;
        let mut events = Vec::new();
        if !resp.content.is_empty() {
            events.push(StreamEvent::Delta(resp.content.clone()));
        }
        events.push(StreamEvent::Done(resp));
        Ok(Box::pin(stream::iter(events)))
    }
}

#[async_trait]
impl<T: ChatModel + ?Sized> ChatModel for std::sync::Arc<T> {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        (**self).complete(request).await
    }
    async fn stream_complete(&self, request: &ChatRequest) -> Result<ChatStream, ModelError> {
        (**self).stream_complete(request).await
    }
}

/// Drain a stream, returning the deltas and the terminal response.
pub async fn collect_stream(mut s: ChatStream) -> (Vec<String>, ChatResponse) {
    use futures::StreamExt;
    let mut deltas = Vec::new();
    while let Some(ev) = s.next().await {
        match ev {
            StreamEvent::Delta(d) => deltas.push(d),
            StreamEvent::Done(r) => return (deltas, r),
        }
    }
    let content = deltas.concat();
    (deltas, ChatResponse { content, finish_reason: FinishReason::Error, usage: Usage::default() })
}
