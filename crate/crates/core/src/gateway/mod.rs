//! Chat and embedding providers.
//!
//! Two roles sit behind these traits: the action policy and workflow filter
//! ([`ChatBackend`]) and the query encoder ([`Embedder`]). Mock backends are
//! pure functions of their inputs so every suite runs offline; the remote
//! backend speaks the common chat-completions HTTP protocol.

mod mock;
mod remote;

use std::ops::{Add, AddAssign};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::EmbeddingVector;
use crate::workflow::ToolSchema;

pub use mock::{
    mock_token_count, EchoFilterChat, MockChat, MockEmbedder, MockReply, MOCK_EMBEDDING_DIM,
};
pub use remote::{
    chat_body, parse_chat_response, tool_parameters, RemoteChat, RemoteConfig, RemoteEmbedder,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {message}")]
    Malformed { message: String, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: Self) -> Self {
        TokenUsage::new(
            self.prompt_tokens + rhs.prompt_tokens,
            self.completion_tokens + rhs.completion_tokens,
        )
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A tool call as emitted by a chat model. `arguments` is the raw JSON text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallPayload {
    pub id: String,
    pub name: String,
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }
}

/// Sampling fields passed through verbatim; `None` leaves provider defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub tools: Vec<ToolSchema>,
    pub options: SamplingOptions,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            ..Default::default()
        }
    }

    pub fn last_user_message(&self) -> Option<&ChatMessage> {
        self.messages.iter().rev().find(|m| m.role == Role::User)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatContent {
    ToolCall(ToolCallPayload),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: ChatContent,
    pub usage: TokenUsage,
}

impl ChatResponse {
    pub fn text(&self) -> Option<&str> {
        match &self.content {
            ChatContent::Text(t) => Some(t),
            ChatContent::ToolCall(_) => None,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn identity(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

pub trait Embedder: Send + Sync {
    fn identity(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Chat,
    Embed,
}

/// One structured record per gateway call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallEvent {
    pub backend: String,
    pub kind: CallKind,
    pub digest: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    pub ok: bool,
}

/// Shared, append-only call log. Cloning shares the same buffer.
#[derive(Debug, Clone, Default)]
pub struct CallLog {
    events: Arc<Mutex<Vec<CallEvent>>>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, event: CallEvent) {
        tracing::debug!(
            backend = %event.backend,
            kind = ?event.kind,
            digest = %event.digest,
            prompt_tokens = event.usage.prompt_tokens,
            completion_tokens = event.usage.completion_tokens,
            latency_ms = event.latency_ms,
            ok = event.ok,
            "gateway call"
        );
        self.events.lock().expect("call log poisoned").push(event);
    }

    pub fn events(&self) -> Vec<CallEvent> {
        self.events.lock().expect("call log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().expect("call log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Retries transient failures with exponential backoff starting at `base_delay`.
pub fn with_retries<T>(
    attempts: u32,
    base_delay: Duration,
    mut call: impl FnMut() -> Result<T, GatewayError>,
) -> Result<T, GatewayError> {
    let attempts = attempts.max(1);
    let mut delay = base_delay;
    for attempt in 1..=attempts {
        match call() {
            Err(e) if e.is_retryable() && attempt < attempts => {
                tracing::warn!(attempt, error = %e, "retrying gateway call");
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
                delay *= 2;
            }
            other => return other,
        }
    }
    unreachable!("loop returns on the last attempt")
}
