//! Chat-completions and embeddings over HTTP.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    CallEvent, CallKind, CallLog, ChatBackend, ChatContent, ChatMessage, ChatRequest, ChatResponse,
    Embedder, GatewayError, Role, TokenUsage, ToolCallPayload,
};
use crate::digest::sha256_hex;
use crate::retrieval::EmbeddingVector;
use crate::workflow::{ArgType, ToolSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
) -> Result<Value, GatewayError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| GatewayError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| GatewayError::Transport(e.to_string()))?;
    match status {
        200..=299 => serde_json::from_str(&text).map_err(|e| GatewayError::Malformed {
            message: e.to_string(),
            body: text,
        }),
        401 | 403 => Err(GatewayError::Auth(format!("HTTP {status}: {text}"))),
        408 | 429 | 500..=599 => Err(GatewayError::Transport(format!("HTTP {status}: {text}"))),
        _ => Err(GatewayError::InvalidRequest(format!(
            "HTTP {status}: {text}"
        ))),
    }
}

/// JSON-schema `parameters` object for a tool.
pub fn tool_parameters(schema: &ToolSchema) -> Value {
    let mut properties = serde_json::Map::new();
    for arg in &schema.args {
        let mut prop = match arg.ty {
            ArgType::String => json!({"type": "string"}),
            ArgType::Integer => json!({"type": "integer"}),
            ArgType::Real => json!({"type": "number"}),
            ArgType::Boolean => json!({"type": "boolean"}),
            ArgType::ListOfReal => json!({"type": "array", "items": {"type": "number"}}),
            ArgType::Timestamp => {
                json!({"type": "string", "description": "timestamp, YYYY-MM-DDTHH:MM"})
            }
        };
        if let Some(options) = &arg.options {
            prop["enum"] = json!(options);
        }
        properties.insert(arg.name.clone(), prop);
    }
    let required: Vec<&str> = schema
        .args
        .iter()
        .filter(|a| a.required)
        .map(|a| a.name.as_str())
        .collect();
    json!({"type": "object", "properties": properties, "required": required})
}

fn message_json(m: &ChatMessage) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut out = json!({"role": role, "content": m.content});
    if !m.tool_calls.is_empty() {
        out["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": {"name": c.name, "arguments": c.arguments},
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        out["tool_call_id"] = json!(id);
    }
    out
}

/// Request body for `POST {endpoint}/chat/completions`.
pub fn chat_body(model: &str, request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": request.messages.iter().map(message_json).collect::<Vec<_>>(),
    });
    if !request.tools.is_empty() {
        body["tools"] = request
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": tool_parameters(t),
                    }
                })
            })
            .collect();
    }
    if let Some(t) = request.options.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(s) = request.options.seed {
        body["seed"] = json!(s);
    }
    body
}

/// Interprets a chat-completions response body. Only the first choice and
/// its first tool call are used.
pub fn parse_chat_response(body: &Value) -> Result<ChatResponse, GatewayError> {
    let malformed = |message: &str| GatewayError::Malformed {
        message: message.to_string(),
        body: body.to_string(),
    };
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| malformed("missing choices[0].message"))?;
    let usage = TokenUsage::new(
        body.pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
        body.pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    );
    let tool_calls = message.get("tool_calls").and_then(Value::as_array);
    let content = match tool_calls.and_then(|calls| calls.first()) {
        Some(call) => {
            if tool_calls.map_or(0, Vec::len) > 1 {
                tracing::warn!("response carried several tool calls; using the first");
            }
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed("tool call without function name"))?;
            let arguments = match call.pointer("/function/arguments") {
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => "{}".to_string(),
            };
            ChatContent::ToolCall(ToolCallPayload {
                id: call
                    .get("id")
                    .and_then(Value::as_str)
                    .unwrap_or("call_0")
                    .to_string(),
                name: name.to_string(),
                arguments,
            })
        }
        None => ChatContent::Text(
            message
                .get("content")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
        ),
    };
    Ok(ChatResponse { content, usage })
}

pub struct RemoteChat {
    config: RemoteConfig,
    agent: ureq::Agent,
    identity: String,
    log: CallLog,
}

impl RemoteChat {
    pub fn new(config: RemoteConfig) -> Self {
        Self {
            agent: agent(Duration::from_secs(config.timeout_secs)),
            identity: format!("remote:{}", config.model),
            config,
            log: CallLog::default(),
        }
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = log;
        self
    }
}

impl ChatBackend for RemoteChat {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if request.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("empty message list".into()));
        }
        let body = chat_body(&self.config.model, request);
        let started = Instant::now();
        let url = format!(
            "{}/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        );
        let result = post_json(&self.agent, &url, self.config.api_key.as_deref(), &body)
            .and_then(|v| parse_chat_response(&v));
        if let Err(GatewayError::Malformed { message, body }) = &result {
            tracing::error!(%message, %body, "malformed chat response");
        }
        self.log.record(CallEvent {
            backend: self.identity.clone(),
            kind: CallKind::Chat,
            digest: sha256_hex(body.to_string()),
            usage: result.as_ref().map(|r| r.usage).unwrap_or_default(),
            latency_ms: started.elapsed().as_millis() as u64,
            ok: result.is_ok(),
        });
        result
    }
}

pub struct RemoteEmbedder {
    config: RemoteConfig,
    agent: ureq::Agent,
    identity: String,
    dimension: usize,
    log: CallLog,
}

impl RemoteEmbedder {
    /// `dimension` is the provider's vector length for the configured model.
    pub fn new(config: RemoteConfig, dimension: usize) -> Self {
        let model = config
            .embedding_model
            .clone()
            .unwrap_or_else(|| config.model.clone());
        Self {
            agent: agent(Duration::from_secs(config.timeout_secs)),
            identity: format!("remote:{model}"),
            config,
            dimension,
            log: CallLog::default(),
        }
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = log;
        self
    }
}

impl Embedder for RemoteEmbedder {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "cannot embed empty text".into(),
            ));
        }
        let model = self.identity.trim_start_matches("remote:");
        let body = json!({"model": model, "input": text});
        let url = format!("{}/embeddings", self.config.endpoint.trim_end_matches('/'));
        let started = Instant::now();
        let result =
            post_json(&self.agent, &url, self.config.api_key.as_deref(), &body).and_then(|v| {
                let values = v
                    .pointer("/data/0/embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| GatewayError::Malformed {
                        message: "missing data[0].embedding".into(),
                        body: v.to_string(),
                    })?;
                let components: Option<Vec<f64>> = values.iter().map(Value::as_f64).collect();
                let components = components.ok_or_else(|| GatewayError::Malformed {
                    message: "non-numeric embedding component".into(),
                    body: v.to_string(),
                })?;
                EmbeddingVector::new(components).map_err(|e| GatewayError::Malformed {
                    message: e.to_string(),
                    body: v.to_string(),
                })
            });
        self.log.record(CallEvent {
            backend: self.identity.clone(),
            kind: CallKind::Embed,
            digest: sha256_hex(text),
            usage: TokenUsage::default(),
            latency_ms: started.elapsed().as_millis() as u64,
            ok: result.is_ok(),
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::{ArgSpec, ToolKind};

    #[test]
    fn request_body_shape() {
        let schema = ToolSchema::new(
            "run_hosting_capacity",
            "Dynamic hosting capacity",
            vec![
                ArgSpec::required("norm", ArgType::String).with_options(&["l1", "l2", "linf"]),
                ArgSpec::optional("tolerance", ArgType::Real),
            ],
            ToolKind::Write,
        )
        .unwrap();
        let mut req = ChatRequest::new(vec![ChatMessage::system("s"), ChatMessage::user("q")]);
        req.tools = vec![schema];
        req.options.temperature = Some(0.2);
        let body = chat_body("m", &req);
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][1], json!({"role": "user", "content": "q"}));
        let params = &body["tools"][0]["function"]["parameters"];
        assert_eq!(
            params["properties"]["norm"]["enum"],
            json!(["l1", "l2", "linf"])
        );
        assert_eq!(params["required"], json!(["norm"]));
        assert_eq!(body["temperature"], json!(0.2));
        assert!(body.get("seed").is_none());
    }

    #[test]
    fn parses_tool_calls_and_text() {
        let body = json!({
            "choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [
                {"id": "c1", "type": "function", "function": {"name": "get_voltages", "arguments": "{}"}}
            ]}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 3}
        });
        let resp = parse_chat_response(&body).unwrap();
        assert_eq!(resp.usage, TokenUsage::new(10, 3));
        assert!(matches!(resp.content, ChatContent::ToolCall(ref c) if c.name == "get_voltages"));

        let text = json!({"choices": [{"message": {"content": "done"}}]});
        assert_eq!(parse_chat_response(&text).unwrap().text(), Some("done"));

        assert!(matches!(
            parse_chat_response(&json!({"error": "x"})),
            Err(GatewayError::Malformed { .. })
        ));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let chat = RemoteChat::new(RemoteConfig {
            endpoint: "http://127.0.0.1:9".into(),
            model: "m".into(),
            embedding_model: None,
            api_key: None,
            timeout_secs: 2,
        });
        let err = chat
            .complete(&ChatRequest::new(vec![ChatMessage::user("hi")]))
            .unwrap_err();
        assert!(err.is_retryable(), "{err:?}");
    }
}
