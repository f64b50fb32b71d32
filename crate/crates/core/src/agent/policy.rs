use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{AgentAction, PolicyContext, ADVISORY_MARKER};
use crate::gateway::{
    mock_token_count, with_retries, ChatBackend, ChatContent, ChatMessage, ChatRequest,
    ChatResponse, GatewayError, Role, SamplingOptions, TokenUsage, ToolCallPayload,
};
use crate::workflow::{SchemaRegistry, ToolInvocation};

/// A tool-call payload whose arguments could not be read.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("arguments for `{tool}` could not be parsed: {message}")]
pub struct ActionParseError {
    pub tool: String,
    pub message: String,
}

/// One sampled action with the tokens it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    pub action: Result<AgentAction, ActionParseError>,
    pub usage: TokenUsage,
}

/// Action sampler conditioned on the query, exemplars, history and schemas.
pub trait Policy: Send + Sync {
    fn next_action(&self, ctx: &PolicyContext<'_>) -> Result<PolicyStep, GatewayError>;
}

/// Maps a chat response to an action. Text is final; tool calls keep their
/// name (unknown tools are left for the environment to reject) and have
/// their arguments coerced to the declared types where lossless.
pub fn parse_action(
    response: &ChatResponse,
    schemas: &SchemaRegistry,
) -> Result<AgentAction, ActionParseError> {
    let call = match &response.content {
        ChatContent::Text(text) => return Ok(AgentAction::FinalResponse(text.clone())),
        ChatContent::ToolCall(call) => call,
    };
    let err = |message: String| ActionParseError {
        tool: call.name.clone(),
        message,
    };
    let raw = call.arguments.trim();
    let value: Value = if raw.is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(raw).map_err(|e| err(e.to_string()))?
    };
    let Value::Object(map) = value else {
        return Err(err(format!("expected a JSON object, got {value}")));
    };
    let mut invocation = ToolInvocation {
        tool: call.name.clone(),
        args: map.into_iter().collect(),
    };
    if let Some(schema) = schemas.get(&call.name) {
        invocation.args = schema.coerce(&invocation.args);
    }
    Ok(AgentAction::ToolCall(invocation))
}

/// A script entry: a tool call or a final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    Final {
        #[serde(rename = "final")]
        text: String,
    },
    Call(ToolInvocation),
}

impl ScriptStep {
    fn action(&self) -> AgentAction {
        match self {
            ScriptStep::Final { text } => AgentAction::FinalResponse(text.clone()),
            ScriptStep::Call(inv) => AgentAction::ToolCall(inv.clone()),
        }
    }
}

/// Script file: `{"steps": [...], "on_advisory": {tool: [...]}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
    /// Corrective calls issued when `tool` is blocked, after which the
    /// blocked call is retried.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub on_advisory: BTreeMap<String, Vec<ScriptStep>>,
}

impl Script {
    pub fn from_calls(calls: impl IntoIterator<Item = ToolInvocation>, final_text: &str) -> Self {
        let mut steps: Vec<ScriptStep> = calls.into_iter().map(ScriptStep::Call).collect();
        steps.push(ScriptStep::Final {
            text: final_text.to_string(),
        });
        Self {
            steps,
            on_advisory: BTreeMap::new(),
        }
    }
}

/// Deterministic policy replaying a script. The next action is a pure
/// function of the history, so one policy can drive concurrent episodes.
/// When the script runs out it answers with an empty final response.
///
/// Token usage is the documented stand-in `ceil(chars / 4)` over the
/// system prompt plus history (prompt) and the emitted action (completion).
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    script: Script,
}

impl ScriptedPolicy {
    pub fn new(script: Script) -> Self {
        Self { script }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let script = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self::new(script))
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    fn pending(&self, ctx: &PolicyContext<'_>) -> VecDeque<ScriptStep> {
        let mut queue: VecDeque<ScriptStep> = self.script.steps.iter().cloned().collect();
        for entry in ctx.history.entries() {
            queue.pop_front();
            let AgentAction::ToolCall(call) = &entry.action else {
                continue;
            };
            if !entry.observation.starts_with(ADVISORY_MARKER) {
                continue;
            }
            if let Some(fix) = self.script.on_advisory.get(&call.tool) {
                queue.push_front(ScriptStep::Call(call.clone()));
                for step in fix.iter().rev() {
                    queue.push_front(step.clone());
                }
            }
        }
        queue
    }
}

impl Policy for ScriptedPolicy {
    fn next_action(&self, ctx: &PolicyContext<'_>) -> Result<PolicyStep, GatewayError> {
        let action = self
            .pending(ctx)
            .front()
            .map(ScriptStep::action)
            .unwrap_or(AgentAction::FinalResponse(String::new()));
        let mut prompt_tokens = mock_token_count(ctx.system_prompt) + mock_token_count(ctx.query);
        for entry in ctx.history.entries() {
            prompt_tokens +=
                mock_token_count(&entry.action.to_string()) + mock_token_count(&entry.observation);
        }
        let usage = TokenUsage::new(prompt_tokens, mock_token_count(&action.to_string()));
        Ok(PolicyStep {
            action: Ok(action),
            usage,
        })
    }
}

/// Policy backed by a chat model. Each step sends the system prompt, the
/// query and the history as tool-call/tool-result message pairs.
pub struct ChatPolicy<'a> {
    backend: &'a dyn ChatBackend,
    options: SamplingOptions,
    attempts: u32,
    base_delay: Duration,
}

impl<'a> ChatPolicy<'a> {
    pub fn new(backend: &'a dyn ChatBackend) -> Self {
        Self {
            backend,
            options: SamplingOptions::default(),
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }

    pub fn with_options(mut self, options: SamplingOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_retries(mut self, attempts: u32, base_delay: Duration) -> Self {
        self.attempts = attempts;
        self.base_delay = base_delay;
        self
    }

    pub fn request(&self, ctx: &PolicyContext<'_>) -> ChatRequest {
        let mut messages = vec![
            ChatMessage::system(ctx.system_prompt),
            ChatMessage::user(ctx.query),
        ];
        for (k, entry) in ctx.history.entries().iter().enumerate() {
            let id = format!("call_{}", k + 1);
            let mut assistant = ChatMessage::new(Role::Assistant, "");
            match &entry.action {
                AgentAction::ToolCall(call) => assistant.tool_calls.push(ToolCallPayload {
                    id: id.clone(),
                    name: call.tool.clone(),
                    arguments: serde_json::to_string(&call.args).expect("args serialize"),
                }),
                AgentAction::FinalResponse(text) => assistant.content = text.clone(),
            }
            messages.push(assistant);
            let mut result = ChatMessage::new(Role::Tool, entry.observation.clone());
            result.tool_call_id = Some(id);
            messages.push(result);
        }
        ChatRequest {
            messages,
            tools: ctx.schemas.iter().cloned().collect(),
            options: self.options,
        }
    }
}

impl Policy for ChatPolicy<'_> {
    fn next_action(&self, ctx: &PolicyContext<'_>) -> Result<PolicyStep, GatewayError> {
        let request = self.request(ctx);
        let response = with_retries(self.attempts, self.base_delay, || {
            self.backend.complete(&request)
        })?;
        Ok(PolicyStep {
            action: parse_action(&response, ctx.schemas),
            usage: response.usage,
        })
    }
}
