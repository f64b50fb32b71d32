use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    CallEvent, CallKind, CallLog, ChatBackend, ChatContent, ChatRequest, ChatResponse, Embedder,
    GatewayError, TokenUsage, ToolCallPayload,
};
use crate::digest::sha256_hex;
use crate::retrieval::EmbeddingVector;

pub const MOCK_EMBEDDING_DIM: usize = 64;

/// Stand-in token count: characters divided by four, rounded up.
/// Not a tokenizer.
pub fn mock_token_count(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// A scripted reply, as stored in mock script files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockReply {
    ToolCall { name: String, arguments: Value },
    Text(String),
}

/// Chat backend answering from a table keyed by the SHA-256 hex digest of
/// the last user message. Unknown digests get a plain-text reply so
/// episodes always terminate.
#[derive(Debug, Clone, Default)]
pub struct MockChat {
    script: BTreeMap<String, MockReply>,
    log: CallLog,
}

pub const MOCK_DEFAULT_REPLY: &str = "no script entry";

impl MockChat {
    pub fn new(script: BTreeMap<String, MockReply>) -> Self {
        Self {
            script,
            log: CallLog::default(),
        }
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = log;
        self
    }

    /// Script keyed by raw user-message text instead of digests.
    pub fn from_messages<S: AsRef<str>>(entries: impl IntoIterator<Item = (S, MockReply)>) -> Self {
        Self::new(
            entries
                .into_iter()
                .map(|(msg, reply)| (sha256_hex(msg.as_ref()), reply))
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::InvalidRequest(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text).map_err(|e| GatewayError::Malformed {
            message: format!("mock script {}: {e}", path.display()),
            body: text.clone(),
        })?;
        Ok(Self::new(script))
    }
}

fn prompt_tokens(request: &ChatRequest) -> u64 {
    request
        .messages
        .iter()
        .map(|m| mock_token_count(&m.content))
        .sum()
}

impl ChatBackend for MockChat {
    fn identity(&self) -> &str {
        "mock-chat"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let last = request
            .last_user_message()
            .ok_or_else(|| GatewayError::InvalidRequest("no user message".into()))?;
        let digest = sha256_hex(&last.content);
        let content = match self.script.get(&digest) {
            Some(MockReply::ToolCall { name, arguments }) => {
                ChatContent::ToolCall(ToolCallPayload {
                    id: format!("call_{}", &digest[..12]),
                    name: name.clone(),
                    arguments: arguments.to_string(),
                })
            }
            Some(MockReply::Text(t)) => ChatContent::Text(t.clone()),
            None => ChatContent::Text(MOCK_DEFAULT_REPLY.to_string()),
        };
        let completion = match &content {
            ChatContent::Text(t) => mock_token_count(t),
            ChatContent::ToolCall(c) => mock_token_count(&c.name) + mock_token_count(&c.arguments),
        };
        let usage = TokenUsage::new(prompt_tokens(request), completion);
        self.log.record(CallEvent {
            backend: self.identity().into(),
            kind: CallKind::Chat,
            digest,
            usage,
            latency_ms: 0,
            ok: true,
        });
        Ok(ChatResponse { content, usage })
    }
}

/// Workflow-filter stand-in that keeps every candidate it is shown.
#[derive(Debug, Clone, Default)]
pub struct EchoFilterChat {
    log: CallLog,
}

impl EchoFilterChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = log;
        self
    }
}

fn candidate_count(prompt: &str) -> Option<usize> {
    let start = prompt.find("CANDIDATES (JSON): ")? + "CANDIDATES (JSON): ".len();
    let end = start + prompt[start..].find("\n\nEach candidate has:")?;
    let parsed: Vec<Value> = serde_json::from_str(&prompt[start..end]).ok()?;
    Some(parsed.len())
}

impl ChatBackend for EchoFilterChat {
    fn identity(&self) -> &str {
        "echo-filter"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let last = request
            .last_user_message()
            .ok_or_else(|| GatewayError::InvalidRequest("no user message".into()))?;
        let reply = match candidate_count(&last.content) {
            Some(n) => {
                let idx: Vec<String> = (0..n).map(|i| i.to_string()).collect();
                format!("[{}]", idx.join(", "))
            }
            None => "[]".to_string(),
        };
        let usage = TokenUsage::new(prompt_tokens(request), mock_token_count(&reply));
        self.log.record(CallEvent {
            backend: self.identity().into(),
            kind: CallKind::Chat,
            digest: sha256_hex(&last.content),
            usage,
            latency_ms: 0,
            ok: true,
        });
        Ok(ChatResponse {
            content: ChatContent::Text(reply),
            usage,
        })
    }
}

/// Deterministic embedder: signed feature hashing of lower-cased word
/// tokens, keyed by a seed, normalized to unit length. An override table
/// maps exact texts to fixed vectors so tests can plant similarities.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    identity: String,
    overrides: BTreeMap<String, Vec<f64>>,
    log: CallLog,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(0)
    }
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            identity: format!("mock-hash-{MOCK_EMBEDDING_DIM}/seed={seed}"),
            overrides: BTreeMap::new(),
            log: CallLog::default(),
        }
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = log;
        self
    }

    /// Pins `text` to `vector`. The identity changes so cached embeddings
    /// from a different override table are not reused.
    pub fn with_overrides(
        mut self,
        overrides: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, GatewayError> {
        for (text, v) in &overrides {
            if v.len() != MOCK_EMBEDDING_DIM {
                return Err(GatewayError::InvalidRequest(format!(
                    "override for {text:?} has dimension {}, expected {MOCK_EMBEDDING_DIM}",
                    v.len()
                )));
            }
        }
        self.overrides.extend(overrides);
        let table = serde_json::to_string(&self.overrides).expect("overrides serialize");
        self.identity = format!(
            "mock-hash-{MOCK_EMBEDDING_DIM}/seed={}/overrides={}",
            self.seed,
            &sha256_hex(table)[..16]
        );
        Ok(self)
    }

    pub fn load_overrides(self, path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::InvalidRequest(format!("{}: {e}", path.display())))?;
        let table = serde_json::from_str(&text).map_err(|e| GatewayError::Malformed {
            message: format!("override table {}: {e}", path.display()),
            body: text.clone(),
        })?;
        self.with_overrides(table)
    }

    fn keyed(&self, token: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        h.finalize().into()
    }

    fn hashed_vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; MOCK_EMBEDDING_DIM];
        let lowered = text.to_lowercase();
        let mut add = |token: &str| {
            let h = self.keyed(token);
            let idx = u64::from_le_bytes(h[..8].try_into().unwrap()) as usize % MOCK_EMBEDDING_DIM;
            v[idx] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        };
        lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .for_each(&mut add);
        if v.iter().all(|x| *x == 0.0) {
            // no tokens, or every token cancelled out: fall back to the whole text
            let h = self.keyed(&format!("\u{0}{text}"));
            for (i, byte) in h.iter().enumerate() {
                v[i % MOCK_EMBEDDING_DIM] += f64::from(*byte) / 255.0 + 0.01;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    }
}

impl Embedder for MockEmbedder {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn dimension(&self) -> usize {
        MOCK_EMBEDDING_DIM
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "cannot embed empty text".into(),
            ));
        }
        let components = self
            .overrides
            .get(text)
            .cloned()
            .unwrap_or_else(|| self.hashed_vector(text));
        self.log.record(CallEvent {
            backend: self.identity.clone(),
            kind: CallKind::Embed,
            digest: sha256_hex(text),
            usage: TokenUsage::new(mock_token_count(text), 0),
            latency_ms: 0,
            ok: true,
        });
        EmbeddingVector::new(components)
            .map_err(|e| GatewayError::InvalidRequest(format!("override for {text:?}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;
    use crate::retrieval::cosine_similarity;

    #[test]
    fn token_formula() {
        assert_eq!(mock_token_count(""), 0);
        assert_eq!(mock_token_count("abcd"), 1);
        assert_eq!(mock_token_count("abcde"), 2);
    }

    #[test]
    fn scripted_lookup_and_default() {
        let chat = MockChat::from_messages([(
            "d1",
            MockReply::ToolCall {
                name: "load_network".into(),
                arguments: serde_json::json!({"feeder": "glover"}),
            },
        )]);
        let req = ChatRequest::new(vec![ChatMessage::system("sys"), ChatMessage::user("d1")]);
        let resp = chat.complete(&req).unwrap();
        let ChatContent::ToolCall(call) = &resp.content else {
            panic!("expected tool call")
        };
        assert_eq!(call.name, "load_network");
        assert_eq!(call.arguments, r#"{"feeder":"glover"}"#);
        assert_eq!(resp.usage.prompt_tokens, 2);

        let other = ChatRequest::new(vec![ChatMessage::user("something else")]);
        assert_eq!(
            chat.complete(&other).unwrap().text(),
            Some(MOCK_DEFAULT_REPLY)
        );
        assert!(chat
            .complete(&ChatRequest::new(vec![ChatMessage::system("x")]))
            .is_err());
    }

    #[test]
    fn embedder_is_deterministic_and_unit_norm() {
        let e = MockEmbedder::new(7);
        let a = e.embed("plot bus voltages for glover").unwrap();
        let b = e.embed("plot bus voltages for glover").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.dimension(), MOCK_EMBEDDING_DIM);
        assert!(e.embed("").is_err());
        assert!(e.embed("!!!").unwrap().norm() > 0.0);
        // shared vocabulary raises similarity
        let near = e.embed("plot bus voltages for stowe").unwrap();
        let far = e.embed("count capacitors in rochester").unwrap();
        assert!(cosine_similarity(&a, &near).unwrap() > cosine_similarity(&a, &far).unwrap());
    }

    #[test]
    fn every_call_is_logged() {
        let log = CallLog::new();
        let e = MockEmbedder::new(0).with_log(log.clone());
        let chat = EchoFilterChat::new().with_log(log.clone());
        for t in ["a", "b", "c"] {
            e.embed(t).unwrap();
        }
        chat.complete(&ChatRequest::new(vec![ChatMessage::user("x")]))
            .unwrap();
        assert_eq!(log.len(), 4);
    }

    #[test]
    fn overrides_must_match_dimension() {
        let bad = BTreeMap::from([("q".to_string(), vec![1.0, 0.0])]);
        assert!(MockEmbedder::new(0).with_overrides(bad).is_err());
        let mut v = vec![0.0; MOCK_EMBEDDING_DIM];
        v[3] = 2.0;
        let e = MockEmbedder::new(0)
            .with_overrides(BTreeMap::from([("q".to_string(), v.clone())]))
            .unwrap();
        assert_eq!(e.embed("q").unwrap().components, v);
        assert_ne!(e.identity(), MockEmbedder::new(0).identity());
    }
}
