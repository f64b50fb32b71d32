//! Agent factories that wire retrieval and a policy source together for
//! `run` and `bench`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde_json::Value;

use crate::agent::{ChatPolicy, Policy, Script, ScriptedPolicy};
use crate::eval::{AgentFactory, SuiteEntry};
use crate::gateway::{ChatBackend, Embedder};
use crate::retrieval::{
    EmbeddingCache, ExemplarRecord, ExemplarSelector, RetrievalMode, Selection,
};

/// Where actions come from.
pub enum PolicySource<'a> {
    /// Replays each query's expert workflow, then answers.
    Oracle,
    /// One script per query id; `default` covers ids missing from the book.
    Scripted {
        book: BTreeMap<String, Script>,
        default: Option<Script>,
    },
    /// A chat-completions backend.
    Chat {
        backend: &'a dyn ChatBackend,
        attempts: u32,
    },
}

impl PolicySource<'_> {
    /// Reads either a single script (`{"steps": ...}`) or a script book
    /// (`{query_id: script}`).
    pub fn load_scripts(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if value.get("steps").is_some_and(Value::is_array) {
            let script =
                serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()))?;
            return Ok(PolicySource::Scripted {
                book: BTreeMap::new(),
                default: Some(script),
            });
        }
        let book = serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(PolicySource::Scripted {
            book,
            default: None,
        })
    }
}

pub const ORACLE_ANSWER: &str = "Completed the requested analysis.";

/// Selects exemplars from an archive and hands out one policy per episode.
pub struct Agents<'a> {
    archive: &'a [ExemplarRecord],
    embedder: &'a dyn Embedder,
    filter: &'a dyn ChatBackend,
    retrieval: RetrievalMode,
    cache: EmbeddingCache,
    source: PolicySource<'a>,
}

impl<'a> Agents<'a> {
    pub fn new(
        archive: &'a [ExemplarRecord],
        embedder: &'a dyn Embedder,
        filter: &'a dyn ChatBackend,
        source: PolicySource<'a>,
    ) -> Self {
        Self {
            archive,
            embedder,
            filter,
            retrieval: RetrievalMode::Adaptive,
            cache: EmbeddingCache::new(),
            source,
        }
    }

    pub fn with_retrieval(mut self, mode: RetrievalMode) -> Self {
        self.retrieval = mode;
        self
    }

    /// Full selection record for one query.
    pub fn select(&self, query: &str) -> Result<Selection, String> {
        if self.archive.is_empty() {
            return Ok(Selection::default());
        }
        ExemplarSelector::new(self.embedder, self.filter)
            .with_cache(&self.cache)
            .with_mode(self.retrieval)
            .select(query, self.archive)
            .map_err(|e| e.to_string())
    }

    pub fn policy_for(
        &self,
        query_id: &str,
        expert: &[crate::workflow::ToolInvocation],
    ) -> Result<Box<dyn Policy + '_>, String> {
        match &self.source {
            PolicySource::Oracle => Ok(Box::new(ScriptedPolicy::new(Script::from_calls(
                expert.iter().cloned(),
                ORACLE_ANSWER,
            )))),
            PolicySource::Scripted { book, default } => book
                .get(query_id)
                .or(default.as_ref())
                .map(|s| Box::new(ScriptedPolicy::new(s.clone())) as Box<dyn Policy>)
                .ok_or_else(|| format!("no script for query `{query_id}`")),
            PolicySource::Chat { backend, attempts } => Ok(Box::new(
                ChatPolicy::new(*backend).with_retries(*attempts, Duration::from_millis(500)),
            )),
        }
    }
}

impl AgentFactory for Agents<'_> {
    fn exemplars(&self, entry: &SuiteEntry) -> Result<Vec<ExemplarRecord>, String> {
        Ok(self.select(&entry.query)?.selected)
    }

    fn policy<'s>(&'s self, entry: &SuiteEntry) -> Result<Box<dyn Policy + 's>, String> {
        self.policy_for(&entry.query_id, &entry.expert_workflow)
    }
}
