use std::collections::{BTreeMap, HashMap};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, RetrievalError};
use crate::digest::sha256_hex;
use crate::gateway::Embedder;

/// Embeddings keyed by (embedder identity, text digest). Many readers, one
/// writer at a time.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<(String, String), EmbeddingVector>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    embedder: String,
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, embedder: &str, text: &str) -> Option<EmbeddingVector> {
        let key = (embedder.to_string(), sha256_hex(text));
        self.entries
            .read()
            .expect("cache poisoned")
            .get(&key)
            .cloned()
    }

    pub fn get_or_embed(
        &self,
        embedder: &dyn Embedder,
        text: &str,
    ) -> Result<EmbeddingVector, RetrievalError> {
        if let Some(v) = self.get(embedder.identity(), text) {
            return Ok(v);
        }
        let v = embedder.embed(text)?;
        let key = (embedder.identity().to_string(), sha256_hex(text));
        self.entries
            .write()
            .expect("cache poisoned")
            .insert(key, v.clone());
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Serializes the entries of one embedder as
    /// `{"embedder", "dim", "entries": {digest: [reals]}}`.
    pub fn to_json(&self, embedder: &str, dim: usize) -> String {
        let entries = self
            .entries
            .read()
            .expect("cache poisoned")
            .iter()
            .filter(|((id, _), _)| id == embedder)
            .map(|((_, digest), v)| (digest.clone(), v.components.clone()))
            .collect();
        let file = CacheFile {
            embedder: embedder.to_string(),
            dim,
            entries,
        };
        serde_json::to_string(&file).expect("cache serializes")
    }

    /// Merges a cache file; returns the embedder identity it belongs to.
    pub fn load_json(&self, text: &str) -> Result<String, String> {
        let file: CacheFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut entries = self.entries.write().expect("cache poisoned");
        for (digest, components) in file.entries {
            if components.len() != file.dim {
                return Err(format!(
                    "entry {digest} has dimension {}, expected {}",
                    components.len(),
                    file.dim
                ));
            }
            let v = EmbeddingVector::new(components).map_err(|e| format!("entry {digest}: {e}"))?;
            entries.insert((file.embedder.clone(), digest), v);
        }
        Ok(file.embedder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{CallLog, MockEmbedder};

    #[test]
    fn caches_per_embedder_and_round_trips() {
        let log = CallLog::new();
        let e = MockEmbedder::new(1).with_log(log.clone());
        let cache = EmbeddingCache::new();
        let a = cache.get_or_embed(&e, "glover feeder").unwrap();
        let b = cache.get_or_embed(&e, "glover feeder").unwrap();
        assert_eq!(a, b);
        assert_eq!(log.len(), 1);

        let other = MockEmbedder::new(2);
        cache.get_or_embed(&other, "glover feeder").unwrap();
        assert_eq!(cache.len(), 2);

        let json = cache.to_json(e.identity(), 64);
        let restored = EmbeddingCache::new();
        assert_eq!(restored.load_json(&json).unwrap(), e.identity());
        assert_eq!(restored.len(), 1);
        assert_eq!(restored.get(e.identity(), "glover feeder"), Some(a));
        assert!(restored
            .load_json(r#"{"embedder": "x", "dim": 3, "entries": {"d": [1.0]}}"#)
            .is_err());
    }
}
