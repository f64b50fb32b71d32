//! Engine configuration: one TOML file, `${VAR}` interpolation, paths
//! resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::env::MissingObjectMode;
use crate::gateway::RemoteConfig;
use crate::retrieval::RetrievalMode;
use crate::supervisor::Freshness;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config {path}: environment variable `{var}` is not set")]
    MissingVar { path: String, var: String },
    #[error("config {path}: unterminated `${{` at byte {offset}")]
    Unterminated { path: String, offset: usize },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("config {path}: {field} `{target}` does not exist")]
    MissingPath {
        path: String,
        field: &'static str,
        target: String,
    },
    #[error("config {path}: {message}")]
    Invalid { path: String, message: String },
}

/// Replaces every `${NAME}` with the value of the environment variable.
pub fn interpolate(
    text: &str,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<String, (String, Option<usize>)> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    let mut consumed = 0;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or((String::new(), Some(consumed + start)))?;
        let name = &after[..end];
        out.push_str(&lookup(name).ok_or((name.to_string(), None))?);
        let used = start + 2 + end + 1;
        consumed += used;
        rest = &rest[used..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub mock_seed: u64,
    /// Exact-text embedding table for the mock embedder.
    #[serde(default)]
    pub embedding_overrides: Option<PathBuf>,
    /// `{sha256(last user message): reply}` table for the mock chat backend.
    #[serde(default)]
    pub chat_script: Option<PathBuf>,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
    /// Separate endpoint for the exemplar filter; defaults to `remote`.
    #[serde(default)]
    pub filter: Option<RemoteConfig>,
    #[serde(default = "default_dimension")]
    pub embedding_dimension: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_dimension() -> usize {
    1536
}

fn default_retries() -> u32 {
    3
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            mock_seed: 0,
            embedding_overrides: None,
            chat_script: None,
            remote: None,
            filter: None,
            embedding_dimension: default_dimension(),
            retries: default_retries(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    archive: PathBuf,
    rules: PathBuf,
    env: PathBuf,
    #[serde(default)]
    scripts: Option<PathBuf>,
    #[serde(default = "default_retrieval")]
    retrieval: String,
    #[serde(default = "default_true")]
    supervisor: bool,
    #[serde(default)]
    freshness: Freshness,
    #[serde(default)]
    missing_objects: MissingObjectMode,
    #[serde(default = "default_budget")]
    budget: usize,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default)]
    gateway: GatewayConfig,
}

fn default_retrieval() -> String {
    "adaptive".into()
}

fn default_true() -> bool {
    true
}

fn default_budget() -> usize {
    crate::agent::DEFAULT_BUDGET
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub source: PathBuf,
    pub archive: PathBuf,
    pub rules: PathBuf,
    pub env: PathBuf,
    /// Script book (`{query_id: script}`) used by `--policy scripted`.
    pub scripts: Option<PathBuf>,
    pub retrieval: RetrievalMode,
    pub supervisor: bool,
    pub freshness: Freshness,
    pub missing_objects: MissingObjectMode,
    pub budget: usize,
    pub output_dir: PathBuf,
    pub gateway: GatewayConfig,
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: display.clone(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &display, |k| std::env::var(k).ok())
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(
        text: &str,
        base: &Path,
        display: &str,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let path = display.to_string();
        let text = interpolate(text, lookup).map_err(|(var, offset)| match offset {
            Some(offset) => ConfigError::Unterminated {
                path: path.clone(),
                offset,
            },
            None => ConfigError::MissingVar {
                path: path.clone(),
                var,
            },
        })?;
        let raw: RawConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let invalid = |message: String| ConfigError::Invalid {
            path: path.clone(),
            message,
        };
        if raw.budget < 1 {
            return Err(invalid("budget must be at least 1".into()));
        }
        let retrieval: RetrievalMode = raw.retrieval.parse().map_err(invalid)?;
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let existing = |field: &'static str, p: &Path| {
            let full = resolve(p);
            if full.exists() {
                Ok(full)
            } else {
                Err(ConfigError::MissingPath {
                    path: path.clone(),
                    field,
                    target: full.display().to_string(),
                })
            }
        };
        let mut gateway = raw.gateway;
        gateway.embedding_overrides = gateway
            .embedding_overrides
            .as_deref()
            .map(|p| existing("gateway.embedding_overrides", p))
            .transpose()?;
        gateway.chat_script = gateway
            .chat_script
            .as_deref()
            .map(|p| existing("gateway.chat_script", p))
            .transpose()?;
        if gateway.backend == BackendKind::Remote && gateway.remote.is_none() {
            return Err(invalid(
                "gateway.backend = \"remote\" needs a [gateway.remote] section".into(),
            ));
        }
        Ok(Self {
            source: PathBuf::from(display),
            archive: existing("archive", &raw.archive)?,
            rules: existing("rules", &raw.rules)?,
            env: existing("env", &raw.env)?,
            scripts: raw
                .scripts
                .as_deref()
                .map(|p| existing("scripts", p))
                .transpose()?,
            retrieval,
            supervisor: raw.supervisor,
            freshness: raw.freshness,
            missing_objects: raw.missing_objects,
            budget: raw.budget,
            output_dir: resolve(&raw.output_dir),
            gateway,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn vars(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: BTreeMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn interpolation() {
        let out = interpolate("key = \"${A}-${B}\"", vars(&[("A", "x"), ("B", "y")])).unwrap();
        assert_eq!(out, "key = \"x-y\"");
        assert_eq!(
            interpolate("a ${MISSING}", vars(&[])).unwrap_err().0,
            "MISSING"
        );
        assert_eq!(interpolate("a ${OPEN", vars(&[])).unwrap_err().1, Some(2));
        assert_eq!(interpolate("$ {not} $x", vars(&[])).unwrap(), "$ {not} $x");
    }

    fn setup() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for f in ["archive.jsonl", "rules.json", "env.json"] {
            std::fs::write(dir.path().join(f), "").unwrap();
        }
        dir
    }

    const BASE: &str = "archive = \"archive.jsonl\"\nrules = \"rules.json\"\nenv = \"env.json\"\n";

    #[test]
    fn defaults_and_resolution() {
        let dir = setup();
        let cfg = EngineConfig::parse(BASE, dir.path(), "c.toml", vars(&[])).unwrap();
        assert_eq!(cfg.archive, dir.path().join("archive.jsonl"));
        assert_eq!(cfg.retrieval, RetrievalMode::Adaptive);
        assert!(cfg.supervisor);
        assert_eq!(cfg.budget, 30);
        assert_eq!(cfg.gateway.backend, BackendKind::Mock);
        assert_eq!(cfg.output_dir, dir.path().join("out"));
    }

    #[test]
    fn secrets_come_from_the_environment() {
        let dir = setup();
        let text = format!(
            "{BASE}[gateway]\nbackend = \"remote\"\n[gateway.remote]\nendpoint = \"http://localhost:1/v1\"\nmodel = \"m\"\napi_key = \"${{KEY}}\"\n"
        );
        let cfg =
            EngineConfig::parse(&text, dir.path(), "c.toml", vars(&[("KEY", "s3cret")])).unwrap();
        assert_eq!(
            cfg.gateway.remote.unwrap().api_key.as_deref(),
            Some("s3cret")
        );
        let err = EngineConfig::parse(&text, dir.path(), "c.toml", vars(&[])).unwrap_err();
        assert!(matches!(err, ConfigError::MissingVar { ref var, .. } if var == "KEY"));
    }

    #[test]
    fn rejects_bad_values() {
        let dir = setup();
        let bad = [
            format!("{BASE}budget = 0\n"),
            format!("{BASE}retrieval = \"topk:0\"\n"),
            format!("{BASE}[gateway]\nbackend = \"remote\"\n"),
            format!("{BASE}unknown = 1\n"),
        ];
        for text in bad {
            assert!(
                EngineConfig::parse(&text, dir.path(), "c.toml", vars(&[])).is_err(),
                "{text}"
            );
        }
        let text = "archive = \"nope.jsonl\"\nrules = \"rules.json\"\nenv = \"env.json\"\n";
        let err = EngineConfig::parse(text, dir.path(), "c.toml", vars(&[])).unwrap_err();
        assert!(err.to_string().contains("nope.jsonl"), "{err}");
    }
}
