//! Deterministic stateful tool environment.
//!
//! State is a registry of named, versioned objects. Write tools replace
//! objects and bump the version counter; Read tools render whatever is
//! currently stored. Because Read tools do not check freshness, skipping a
//! prerequisite Write produces a plausible but wrong observation rather
//! than an error, which is the failure mode the supervisor exists for.

mod numerics;
mod tools;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::workflow::{
    Arguments, SchemaRegistry, ToolInvocation, ToolKind, ToolSchema, WorkflowError,
};

pub use numerics::KeyedStream;
pub use tools::{reference_probe_suite, reference_toolset, DISTRACTOR_COUNT, FUNCTIONAL_TOOLS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateObject {
    pub version: u64,
    pub payload: Value,
}

/// Persistent objects mutated by Write tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentState {
    pub objects: BTreeMap<String, StateObject>,
    pub version_counter: u64,
    pub rng_seed: u64,
}

impl EnvironmentState {
    pub fn get(&self, name: &str) -> Option<&StateObject> {
        self.objects.get(name)
    }

    pub fn payload(&self, name: &str) -> Option<&Value> {
        self.objects.get(name).map(|o| &o.payload)
    }

    /// Stores `payload` under a fresh version.
    pub fn put(&mut self, name: &str, payload: Value) -> u64 {
        self.version_counter += 1;
        self.objects.insert(
            name.to_string(),
            StateObject {
                version: self.version_counter,
                payload,
            },
        );
        self.version_counter
    }

    /// Canonical JSON of the whole state.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.snapshot())
    }
}

/// Initial state: no objects, version 0.
pub fn reset(seed: u64) -> EnvironmentState {
    EnvironmentState {
        objects: BTreeMap::new(),
        version_counter: 0,
        rng_seed: seed,
    }
}

/// What a tool call returns to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<Value>,
    #[serde(default)]
    pub is_error: bool,
}

impl Observation {
    pub fn ok(text: impl Into<String>, structured: Option<Value>) -> Self {
        Self {
            text: text.into(),
            structured,
            is_error: false,
        }
    }

    pub fn error(text: impl Into<String>) -> Self {
        Self {
            text: format!("ERROR: {}", text.into()),
            structured: None,
            is_error: true,
        }
    }
}

/// How Read tools treat a missing object.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingObjectMode {
    /// Return a non-error "object missing" observation.
    #[default]
    Silent,
    /// Return an error observation.
    Strict,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeederSpec {
    pub buses: usize,
    pub lines: usize,
    pub transformers: usize,
    pub capacitors: usize,
    pub regulators: usize,
    /// Timestamp of the operating point stored with the network model.
    pub base_timestamp: String,
}

/// Fixture file: `{"feeders": {...}, "seed": int}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Fixture {
    pub feeders: BTreeMap<String, FeederSpec>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cannot read fixture {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid fixture: {0}")]
    Parse(String),
    #[error(transparent)]
    Registry(#[from] WorkflowError),
    #[error("tool `{tool}` is declared {declared:?} but behaves as {observed:?}")]
    Misclassified {
        tool: String,
        declared: ToolKind,
        observed: ToolKind,
    },
    #[error("probe suite has no arguments for tool `{0}`")]
    MissingProbe(String),
}

impl Fixture {
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let fixture: Fixture =
            serde_json::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))?;
        for (name, spec) in &fixture.feeders {
            if spec.buses == 0 {
                return Err(EnvError::Parse(format!("feeder `{name}` has no buses")));
            }
            if crate::workflow::parse_timestamp(&spec.base_timestamp).is_none() {
                return Err(EnvError::Parse(format!(
                    "feeder `{name}` has an invalid base timestamp `{}`",
                    spec.base_timestamp
                )));
            }
        }
        Ok(fixture)
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture serializes")
    }
}

/// Read-only inputs a tool handler may consult besides the state.
pub struct ToolContext<'a> {
    pub fixture: &'a Fixture,
    pub mode: MissingObjectMode,
    pub sandbox: Option<&'a Path>,
}

/// Tool implementation. `Err` becomes an error observation and leaves the
/// state untouched.
pub type ToolHandler =
    fn(&ToolContext<'_>, &mut EnvironmentState, &Arguments) -> Result<Observation, String>;

#[derive(Clone)]
pub struct ToolEntry {
    pub handler: ToolHandler,
    /// Whether the structured observation counts as an analysis output
    /// when comparing a run against its ground truth.
    pub output: bool,
}

/// Schemas plus implementations. Immutable once built.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    schemas: SchemaRegistry,
    entries: BTreeMap<String, ToolEntry>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        schema: ToolSchema,
        handler: ToolHandler,
        output: bool,
    ) -> Result<(), WorkflowError> {
        let name = schema.name.clone();
        self.schemas.insert(schema)?;
        self.entries.insert(name, ToolEntry { handler, output });
        Ok(())
    }

    pub fn schemas(&self) -> &SchemaRegistry {
        &self.schemas
    }

    pub fn entry(&self, name: &str) -> Option<&ToolEntry> {
        self.entries.get(name)
    }

    pub fn is_output(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.output)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry")
            .field("tools", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// A fixture bound to a tool registry. Cheap to clone; each episode keeps
/// its own [`EnvironmentState`].
#[derive(Debug, Clone)]
pub struct Environment {
    registry: Arc<ToolRegistry>,
    fixture: Arc<Fixture>,
    mode: MissingObjectMode,
    sandbox: Option<PathBuf>,
}

impl Environment {
    /// Reference toolset over `fixture`, silent mode, no export directory.
    pub fn new(fixture: Fixture) -> Self {
        Self::with_registry(fixture, Arc::new(reference_toolset()))
    }

    pub fn with_registry(fixture: Fixture, registry: Arc<ToolRegistry>) -> Self {
        Self {
            registry,
            fixture: Arc::new(fixture),
            mode: MissingObjectMode::Silent,
            sandbox: None,
        }
    }

    pub fn with_mode(mut self, mode: MissingObjectMode) -> Self {
        self.mode = mode;
        self
    }

    /// Directory export tools may write into.
    pub fn with_sandbox(mut self, dir: impl Into<PathBuf>) -> Self {
        self.sandbox = Some(dir.into());
        self
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn schemas(&self) -> &SchemaRegistry {
        self.registry.schemas()
    }

    pub fn fixture(&self) -> &Fixture {
        &self.fixture
    }

    pub fn mode(&self) -> MissingObjectMode {
        self.mode
    }

    pub fn reset(&self) -> EnvironmentState {
        reset(self.fixture.seed)
    }

    /// Applies one invocation. Unknown tools, invalid arguments and handler
    /// failures yield an error observation and the unchanged state.
    pub fn execute_tool(
        &self,
        state: &EnvironmentState,
        invocation: &ToolInvocation,
    ) -> (EnvironmentState, Observation) {
        let Some(schema) = self.registry.schemas().get(&invocation.tool) else {
            return (
                state.clone(),
                Observation::error(format!("unknown tool `{}`", invocation.tool)),
            );
        };
        if let Err(e) = schema.validate(&invocation.args) {
            return (state.clone(), Observation::error(e.to_string()));
        }
        let entry = self
            .registry
            .entry(&invocation.tool)
            .expect("schema implies entry");
        let ctx = ToolContext {
            fixture: &self.fixture,
            mode: self.mode,
            sandbox: self.sandbox.as_deref(),
        };
        let mut next = state.clone();
        match (entry.handler)(&ctx, &mut next, &invocation.args) {
            Ok(obs) if obs.is_error => (state.clone(), obs),
            Ok(obs) => (next, obs),
            Err(message) => (state.clone(), Observation::error(message)),
        }
    }

    /// Runs a sequence from the initial state, returning the final state and
    /// every observation.
    pub fn replay<'a>(
        &self,
        steps: impl IntoIterator<Item = &'a ToolInvocation>,
    ) -> (EnvironmentState, Vec<Observation>) {
        let mut state = self.reset();
        let mut observations = Vec::new();
        for step in steps {
            let (next, obs) = self.execute_tool(&state, step);
            state = next;
            observations.push(obs);
        }
        (state, observations)
    }
}

/// Probe arguments per tool and the states to run them on.
#[derive(Debug, Clone)]
pub struct ProbeSuite {
    pub arguments: BTreeMap<String, Arguments>,
    pub states: Vec<EnvironmentState>,
}

/// Observed kind of every registered tool: Write iff some probe state
/// changes. Fails on the first tool whose declared kind disagrees.
pub fn classify_tools(
    env: &Environment,
    probes: &ProbeSuite,
) -> Result<BTreeMap<String, ToolKind>, EnvError> {
    let mut out = BTreeMap::new();
    for schema in env.schemas().iter() {
        let args = probes
            .arguments
            .get(&schema.name)
            .ok_or_else(|| EnvError::MissingProbe(schema.name.clone()))?;
        let invocation = ToolInvocation {
            tool: schema.name.clone(),
            args: args.clone(),
        };
        let mutates = probes.states.iter().any(|state| {
            let before = state.snapshot();
            let (after, _) = env.execute_tool(state, &invocation);
            after.snapshot() != before
        });
        let observed = if mutates {
            ToolKind::Write
        } else {
            ToolKind::Read
        };
        if observed != schema.kind {
            return Err(EnvError::Misclassified {
                tool: schema.name.clone(),
                declared: schema.kind,
                observed,
            });
        }
        out.insert(schema.name.clone(), observed);
    }
    Ok(out)
}
