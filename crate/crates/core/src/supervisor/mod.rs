//! Just-in-time prerequisite supervision.
//!
//! Every proposed tool call is checked against a rule library before it
//! reaches the environment. A call whose prerequisite Write tools have not
//! run is blocked once per tool name per episode; the blocked call is
//! answered with an advisory instead of an observation, and a repeat of the
//! same tool is then let through.

mod mining;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workflow::{SchemaRegistry, ToolInvocation, ToolKind};

pub use mining::{mine_rules, MiningOptions};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RuleError {
    #[error("cannot read rule file {path}: {message}")]
    Io { path: String, message: String },
    #[error("rule file is not valid JSON: {0}")]
    Parse(String),
    #[error("rule {index}: unknown tool `{tool}`")]
    UnknownTool { index: usize, tool: String },
    #[error("rule for `{tool}`: prerequisite `{prereq}` is not a registered tool")]
    UnknownPrerequisite { tool: String, prereq: String },
    #[error("rule for `{tool}`: prerequisite `{prereq}` is a Read tool")]
    ReadPrerequisite { tool: String, prereq: String },
    #[error("duplicate rule for `{0}`")]
    Duplicate(String),
    #[error("rule for `{0}` has an empty advisory")]
    EmptyAdvisory(String),
}

/// The Write tools that must have run before `tool`, and the
/// advisory text returned when they have not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrerequisiteRule {
    pub tool: String,
    pub requires: BTreeSet<String>,
    pub advisory: String,
}

impl PrerequisiteRule {
    pub fn new<S: Into<String>>(
        tool: impl Into<String>,
        requires: impl IntoIterator<Item = S>,
        advisory: impl Into<String>,
    ) -> Self {
        Self {
            tool: tool.into(),
            requires: requires.into_iter().map(Into::into).collect(),
            advisory: advisory.into(),
        }
    }
}

/// Rules indexed by tool name, at most one per tool.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleLibrary {
    rules: BTreeMap<String, PrerequisiteRule>,
}

impl RuleLibrary {
    /// Builds a library without consulting a registry. Rejects duplicates
    /// and empty advisories.
    pub fn from_rules(
        rules: impl IntoIterator<Item = PrerequisiteRule>,
    ) -> Result<Self, RuleError> {
        let mut map = BTreeMap::new();
        for rule in rules {
            if rule.advisory.trim().is_empty() {
                return Err(RuleError::EmptyAdvisory(rule.tool));
            }
            if map.contains_key(&rule.tool) {
                return Err(RuleError::Duplicate(rule.tool));
            }
            map.insert(rule.tool.clone(), rule);
        }
        Ok(Self { rules: map })
    }

    /// Parses a JSON rule array and validates it against `schemas`.
    /// Every violation is reported, not only the first.
    pub fn load(source: &str, schemas: &SchemaRegistry) -> Result<Self, Vec<RuleError>> {
        let rules: Vec<PrerequisiteRule> = if source.trim().is_empty() {
            Vec::new()
        } else {
            serde_json::from_str(source).map_err(|e| vec![RuleError::Parse(e.to_string())])?
        };
        let mut errors = Vec::new();
        let mut map = BTreeMap::new();
        for (index, rule) in rules.into_iter().enumerate() {
            if !schemas.contains(&rule.tool) {
                errors.push(RuleError::UnknownTool {
                    index,
                    tool: rule.tool.clone(),
                });
            }
            for prereq in &rule.requires {
                match schemas.kind(prereq) {
                    None => errors.push(RuleError::UnknownPrerequisite {
                        tool: rule.tool.clone(),
                        prereq: prereq.clone(),
                    }),
                    Some(ToolKind::Read) => errors.push(RuleError::ReadPrerequisite {
                        tool: rule.tool.clone(),
                        prereq: prereq.clone(),
                    }),
                    Some(ToolKind::Write) => {}
                }
            }
            if rule.advisory.trim().is_empty() {
                errors.push(RuleError::EmptyAdvisory(rule.tool.clone()));
            }
            if map.contains_key(&rule.tool) {
                errors.push(RuleError::Duplicate(rule.tool.clone()));
                continue;
            }
            map.insert(rule.tool.clone(), rule);
        }
        if errors.is_empty() {
            Ok(Self { rules: map })
        } else {
            Err(errors)
        }
    }

    pub fn load_file(path: &Path, schemas: &SchemaRegistry) -> Result<Self, Vec<RuleError>> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![RuleError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            }]
        })?;
        Self::load(&text, schemas)
    }

    pub fn get(&self, tool: &str) -> Option<&PrerequisiteRule> {
        self.rules.get(tool)
    }

    pub fn required(&self, tool: &str) -> Option<&BTreeSet<String>> {
        self.rules.get(tool).map(|r| &r.requires)
    }

    /// `dom(C)`: the tool names covered by a rule.
    pub fn domain(&self) -> impl Iterator<Item = &str> {
        self.rules.keys().map(String::as_str)
    }

    pub fn rules(&self) -> impl Iterator<Item = &PrerequisiteRule> {
        self.rules.values()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn to_json(&self) -> String {
        let rules: Vec<_> = self.rules.values().collect();
        serde_json::to_string_pretty(&rules).expect("rules serialize")
    }
}

/// How a prerequisite counts as satisfied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Freshness {
    /// Any earlier execution of the required tool satisfies it.
    #[default]
    AnyEarlier,
    /// The required tool must have run after each of its own prerequisites
    /// last ran, recursively; a prerequisite re-run invalidates dependents.
    MostRecentWrite,
}

/// Per-episode supervisor bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SupervisorState {
    /// Names of every tool executed so far.
    pub executed: BTreeSet<String>,
    /// Tools already blocked once this episode.
    pub advised: BTreeSet<String>,
    last_run: BTreeMap<String, u64>,
    clock: u64,
}

impl SupervisorState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Outcome of checking one proposed call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Execute,
    Block { advisory: String },
}

impl Decision {
    pub fn is_block(&self) -> bool {
        matches!(self, Decision::Block { .. })
    }
}

pub fn record_execution(state: &SupervisorState, tool_name: &str) -> SupervisorState {
    let mut next = state.clone();
    next.clock += 1;
    next.executed.insert(tool_name.to_string());
    next.last_run.insert(tool_name.to_string(), next.clock);
    next
}

/// Prerequisites of `action` that are not satisfied in `state`.
/// Empty for tools without a rule.
pub fn missing_prerequisites(
    library: &RuleLibrary,
    state: &SupervisorState,
    action: &ToolInvocation,
    freshness: Freshness,
) -> BTreeSet<String> {
    let Some(required) = library.required(&action.tool) else {
        return BTreeSet::new();
    };
    required
        .iter()
        .filter(|req| match freshness {
            Freshness::AnyEarlier => !state.executed.contains(*req),
            Freshness::MostRecentWrite => !is_fresh(library, state, req, &mut BTreeSet::new()),
        })
        .cloned()
        .collect()
}

fn is_fresh<'a>(
    library: &'a RuleLibrary,
    state: &SupervisorState,
    tool: &'a str,
    visiting: &mut BTreeSet<&'a str>,
) -> bool {
    let Some(&ran_at) = state.last_run.get(tool) else {
        return false;
    };
    if !visiting.insert(tool) {
        return true;
    }
    let fresh = library.required(tool).is_none_or(|reqs| {
        reqs.iter().all(|p| {
            state.last_run.get(p).is_some_and(|&t| t < ran_at)
                && is_fresh(library, state, p, visiting)
        })
    });
    visiting.remove(tool);
    fresh
}

/// Violation indicator: true iff the tool has a rule and some required
/// tool is absent from the executed set.
pub fn check_violation(
    library: &RuleLibrary,
    state: &SupervisorState,
    action: &ToolInvocation,
) -> bool {
    !missing_prerequisites(library, state, action, Freshness::AnyEarlier).is_empty()
}

pub const ADVISORY_TEMPLATE: &str = "DECISION REQUIRED: {violation_msg}

Carefully consider the user's query. You must now make ONE of these choices:
1. If the prerequisite IS needed for this query: Call the suggested tool(s) first
2. If the prerequisite is NOT needed: Retry your original call to {tool_name} now

Make a tool call. Do not respond with text.";

/// Renders the advisory observation for a blocked call.
///
/// The rule's advisory text may contain `{missing}` and `{tool}`
/// placeholders; without `{missing}` the sorted missing list is appended.
pub fn render_advisory(
    tool_name: &str,
    missing: &BTreeSet<String>,
    rule: &PrerequisiteRule,
) -> String {
    let listed = missing.iter().cloned().collect::<Vec<_>>().join(", ");
    let mut message = rule.advisory.replace("{tool}", tool_name);
    if message.contains("{missing}") {
        message = message.replace("{missing}", &listed);
    } else {
        message = format!(
            "{} Missing prerequisite tool(s): {listed}.",
            message.trim_end()
        );
    }
    ADVISORY_TEMPLATE
        .replace("{violation_msg}", &message)
        .replace("{tool_name}", tool_name)
}

/// A rule library plus the satisfaction mode; stateless and shareable.
#[derive(Debug, Clone, Default)]
pub struct Supervisor {
    library: RuleLibrary,
    freshness: Freshness,
}

impl Supervisor {
    pub fn new(library: RuleLibrary) -> Self {
        Self {
            library,
            freshness: Freshness::AnyEarlier,
        }
    }

    pub fn with_freshness(mut self, freshness: Freshness) -> Self {
        self.freshness = freshness;
        self
    }

    pub fn library(&self) -> &RuleLibrary {
        &self.library
    }

    pub fn check_violation(&self, state: &SupervisorState, action: &ToolInvocation) -> bool {
        !missing_prerequisites(&self.library, state, action, self.freshness).is_empty()
    }

    /// Blocks a violating call the first time its tool is proposed this
    /// episode; otherwise lets it through. The executed set is never
    /// touched here; see [`record_execution`].
    pub fn decide(
        &self,
        state: &SupervisorState,
        action: &ToolInvocation,
    ) -> (Decision, SupervisorState) {
        let missing = missing_prerequisites(&self.library, state, action, self.freshness);
        if missing.is_empty() {
            return (Decision::Execute, state.clone());
        }
        if state.advised.contains(&action.tool) {
            tracing::warn!(
                tool = %action.tool,
                missing = ?missing,
                "advisory already issued; executing call with unmet prerequisites"
            );
            return (Decision::Execute, state.clone());
        }
        let rule = self
            .library
            .get(&action.tool)
            .expect("missing prerequisites imply a rule");
        let mut next = state.clone();
        next.advised.insert(action.tool.clone());
        (
            Decision::Block {
                advisory: render_advisory(&action.tool, &missing, rule),
            },
            next,
        )
    }
}

/// [`Supervisor::decide`] with the default satisfaction mode.
pub fn decide(
    library: &RuleLibrary,
    state: &SupervisorState,
    action: &ToolInvocation,
) -> (Decision, SupervisorState) {
    Supervisor::new(library.clone()).decide(state, action)
}
