//! Draft prerequisite rules from repeated predecessor patterns in archived
//! workflows. Output is meant for human review and is never loaded
//! automatically.

use std::collections::{BTreeMap, BTreeSet};

use crate::workflow::{ExecutionTrace, SchemaRegistry, ToolKind};

use super::PrerequisiteRule;

#[derive(Debug, Clone, Copy)]
pub struct MiningOptions {
    /// Minimum number of occurrences of a tool before a rule is proposed.
    pub min_support: usize,
    /// Fraction of occurrences in which the Write tool must precede it.
    pub min_confidence: f64,
}

impl Default for MiningOptions {
    fn default() -> Self {
        Self {
            min_support: 2,
            min_confidence: 1.0,
        }
    }
}

/// Proposes `tool requires W` whenever Write tool `W` ran earlier in the
/// same workflow for at least `min_confidence` of the occurrences of `tool`.
pub fn mine_rules<'a>(
    workflows: impl IntoIterator<Item = &'a ExecutionTrace>,
    schemas: &SchemaRegistry,
    options: MiningOptions,
) -> Vec<PrerequisiteRule> {
    let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
    let mut preceded: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();

    for workflow in workflows {
        let mut seen_writes: BTreeSet<&str> = BTreeSet::new();
        for step in &workflow.steps {
            let Some(kind) = schemas.kind(&step.tool) else {
                continue;
            };
            *occurrences.entry(&step.tool).or_default() += 1;
            let counts = preceded.entry(&step.tool).or_default();
            for w in &seen_writes {
                if *w != step.tool {
                    *counts.entry(w).or_default() += 1;
                }
            }
            if kind == ToolKind::Write {
                seen_writes.insert(&step.tool);
            }
        }
    }

    occurrences
        .iter()
        .filter(|(_, &n)| n >= options.min_support)
        .filter_map(|(tool, &n)| {
            let requires: BTreeSet<String> = preceded
                .get(tool)
                .into_iter()
                .flatten()
                .filter(|(_, &c)| c as f64 >= options.min_confidence * n as f64)
                .map(|(w, _)| w.to_string())
                .collect();
            (!requires.is_empty()).then(|| {
                PrerequisiteRule::new(*tool, requires, "Run {missing} before calling {tool}.")
            })
        })
        .collect()
}
