//! Tool schemas, invocations, execution traces and workflow DAGs.
//!
//! A workflow is a set of tool invocations with must-run-before edges. Traces
//! recorded by the agent loop are converted to DAGs using the prerequisite
//! rule library, and two DAGs are compared by labeled-graph isomorphism so
//! that reorderings of independent calls are not penalized.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::supervisor::RuleLibrary;

/// Bound argument values of an invocation, keyed by argument name.
pub type Arguments = BTreeMap<String, Value>;

/// Largest graph [`dag_equivalent`] will attempt.
pub const MAX_EQUIVALENCE_VERTICES: usize = 64;

/// Absolute tolerance used when comparing real-valued arguments.
pub const REAL_ARG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WorkflowError {
    #[error("step {index}: unknown tool `{tool}`")]
    UnknownTool { index: usize, tool: String },
    #[error("trace and DAG do not contain the same multiset of invocations")]
    VertexMismatch,
    #[error("edge ({0}, {1}) references a vertex that does not exist")]
    EdgeOutOfRange(usize, usize),
    #[error(
        "graph has {0} vertices; equivalence checks are limited to {MAX_EQUIVALENCE_VERTICES}"
    )]
    TooLarge(usize),
    #[error("duplicate tool name `{0}`")]
    DuplicateTool(String),
    #[error("tool `{tool}` declares argument `{arg}` twice")]
    DuplicateArg { tool: String, arg: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Problems with the arguments bound in a single invocation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ArgError {
    #[error("tool `{tool}` has no argument `{arg}`")]
    Unknown { tool: String, arg: String },
    #[error("tool `{tool}` is missing required argument `{arg}`")]
    Missing { tool: String, arg: String },
    #[error("argument `{arg}` of `{tool}` must be {expected}, got {got}")]
    TypeMismatch {
        tool: String,
        arg: String,
        expected: ArgType,
        got: String,
    },
    #[error("argument `{arg}` of `{tool}` must be one of {allowed:?}, got `{got}`")]
    InvalidOption {
        tool: String,
        arg: String,
        allowed: Vec<String>,
        got: String,
    },
}

/// Data-type tag of a declared argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    String,
    Integer,
    Real,
    Boolean,
    ListOfReal,
    Timestamp,
}

impl fmt::Display for ArgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArgType::String => "string",
            ArgType::Integer => "integer",
            ArgType::Real => "real",
            ArgType::Boolean => "boolean",
            ArgType::ListOfReal => "list-of-real",
            ArgType::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d %H:%M:%S",
];

/// Parses the timestamp formats accepted by `timestamp` arguments.
pub fn parse_timestamp(s: &str) -> Option<chrono::NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| chrono::NaiveDateTime::parse_from_str(s, fmt).ok())
}

impl ArgType {
    /// Strict conformance check, no coercion.
    pub fn accepts(self, value: &Value) -> bool {
        match self {
            ArgType::String => value.is_string(),
            ArgType::Integer => value.is_i64() || value.is_u64(),
            ArgType::Real => value.is_number(),
            ArgType::Boolean => value.is_boolean(),
            ArgType::ListOfReal => value
                .as_array()
                .is_some_and(|items| items.iter().all(Value::is_number)),
            ArgType::Timestamp => value.as_str().and_then(parse_timestamp).is_some(),
        }
    }

    /// Converts `value` to this type when no information is lost.
    pub fn coerce(self, value: &Value) -> Option<Value> {
        if self.accepts(value) {
            return Some(value.clone());
        }
        match (self, value) {
            (ArgType::Integer, Value::Number(n)) => {
                let f = n.as_f64()?;
                (f.fract() == 0.0 && f.abs() < 9.0e15).then(|| Value::from(f as i64))
            }
            (ArgType::Integer, Value::String(s)) => s.trim().parse::<i64>().ok().map(Value::from),
            (ArgType::Real, Value::String(s)) => {
                let f = s.trim().parse::<f64>().ok()?;
                f.is_finite().then(|| Value::from(f))
            }
            (ArgType::Boolean, Value::String(s)) => match s.trim() {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            },
            (ArgType::ListOfReal, Value::Array(items)) => items
                .iter()
                .map(|item| ArgType::Real.coerce(item))
                .collect::<Option<Vec<_>>>()
                .map(Value::Array),
            _ => None,
        }
    }
}

fn default_true() -> bool {
    true
}

/// One entry of a tool's argument signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ArgType,
    #[serde(default = "default_true")]
    pub required: bool,
    /// Enumerated options for string arguments. Compared case-insensitively.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

impl ArgSpec {
    pub fn required(name: impl Into<String>, ty: ArgType) -> Self {
        Self {
            name: name.into(),
            ty,
            required: true,
            options: None,
        }
    }

    pub fn optional(name: impl Into<String>, ty: ArgType) -> Self {
        Self {
            required: false,
            ..Self::required(name, ty)
        }
    }

    pub fn with_options(mut self, options: &[&str]) -> Self {
        self.options = Some(options.iter().map(|s| s.to_string()).collect());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToolKind {
    Read,
    Write,
}

/// Declared interface of a tool: name, description, argument signature, kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub args: Vec<ArgSpec>,
    pub kind: ToolKind,
}

impl ToolSchema {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        args: Vec<ArgSpec>,
        kind: ToolKind,
    ) -> Result<Self, WorkflowError> {
        let schema = Self {
            name: name.into(),
            description: description.into(),
            args,
            kind,
        };
        let mut seen = BTreeSet::new();
        for arg in &schema.args {
            if !seen.insert(arg.name.as_str()) {
                return Err(WorkflowError::DuplicateArg {
                    tool: schema.name.clone(),
                    arg: arg.name.clone(),
                });
            }
        }
        Ok(schema)
    }

    pub fn arg(&self, name: &str) -> Option<&ArgSpec> {
        self.args.iter().find(|a| a.name == name)
    }

    /// Checks argument names, required arguments, declared types and options.
    pub fn validate(&self, args: &Arguments) -> Result<(), ArgError> {
        for (name, value) in args {
            let spec = self.arg(name).ok_or_else(|| ArgError::Unknown {
                tool: self.name.clone(),
                arg: name.clone(),
            })?;
            if !spec.ty.accepts(value) {
                return Err(ArgError::TypeMismatch {
                    tool: self.name.clone(),
                    arg: name.clone(),
                    expected: spec.ty,
                    got: value.to_string(),
                });
            }
            if let (Some(options), Some(s)) = (&spec.options, value.as_str()) {
                let folded = s.trim().to_lowercase();
                if !options.iter().any(|o| o.to_lowercase() == folded) {
                    return Err(ArgError::InvalidOption {
                        tool: self.name.clone(),
                        arg: name.clone(),
                        allowed: options.clone(),
                        got: s.to_string(),
                    });
                }
            }
        }
        for spec in self.args.iter().filter(|a| a.required) {
            if !args.contains_key(&spec.name) {
                return Err(ArgError::Missing {
                    tool: self.name.clone(),
                    arg: spec.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Coerces each known argument to its declared type where lossless.
    /// Unknown or non-coercible values are left as they are for [`validate`](Self::validate) to report.
    pub fn coerce(&self, args: &Arguments) -> Arguments {
        args.iter()
            .map(|(name, value)| {
                let coerced = self
                    .arg(name)
                    .and_then(|spec| spec.ty.coerce(value))
                    .unwrap_or_else(|| value.clone());
                (name.clone(), coerced)
            })
            .collect()
    }
}

/// Name-indexed set of tool schemas with unique names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaRegistry {
    schemas: BTreeMap<String, ToolSchema>,
    order: Vec<String>,
}

impl SchemaRegistry {
    pub fn new(schemas: impl IntoIterator<Item = ToolSchema>) -> Result<Self, WorkflowError> {
        let mut reg = Self::default();
        for schema in schemas {
            reg.insert(schema)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, schema: ToolSchema) -> Result<(), WorkflowError> {
        if self.schemas.contains_key(&schema.name) {
            return Err(WorkflowError::DuplicateTool(schema.name));
        }
        self.order.push(schema.name.clone());
        self.schemas.insert(schema.name.clone(), schema);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSchema> {
        self.schemas.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.schemas.contains_key(name)
    }

    pub fn kind(&self, name: &str) -> Option<ToolKind> {
        self.get(name).map(|s| s.kind)
    }

    /// Schemas in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &ToolSchema> {
        self.order.iter().map(move |n| &self.schemas[n])
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }
}

/// A concrete tool call with bound arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub tool: String,
    #[serde(default)]
    pub args: Arguments,
}

impl ToolInvocation {
    pub fn new(tool: impl Into<String>) -> Self {
        Self {
            tool: tool.into(),
            args: Arguments::new(),
        }
    }

    pub fn arg(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.args.insert(name.into(), value.into());
        self
    }
}

impl fmt::Display for ToolInvocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.tool)?;
        for (i, (k, v)) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

/// The executed workflow: invocations in the order they ran.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExecutionTrace {
    pub steps: Vec<ToolInvocation>,
}

impl ExecutionTrace {
    pub fn new(steps: Vec<ToolInvocation>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, step: ToolInvocation) {
        self.steps.push(step);
    }

    pub fn tool_names(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.tool.as_str())
    }

    /// Line-delimited `{"tool", "args"}` records.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("invocations serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses line-delimited records; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, WorkflowError> {
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let step = serde_json::from_str(line).map_err(|e| WorkflowError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            steps.push(step);
        }
        Ok(Self { steps })
    }
}

impl From<Vec<ToolInvocation>> for ExecutionTrace {
    fn from(steps: Vec<ToolInvocation>) -> Self {
        Self { steps }
    }
}

/// Dependency graph over tool invocations. Edge `(i, j)` means vertex `i`
/// must complete before vertex `j` starts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowDag {
    pub vertices: Vec<ToolInvocation>,
    pub edges: BTreeSet<(usize, usize)>,
}

impl WorkflowDag {
    pub fn new(
        vertices: Vec<ToolInvocation>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, WorkflowError> {
        let n = vertices.len();
        let edges: BTreeSet<_> = edges.into_iter().collect();
        if let Some(&(i, j)) = edges.iter().find(|(i, j)| *i >= n || *j >= n) {
            return Err(WorkflowError::EdgeOutOfRange(i, j));
        }
        Ok(Self { vertices, edges })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.len();
        let mut adj = vec![vec![false; n]; n];
        for &(i, j) in &self.edges {
            adj[i][j] = true;
        }
        adj
    }

    fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.len()];
        for &(i, j) in &self.edges {
            if j < preds.len() {
                preds[j].push(i);
            }
        }
        preds
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("DAG serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WorkflowError> {
        let dag: WorkflowDag = serde_json::from_str(text).map_err(|e| WorkflowError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(dag.vertices, dag.edges)
    }
}

/// True iff a topological order exists.
pub fn validate_acyclic(dag: &WorkflowDag) -> bool {
    let n = dag.len();
    let mut indegree = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for &(i, j) in &dag.edges {
        if i >= n || j >= n {
            return false;
        }
        indegree[j] += 1;
        out[i].push(j);
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut visited = 0;
    while let Some(v) = queue.pop_front() {
        visited += 1;
        for &w in &out[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    visited == n
}

/// True iff the trace order respects every edge of `dag`.
///
/// Duplicate invocations may be matched to any equal vertex; the check
/// succeeds if some assignment respects the edges.
pub fn is_linearization(trace: &ExecutionTrace, dag: &WorkflowDag) -> Result<bool, WorkflowError> {
    if trace.len() != dag.len() {
        return Err(WorkflowError::VertexMismatch);
    }
    let mut unmatched: Vec<usize> = (0..dag.len()).collect();
    for step in &trace.steps {
        let pos = unmatched
            .iter()
            .position(|&v| dag.vertices[v] == *step)
            .ok_or(WorkflowError::VertexMismatch)?;
        unmatched.swap_remove(pos);
    }

    let preds = dag.predecessors();
    let mut placed = vec![false; dag.len()];
    Ok(place_steps(trace, dag, &preds, 0, &mut placed))
}

fn place_steps(
    trace: &ExecutionTrace,
    dag: &WorkflowDag,
    preds: &[Vec<usize>],
    pos: usize,
    placed: &mut [bool],
) -> bool {
    let Some(step) = trace.steps.get(pos) else {
        return true;
    };
    for v in 0..dag.len() {
        if placed[v] || dag.vertices[v] != *step || !preds[v].iter().all(|&p| placed[p]) {
            continue;
        }
        placed[v] = true;
        if place_steps(trace, dag, preds, pos + 1, placed) {
            return true;
        }
        placed[v] = false;
    }
    false
}

/// Builds the dependency DAG of a trace.
///
/// For every step `j` and each prerequisite `p` of its tool, an edge is added
/// from the most recent earlier step that ran `p`. Tools without a rule get
/// no incoming edges.
pub fn trace_to_dag(
    trace: &ExecutionTrace,
    schemas: &SchemaRegistry,
    rules: &RuleLibrary,
) -> Result<WorkflowDag, WorkflowError> {
    let mut last_run: BTreeMap<&str, usize> = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for (j, step) in trace.steps.iter().enumerate() {
        if !schemas.contains(&step.tool) {
            return Err(WorkflowError::UnknownTool {
                index: j,
                tool: step.tool.clone(),
            });
        }
        if let Some(required) = rules.required(&step.tool) {
            for prereq in required {
                if let Some(&i) = last_run.get(prereq.as_str()) {
                    edges.insert((i, j));
                }
            }
        }
        last_run.insert(step.tool.as_str(), j);
    }
    let dag = WorkflowDag::new(trace.steps.clone(), edges)?;
    debug_assert!(validate_acyclic(&dag));
    Ok(dag)
}

/// Decides whether two invocations carry compatible labels.
///
/// Reals compare within [`REAL_ARG_TOLERANCE`], strings after trimming, and
/// enumerated option arguments (when a schema registry is supplied)
/// case-insensitively. Argument maps must have the same key set.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArgMatcher<'a> {
    schemas: Option<&'a SchemaRegistry>,
}

impl<'a> ArgMatcher<'a> {
    pub fn with_schemas(schemas: &'a SchemaRegistry) -> Self {
        Self {
            schemas: Some(schemas),
        }
    }

    pub fn invocations_match(&self, a: &ToolInvocation, b: &ToolInvocation) -> bool {
        a.tool == b.tool && self.args_match(&a.tool, &a.args, &b.args)
    }

    pub fn args_match(&self, tool: &str, a: &Arguments, b: &Arguments) -> bool {
        if a.len() != b.len() {
            return false;
        }
        let schema = self.schemas.and_then(|s| s.get(tool));
        a.iter().all(|(name, va)| {
            let Some(vb) = b.get(name) else {
                return false;
            };
            let fold = schema
                .and_then(|s| s.arg(name))
                .is_some_and(|spec| spec.options.is_some());
            values_match(va, vb, fold)
        })
    }
}

fn values_match(a: &Value, b: &Value, fold_case: bool) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= REAL_ARG_TOLERANCE,
            _ => x == y,
        },
        (Value::String(x), Value::String(y)) => {
            let (x, y) = (x.trim(), y.trim());
            if fold_case {
                x.to_lowercase() == y.to_lowercase()
            } else {
                x == y
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_match(p, q, fold_case))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter()
                    .all(|(k, v)| y.get(k).is_some_and(|w| values_match(v, w, fold_case)))
        }
        _ => a == b,
    }
}

/// Labeled-graph isomorphism with the default argument matcher.
pub fn dag_equivalent(a: &WorkflowDag, b: &WorkflowDag) -> Result<bool, WorkflowError> {
    dag_equivalent_with(a, b, &ArgMatcher::default())
}

/// True iff a label-preserving bijection between the vertex sets maps the
/// edge relation of `a` exactly onto that of `b`.
pub fn dag_equivalent_with(
    a: &WorkflowDag,
    b: &WorkflowDag,
    matcher: &ArgMatcher<'_>,
) -> Result<bool, WorkflowError> {
    for dag in [a, b] {
        if dag.len() > MAX_EQUIVALENCE_VERTICES {
            return Err(WorkflowError::TooLarge(dag.len()));
        }
    }
    if a.len() != b.len() || a.edges.len() != b.edges.len() {
        return Ok(false);
    }
    let n = a.len();
    let (adj_a, adj_b) = (a.adjacency(), b.adjacency());
    let degrees = |adj: &Vec<Vec<bool>>| -> Vec<(usize, usize)> {
        (0..n)
            .map(|v| {
                let out = adj[v].iter().filter(|&&e| e).count();
                let inn = (0..n).filter(|&u| adj[u][v]).count();
                (inn, out)
            })
            .collect()
    };
    let (deg_a, deg_b) = (degrees(&adj_a), degrees(&adj_b));

    let mut candidates: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    deg_a[i] == deg_b[j]
                        && matcher.invocations_match(&a.vertices[i], &b.vertices[j])
                })
                .collect()
        })
        .collect();
    if candidates.iter().any(Vec::is_empty) {
        return Ok(false);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (candidates[i].len(), i));
    // reorder candidate lists to follow the search order
    let ordered: Vec<(usize, Vec<usize>)> = order
        .iter()
        .map(|&i| (i, std::mem::take(&mut candidates[i])))
        .collect();

    let mut mapping = vec![usize::MAX; n];
    let mut used = vec![false; n];
    Ok(extend_mapping(
        &ordered,
        0,
        &adj_a,
        &adj_b,
        &mut mapping,
        &mut used,
    ))
}

fn extend_mapping(
    ordered: &[(usize, Vec<usize>)],
    depth: usize,
    adj_a: &[Vec<bool>],
    adj_b: &[Vec<bool>],
    mapping: &mut [usize],
    used: &mut [bool],
) -> bool {
    let Some((i, cands)) = ordered.get(depth) else {
        return true;
    };
    for &j in cands {
        if used[j] {
            continue;
        }
        let consistent = ordered[..depth].iter().all(|(k, _)| {
            let mk = mapping[*k];
            adj_a[*i][*k] == adj_b[j][mk] && adj_a[*k][*i] == adj_b[mk][j]
        }) && adj_a[*i][*i] == adj_b[j][j];
        if !consistent {
            continue;
        }
        mapping[*i] = j;
        used[j] = true;
        if extend_mapping(ordered, depth + 1, adj_a, adj_b, mapping, used) {
            return true;
        }
        used[j] = false;
        mapping[*i] = usize::MAX;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supervisor::{PrerequisiteRule, RuleLibrary};
    use serde_json::json;

    fn t(name: &str) -> ToolInvocation {
        ToolInvocation::new(name)
    }

    fn fig1() -> WorkflowDag {
        let vertices = (1..=7).map(|i| t(&format!("t{i}"))).collect();
        WorkflowDag::new(
            vertices,
            [(0, 2), (1, 2), (2, 3), (2, 4), (3, 5), (4, 5), (5, 6)],
        )
        .unwrap()
    }

    fn trace(names: &[&str]) -> ExecutionTrace {
        names.iter().map(|n| t(n)).collect::<Vec<_>>().into()
    }

    fn schemas(names: &[&str]) -> SchemaRegistry {
        SchemaRegistry::new(
            names
                .iter()
                .map(|n| ToolSchema::new(*n, "", vec![], ToolKind::Write).unwrap()),
        )
        .unwrap()
    }

    fn rules(pairs: &[(&str, &[&str])]) -> RuleLibrary {
        RuleLibrary::from_rules(pairs.iter().map(|(tool, req)| {
            PrerequisiteRule::new(*tool, req.iter().copied(), "missing prerequisites")
        }))
        .unwrap()
    }

    #[test]
    fn acyclicity() {
        assert!(validate_acyclic(&WorkflowDag::default()));
        assert!(validate_acyclic(&fig1()));
        let cycle = WorkflowDag::new(vec![t("a"), t("b")], [(0, 1), (1, 0)]).unwrap();
        assert!(!validate_acyclic(&cycle));
        let self_loop = WorkflowDag::new(vec![t("a")], [(0, 0)]).unwrap();
        assert!(!validate_acyclic(&self_loop));
    }

    #[test]
    fn edges_must_reference_vertices() {
        assert_eq!(
            WorkflowDag::new(vec![t("a")], [(0, 1)]),
            Err(WorkflowError::EdgeOutOfRange(0, 1))
        );
    }

    #[test]
    fn linearizations_of_fig1() {
        let dag = fig1();
        let ok = trace(&["t1", "t2", "t3", "t4", "t5", "t6", "t7"]);
        let swapped = trace(&["t1", "t2", "t3", "t5", "t4", "t6", "t7"]);
        let bad = trace(&["t3", "t1", "t2", "t4", "t5", "t6", "t7"]);
        assert!(is_linearization(&ok, &dag).unwrap());
        assert!(is_linearization(&swapped, &dag).unwrap());
        assert!(!is_linearization(&bad, &dag).unwrap());
    }

    #[test]
    fn linearization_rejects_vertex_mismatch() {
        let dag = fig1();
        assert_eq!(
            is_linearization(&trace(&["t1"]), &dag),
            Err(WorkflowError::VertexMismatch)
        );
        let wrong = trace(&["t1", "t2", "t3", "t4", "t5", "t6", "x"]);
        assert_eq!(
            is_linearization(&wrong, &dag),
            Err(WorkflowError::VertexMismatch)
        );
    }

    #[test]
    fn chain_from_rule_library() {
        let names = ["load_network", "run_power_flow", "get_voltages"];
        let reg = schemas(&names);
        let lib = rules(&[
            ("run_power_flow", &["load_network"]),
            ("get_voltages", &["run_power_flow"]),
        ]);
        let tr = trace(&names);
        let dag = trace_to_dag(&tr, &reg, &lib).unwrap();
        assert_eq!(dag.edges, BTreeSet::from([(0, 1), (1, 2)]));
        // only the original order is a linearization
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let valid: Vec<_> = perms
            .iter()
            .filter(|p| {
                let permuted = trace(&p.map(|i| names[i]));
                is_linearization(&permuted, &dag).unwrap()
            })
            .collect();
        assert_eq!(valid, vec![&[0, 1, 2]]);
    }

    #[test]
    fn trivial_traces() {
        let reg = schemas(&["a", "b"]);
        let lib = RuleLibrary::default();
        let one = trace_to_dag(&trace(&["a"]), &reg, &lib).unwrap();
        assert_eq!((one.len(), one.edges.len()), (1, 0));
        let two = trace_to_dag(&trace(&["a", "b"]), &reg, &lib).unwrap();
        assert_eq!((two.len(), two.edges.len()), (2, 0));
    }

    #[test]
    fn unknown_tool_names_step() {
        let reg = schemas(&["a"]);
        let err = trace_to_dag(&trace(&["a", "zzz"]), &reg, &RuleLibrary::default()).unwrap_err();
        assert_eq!(
            err,
            WorkflowError::UnknownTool {
                index: 1,
                tool: "zzz".into()
            }
        );
    }

    #[test]
    fn most_recent_writer_gets_the_edge() {
        let reg = schemas(&["w", "r"]);
        let lib = rules(&[("r", &["w"])]);
        let tr = ExecutionTrace::new(vec![t("w").arg("x", 1), t("w").arg("x", 2), t("r")]);
        let dag = trace_to_dag(&tr, &reg, &lib).unwrap();
        assert_eq!(dag.edges, BTreeSet::from([(1, 2)]));
    }

    #[test]
    fn fig1_linearizations_are_equivalent() {
        let names: Vec<String> = (1..=7).map(|i| format!("t{i}")).collect();
        let reg = schemas(&names.iter().map(String::as_str).collect::<Vec<_>>());
        let lib = rules(&[
            ("t3", &["t1", "t2"]),
            ("t4", &["t3"]),
            ("t5", &["t3"]),
            ("t6", &["t4", "t5"]),
            ("t7", &["t6"]),
        ]);
        let a = trace_to_dag(
            &trace(&["t1", "t2", "t3", "t4", "t5", "t6", "t7"]),
            &reg,
            &lib,
        )
        .unwrap();
        let b = trace_to_dag(
            &trace(&["t2", "t1", "t3", "t5", "t4", "t6", "t7"]),
            &reg,
            &lib,
        )
        .unwrap();
        assert_eq!(a.edges.len(), 7);
        assert!(dag_equivalent(&a, &b).unwrap());
        assert!(dag_equivalent(&a, &a).unwrap());
        assert!(dag_equivalent(&fig1(), &a).unwrap());
    }

    #[test]
    fn chains_with_different_order_differ() {
        let abc = WorkflowDag::new(vec![t("a"), t("b"), t("c")], [(0, 1), (1, 2)]).unwrap();
        let acb = WorkflowDag::new(vec![t("a"), t("c"), t("b")], [(0, 1), (1, 2)]).unwrap();
        assert!(!dag_equivalent(&abc, &acb).unwrap());
    }

    #[test]
    fn duplicate_vertices_preserve_multiplicity() {
        let aab = WorkflowDag::new(vec![t("a"), t("a"), t("b")], []).unwrap();
        let abb = WorkflowDag::new(vec![t("a"), t("b"), t("b")], []).unwrap();
        assert!(!dag_equivalent(&aab, &abb).unwrap());
        let aab2 = WorkflowDag::new(vec![t("b"), t("a"), t("a")], []).unwrap();
        assert!(dag_equivalent(&aab, &aab2).unwrap());
    }

    #[test]
    fn equivalence_guard() {
        let big = WorkflowDag::new((0..65).map(|_| t("a")).collect(), []).unwrap();
        assert_eq!(dag_equivalent(&big, &big), Err(WorkflowError::TooLarge(65)));
    }

    #[test]
    fn argument_normalization() {
        let reg = SchemaRegistry::new([ToolSchema::new(
            "run_hosting_capacity",
            "",
            vec![
                ArgSpec::required("norm", ArgType::String).with_options(&["l1", "l2", "linf"]),
                ArgSpec::optional("label", ArgType::String),
                ArgSpec::optional("limit", ArgType::Real),
            ],
            ToolKind::Write,
        )
        .unwrap()])
        .unwrap();
        let m = ArgMatcher::with_schemas(&reg);
        let base = t("run_hosting_capacity")
            .arg("norm", "l1")
            .arg("limit", 1.1);
        let folded = t("run_hosting_capacity")
            .arg("norm", " L1 ")
            .arg("limit", 1.1 + 1e-12);
        assert!(m.invocations_match(&base, &folded));
        // free-text strings are trimmed but not case-folded
        let a = base.clone().arg("label", "Run");
        let b = base.clone().arg("label", "run ");
        assert!(!m.invocations_match(&a, &b));
        assert!(m.invocations_match(&a, &base.clone().arg("label", " Run")));
        // a missing optional argument on one side only is not compatible
        assert!(!m.invocations_match(&a, &base));
        assert!(!m.invocations_match(&base, &base.clone().arg("limit", 1.2)));
        assert!(ArgMatcher::default()
            .invocations_match(&t("x").arg("v", json!(3)), &t("x").arg("v", json!(3.0))));
    }

    #[test]
    fn schema_validation_and_coercion() {
        let schema = ToolSchema::new(
            "s",
            "",
            vec![
                ArgSpec::required("k", ArgType::Integer),
                ArgSpec::optional("ts", ArgType::Timestamp),
                ArgSpec::optional("ids", ArgType::ListOfReal),
            ],
            ToolKind::Read,
        )
        .unwrap();
        let mut args = Arguments::new();
        args.insert("k".into(), json!("5"));
        assert!(matches!(
            schema.validate(&args),
            Err(ArgError::TypeMismatch { .. })
        ));
        let coerced = schema.coerce(&args);
        assert_eq!(coerced["k"], json!(5));
        assert!(schema.validate(&coerced).is_ok());
        assert!(matches!(
            schema.validate(&Arguments::new()),
            Err(ArgError::Missing { .. })
        ));
        args.insert("bogus".into(), json!(1));
        assert!(matches!(
            schema.validate(&args),
            Err(ArgError::Unknown { .. })
        ));

        assert_eq!(ArgType::Integer.coerce(&json!(2.5)), None);
        assert_eq!(ArgType::Integer.coerce(&json!(2.0)), Some(json!(2)));
        assert_eq!(
            ArgType::ListOfReal.coerce(&json!(["1", 2])),
            Some(json!([1.0, 2]))
        );
        assert!(ArgType::Timestamp.accepts(&json!("2025-03-18T11:00")));
        assert!(ArgType::Timestamp.accepts(&json!("2025-03-18 11:00:00")));
        assert!(!ArgType::Timestamp.accepts(&json!("noon")));

        assert!(matches!(
            ToolSchema::new(
                "d",
                "",
                vec![ArgSpec::required("a", ArgType::Real); 2],
                ToolKind::Read
            ),
            Err(WorkflowError::DuplicateArg { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let tr = ExecutionTrace::new(vec![
            t("load_network").arg("feeder", "glover"),
            t("set_timestamp").arg("timestamp", "2025-03-18T11:00"),
        ]);
        let text = tr.to_jsonl();
        assert!(text.starts_with(r#"{"tool":"load_network","args":{"feeder":"glover"}}"#));
        assert_eq!(ExecutionTrace::from_jsonl(&text).unwrap(), tr);
        assert!(matches!(
            ExecutionTrace::from_jsonl("{\"tool\": \"a\"}\nnot json"),
            Err(WorkflowError::Parse { line: 2, .. })
        ));
        let dag = fig1();
        let json = dag.to_json();
        assert!(json.contains(r#""edges":[[0,2],[1,2]"#));
        assert_eq!(WorkflowDag::from_json(&json).unwrap(), dag);
    }
}
