//! Pass@k, DAG precision, tokens per Pass@1 and the success check.

mod bench;

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::digest::{json_digest, sha256_hex};
use crate::env::Environment;
use crate::workflow::{
    dag_equivalent_with, ArgMatcher, ExecutionTrace, SchemaRegistry, ToolKind, WorkflowDag,
};

pub use bench::{
    aggregate_runs, parse_suite, run_benchmark, AgentFactory, AggregateMetrics, BenchError,
    BenchmarkConfig, Difficulty, MetricsReport, QueryMetrics, ReportConfig, RunRecord, SuiteEntry,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("pass@k needs 0 <= s <= n and 1 <= k <= n, got n={n}, s={s}, k={k}")]
    InvalidCounts { n: u64, s: u64, k: u64 },
    #[error("ground truth for `{query_id}` was built on a different environment fixture")]
    FixtureMismatch { query_id: String },
    #[error("expert step {index} (`{tool}`) failed on the reference environment: {message}")]
    ExpertStepFailed {
        index: usize,
        tool: String,
        message: String,
    },
}

/// `C(n, k)`, zero when `k > n`. Exact for every `n <= 64`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) at every step
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

fn check_counts(n: u64, s: u64, k: u64) -> Result<(), EvalError> {
    if s > n || k == 0 || k > n {
        return Err(EvalError::InvalidCounts { n, s, k });
    }
    Ok(())
}

/// `1 - C(n-s, k) / C(n, k)` as an exact fraction.
pub fn pass_at_k_exact(n: u64, s: u64, k: u64) -> Result<Ratio<u128>, EvalError> {
    check_counts(n, s, k)?;
    let total = binomial(n, k);
    let failing = binomial(n - s, k);
    Ok(Ratio::new(total - failing, total))
}

/// Probability that at least one of `k` runs drawn without replacement
/// from `n` runs with `s` successes succeeded.
pub fn pass_at_k(n: u64, s: u64, k: u64) -> Result<f64, EvalError> {
    let r = pass_at_k_exact(n, s, k)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

/// Tokens per Pass@1, undefined when nothing passed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TokensPerPass1 {
    Value(f64),
    Undefined,
}

impl TokensPerPass1 {
    pub fn value(self) -> Option<f64> {
        match self {
            TokensPerPass1::Value(v) => Some(v),
            TokensPerPass1::Undefined => None,
        }
    }
}

impl Serialize for TokensPerPass1 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TokensPerPass1::Value(v) => s.serialize_f64(*v),
            TokensPerPass1::Undefined => s.serialize_str("undefined"),
        }
    }
}

/// `total_tokens / (n * pass1)`.
pub fn tokens_per_pass1(total_tokens: u64, n: u64, pass1: f64) -> TokensPerPass1 {
    if pass1 <= 0.0 || n == 0 {
        return TokensPerPass1::Undefined;
    }
    TokensPerPass1::Value(total_tokens as f64 / (n as f64 * pass1))
}

/// How a run is judged successful.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessMode {
    /// The run reproduces every analysis output of the expert workflow.
    #[default]
    ResultEquivalence,
    /// The run contains every expert call in dependency order; extra Reads
    /// are free, extra Writes must still reproduce the outputs.
    Coverage,
}

/// Expert workflow plus the outputs it produces on the reference fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub query_id: String,
    pub expert_trace: ExecutionTrace,
    /// Digests of every structured analysis output, in execution order.
    pub expected_outputs: Vec<String>,
    /// Digest over `expected_outputs`.
    pub expected_result_digest: String,
    pub fixture_digest: String,
}

fn fixture_digest(env: &Environment) -> String {
    sha256_hex(serde_json::to_string(env.fixture()).expect("fixture serializes"))
}

/// Digests of the structured outputs produced by replaying `trace` from the
/// initial state. Failed steps produce nothing.
pub fn output_digests(env: &Environment, trace: &ExecutionTrace) -> Vec<String> {
    let (_, observations) = env.replay(trace.steps.iter());
    trace
        .steps
        .iter()
        .zip(observations)
        .filter(|(step, obs)| !obs.is_error && env.registry().is_output(&step.tool))
        .filter_map(|(_, obs)| obs.structured.as_ref().map(json_digest))
        .collect()
}

impl GroundTruth {
    /// Replays the expert trace; every step must succeed.
    pub fn derive(
        query_id: &str,
        expert_trace: &ExecutionTrace,
        env: &Environment,
    ) -> Result<Self, EvalError> {
        let (_, observations) = env.replay(expert_trace.steps.iter());
        for (index, (step, obs)) in expert_trace.steps.iter().zip(&observations).enumerate() {
            if obs.is_error {
                return Err(EvalError::ExpertStepFailed {
                    index,
                    tool: step.tool.clone(),
                    message: obs.text.clone(),
                });
            }
        }
        let expected_outputs = output_digests(env, expert_trace);
        Ok(Self {
            query_id: query_id.to_string(),
            expert_trace: expert_trace.clone(),
            expected_result_digest: sha256_hex(expected_outputs.join("\n")),
            expected_outputs,
            fixture_digest: fixture_digest(env),
        })
    }
}

fn multiset(items: &[String]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i.as_str()).or_insert(0) += 1;
    }
    m
}

fn reproduces_outputs(run: &ExecutionTrace, truth: &GroundTruth, env: &Environment) -> bool {
    if truth.expected_outputs.is_empty() {
        let (a, _) = env.replay(run.steps.iter());
        let (b, _) = env.replay(truth.expert_trace.steps.iter());
        return a
            .objects
            .iter()
            .map(|(k, o)| (k, &o.payload))
            .eq(b.objects.iter().map(|(k, o)| (k, &o.payload)));
    }
    let produced = output_digests(env, run);
    let have = multiset(&produced);
    multiset(&truth.expected_outputs)
        .into_iter()
        .all(|(digest, count)| have.get(digest).copied().unwrap_or(0) >= count)
}

/// Injective, order-preserving match of expert steps onto run steps.
/// `edges` are expert DAG edges that the mapped run positions must respect.
fn covers(
    run: &ExecutionTrace,
    expert: &ExecutionTrace,
    edges: &[(usize, usize)],
    matcher: &ArgMatcher<'_>,
) -> Option<Vec<usize>> {
    fn go(
        i: usize,
        run: &ExecutionTrace,
        expert: &ExecutionTrace,
        edges: &[(usize, usize)],
        matcher: &ArgMatcher<'_>,
        used: &mut Vec<bool>,
        map: &mut Vec<usize>,
    ) -> bool {
        if i == expert.steps.len() {
            return true;
        }
        for j in 0..run.steps.len() {
            if used[j] || !matcher.invocations_match(&expert.steps[i], &run.steps[j]) {
                continue;
            }
            let ordered = edges
                .iter()
                .filter(|(_, to)| *to == i)
                .all(|(from, _)| map[*from] < j);
            if !ordered {
                continue;
            }
            used[j] = true;
            map.push(j);
            if go(i + 1, run, expert, edges, matcher, used, map) {
                return true;
            }
            map.pop();
            used[j] = false;
        }
        false
    }
    let mut used = vec![false; run.steps.len()];
    let mut map = Vec::with_capacity(expert.steps.len());
    go(0, run, expert, edges, matcher, &mut used, &mut map).then_some(map)
}

/// Judges one run against its ground truth on the same fixture.
/// `expert_dag` supplies the dependency order used in coverage mode.
pub fn success_check(
    run: &ExecutionTrace,
    truth: &GroundTruth,
    expert_dag: &WorkflowDag,
    env: &Environment,
    mode: SuccessMode,
) -> Result<bool, EvalError> {
    if fixture_digest(env) != truth.fixture_digest {
        return Err(EvalError::FixtureMismatch {
            query_id: truth.query_id.clone(),
        });
    }
    match mode {
        SuccessMode::ResultEquivalence => Ok(reproduces_outputs(run, truth, env)),
        SuccessMode::Coverage => {
            let matcher = ArgMatcher::with_schemas(env.schemas());
            let edges: Vec<(usize, usize)> = expert_dag.edges.iter().copied().collect();
            let Some(map) = covers(run, &truth.expert_trace, &edges, &matcher) else {
                return Ok(false);
            };
            let extra_write = run.steps.iter().enumerate().any(|(j, step)| {
                !map.contains(&j) && env.schemas().kind(&step.tool) == Some(ToolKind::Write)
            });
            Ok(!extra_write || reproduces_outputs(run, truth, env))
        }
    }
}

/// Trace-level agreement: the two DAGs are equivalent. Graphs beyond the
/// equivalence size guard count as disagreement.
pub fn precision_check(
    run_dag: &WorkflowDag,
    expert_dag: &WorkflowDag,
    schemas: &SchemaRegistry,
) -> bool {
    dag_equivalent_with(run_dag, expert_dag, &ArgMatcher::with_schemas(schemas)).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Fixture;
    use crate::supervisor::{PrerequisiteRule, RuleLibrary};
    use crate::workflow::{trace_to_dag, ToolInvocation};

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(binomial(5, 0), 1);
    }

    #[test]
    fn pass_at_k_examples() {
        assert_eq!(pass_at_k(3, 3, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k_exact(3, 1, 1).unwrap(), Ratio::new(1, 3));
        assert_eq!(pass_at_k_exact(10, 4, 3).unwrap(), Ratio::new(5, 6));
        assert_eq!(pass_at_k(5, 0, 2).unwrap(), 0.0);
        assert!(pass_at_k(3, 4, 1).is_err());
        assert!(pass_at_k(3, 1, 0).is_err());
        assert!(pass_at_k(3, 1, 4).is_err());
    }

    #[test]
    fn tokens_per_pass1_cases() {
        assert_eq!(
            tokens_per_pass1(30_000, 3, 1.0),
            TokensPerPass1::Value(10_000.0)
        );
        assert_eq!(
            tokens_per_pass1(30_000, 3, 1.0 / 3.0)
                .value()
                .unwrap()
                .round(),
            30_000.0
        );
        assert_eq!(tokens_per_pass1(30_000, 3, 0.0), TokensPerPass1::Undefined);
        assert_eq!(
            serde_json::to_string(&TokensPerPass1::Undefined).unwrap(),
            "\"undefined\""
        );
    }

    fn env() -> Environment {
        Environment::new(
            Fixture::parse(
                r#"{"feeders": {"glover": {"buses": 30, "lines": 29, "transformers": 9,
                    "capacitors": 2, "regulators": 1, "base_timestamp": "2025-01-01T00:00"}}, "seed": 9}"#,
            )
            .unwrap(),
        )
    }

    fn rules(env: &Environment) -> RuleLibrary {
        let _ = env;
        RuleLibrary::from_rules([
            PrerequisiteRule::new("set_timestamp", ["load_network"], "x"),
            PrerequisiteRule::new("run_power_flow", ["load_network", "set_timestamp"], "x"),
            PrerequisiteRule::new("get_voltages", ["run_power_flow"], "x"),
            PrerequisiteRule::new("plot_voltage_map", ["run_power_flow"], "x"),
        ])
        .unwrap()
    }

    fn expert() -> ExecutionTrace {
        ExecutionTrace::new(vec![
            ToolInvocation::new("load_network").arg("feeder", "glover"),
            ToolInvocation::new("set_timestamp").arg("timestamp", "2025-03-18T11:00"),
            ToolInvocation::new("run_power_flow"),
            ToolInvocation::new("get_voltages"),
            ToolInvocation::new("plot_voltage_map"),
        ])
    }

    fn judge(run: &ExecutionTrace, mode: SuccessMode) -> bool {
        let env = env();
        let truth = GroundTruth::derive("q", &expert(), &env).unwrap();
        let dag = trace_to_dag(&expert(), env.schemas(), &rules(&env)).unwrap();
        success_check(run, &truth, &dag, &env, mode).unwrap()
    }

    #[test]
    fn identical_run_succeeds_in_both_modes() {
        assert!(judge(&expert(), SuccessMode::ResultEquivalence));
        assert!(judge(&expert(), SuccessMode::Coverage));
    }

    #[test]
    fn skipped_prerequisite_fails() {
        let mut run = expert();
        run.steps.remove(2);
        assert!(!judge(&run, SuccessMode::ResultEquivalence));
        assert!(!judge(&run, SuccessMode::Coverage));
    }

    #[test]
    fn extra_read_is_tolerated() {
        let mut run = expert();
        run.steps.insert(3, ToolInvocation::new("list_feeders"));
        run.steps.push(ToolInvocation::new("get_voltages"));
        assert!(judge(&run, SuccessMode::ResultEquivalence));
        assert!(judge(&run, SuccessMode::Coverage));
    }

    #[test]
    fn extra_write_must_preserve_outputs() {
        let mut harmless = expert();
        harmless.steps.insert(
            3,
            ToolInvocation::new("set_transformer_limit").arg("percent", 110.0),
        );
        assert!(judge(&harmless, SuccessMode::Coverage));

        let mut harmful = expert();
        harmful.steps.insert(
            3,
            ToolInvocation::new("set_timestamp").arg("timestamp", "2025-03-19T11:00"),
        );
        harmful
            .steps
            .insert(4, ToolInvocation::new("run_power_flow"));
        assert!(!judge(&harmful, SuccessMode::Coverage));
    }

    #[test]
    fn fixture_mismatch_is_an_error() {
        let env = env();
        let truth = GroundTruth::derive("q", &expert(), &env).unwrap();
        let dag = trace_to_dag(&expert(), env.schemas(), &rules(&env)).unwrap();
        let other = Environment::new(Fixture {
            seed: 10,
            ..env.fixture().clone()
        });
        assert!(matches!(
            success_check(
                &expert(),
                &truth,
                &dag,
                &other,
                SuccessMode::ResultEquivalence
            ),
            Err(EvalError::FixtureMismatch { .. })
        ));
    }

    #[test]
    fn failing_expert_is_rejected() {
        let trace = ExecutionTrace::new(vec![ToolInvocation::new("run_power_flow")]);
        assert!(matches!(
            GroundTruth::derive("q", &trace, &env()),
            Err(EvalError::ExpertStepFailed { index: 0, .. })
        ));
    }

    #[test]
    fn precision_counts_vertices() {
        let env = env();
        let lib = rules(&env);
        let expert_dag = trace_to_dag(&expert(), env.schemas(), &lib).unwrap();
        assert!(precision_check(&expert_dag, &expert_dag, env.schemas()));
        let mut extra = expert();
        extra.steps.insert(
            3,
            ToolInvocation::new("set_transformer_limit").arg("percent", 110.0),
        );
        let extra_dag = trace_to_dag(&extra, env.schemas(), &lib).unwrap();
        assert!(!precision_check(&extra_dag, &expert_dag, env.schemas()));
    }
}
