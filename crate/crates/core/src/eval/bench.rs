use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{
    pass_at_k, precision_check, success_check, tokens_per_pass1, EvalError, GroundTruth,
    SuccessMode, TokensPerPass1,
};
use crate::agent::{run_episode, EpisodeError, EpisodeResult, Policy, Termination, DEFAULT_BUDGET};
use crate::env::Environment;
use crate::gateway::TokenUsage;
use crate::retrieval::ExemplarRecord;
use crate::supervisor::{RuleLibrary, Supervisor};
use crate::workflow::{trace_to_dag, ExecutionTrace, SchemaRegistry, ToolInvocation, WorkflowDag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

/// One benchmark query with its expert workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub query_id: String,
    pub query: String,
    pub expert_workflow: Vec<ToolInvocation>,
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_class: Option<String>,
}

/// Parses a suite file (JSON array), reporting every offending entry.
pub fn parse_suite(text: &str, schemas: &SchemaRegistry) -> Result<Vec<SuiteEntry>, Vec<String>> {
    let raw: Vec<Value> = serde_json::from_str(text).map_err(|e| vec![format!("suite: {e}")])?;
    let mut errors = Vec::new();
    let mut entries = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, value) in raw.into_iter().enumerate() {
        let entry: SuiteEntry = match serde_json::from_value(value) {
            Ok(e) => e,
            Err(e) => {
                errors.push(format!("entry {i}: {e}"));
                continue;
            }
        };
        let at = format!("entry {i} ({})", entry.query_id);
        if entry.query_id.trim().is_empty() {
            errors.push(format!("entry {i}: empty query_id"));
        }
        if !ids.insert(entry.query_id.clone()) {
            errors.push(format!("{at}: duplicate query_id"));
        }
        if entry.query.trim().is_empty() {
            errors.push(format!("{at}: empty query"));
        }
        if entry.expert_workflow.is_empty() {
            errors.push(format!("{at}: empty expert_workflow"));
        }
        for (j, step) in entry.expert_workflow.iter().enumerate() {
            match schemas.get(&step.tool) {
                None => errors.push(format!("{at}: step {j} names unknown tool `{}`", step.tool)),
                Some(schema) => {
                    if let Err(e) = schema.validate(&step.args) {
                        errors.push(format!("{at}: step {j}: {e}"));
                    }
                }
            }
        }
        entries.push(entry);
    }
    if errors.is_empty() {
        Ok(entries)
    } else {
        Err(errors)
    }
}

/// Supplies exemplars and a policy per query.
pub trait AgentFactory: Sync {
    fn exemplars(&self, entry: &SuiteEntry) -> Result<Vec<ExemplarRecord>, String>;
    fn policy<'s>(&'s self, entry: &SuiteEntry) -> Result<Box<dyn Policy + 's>, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkConfig {
    /// Row label in the text table.
    pub label: String,
    pub trials: usize,
    pub budget: usize,
    pub success_mode: SuccessMode,
    /// Retrieval mode, recorded for the report only.
    pub retrieval: String,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            label: "jitflow".into(),
            trials: 3,
            budget: DEFAULT_BUDGET,
            success_mode: SuccessMode::ResultEquivalence,
            retrieval: "adaptive".into(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub query_id: String,
    /// 1-based.
    pub trial_id: usize,
    pub success: bool,
    pub precision: bool,
    pub steps_taken: usize,
    pub blocked_count: usize,
    pub trace_len: usize,
    pub tokens: TokenUsage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminated_by: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub result: Option<EpisodeResult>,
    #[serde(skip)]
    pub trace_dag: Option<WorkflowDag>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub difficulty: Difficulty,
    pub n: usize,
    pub s: usize,
    pub pass_at_1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_at_3: Option<f64>,
    pub precision: f64,
    pub total_tokens: u64,
    pub tokens_per_pass1: TokensPerPass1,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateMetrics {
    pub queries: usize,
    pub runs: usize,
    pub successes: usize,
    /// Mean of per-query Pass@1.
    pub pass_at_1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_at_3: Option<f64>,
    /// Mean precision indicator over every run.
    pub precision: f64,
    pub total_tokens: u64,
    pub tokens_per_pass1: TokensPerPass1,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportConfig {
    #[serde(flatten)]
    pub bench: BenchmarkConfig,
    pub supervisor: bool,
    /// How coverage mode treats unmatched Write calls.
    pub coverage_extra_writes: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub config: ReportConfig,
    pub aggregate: AggregateMetrics,
    pub queries: Vec<QueryMetrics>,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("query `{query_id}`: {message}")]
    Query { query_id: String, message: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

struct Prepared<'a> {
    entry: &'a SuiteEntry,
    truth: GroundTruth,
    expert_dag: WorkflowDag,
    exemplars: Vec<ExemplarRecord>,
}

fn prepare<'a>(
    entry: &'a SuiteEntry,
    env: &Environment,
    rules: &RuleLibrary,
    agent: &dyn AgentFactory,
) -> Result<Prepared<'a>, BenchError> {
    let err = |message: String| BenchError::Query {
        query_id: entry.query_id.clone(),
        message,
    };
    let trace = ExecutionTrace::new(entry.expert_workflow.clone());
    let truth = GroundTruth::derive(&entry.query_id, &trace, env)
        .map_err(|e: EvalError| err(e.to_string()))?;
    let expert_dag = trace_to_dag(&trace, env.schemas(), rules).map_err(|e| err(e.to_string()))?;
    let exemplars = agent.exemplars(entry).map_err(err)?;
    Ok(Prepared {
        entry,
        truth,
        expert_dag,
        exemplars,
    })
}

fn run_trial(
    prepared: &Prepared<'_>,
    trial_id: usize,
    env: &Environment,
    rules: &RuleLibrary,
    supervisor: Option<&Supervisor>,
    config: &BenchmarkConfig,
    agent: &dyn AgentFactory,
) -> RunRecord {
    let mut record = RunRecord {
        query_id: prepared.entry.query_id.clone(),
        trial_id,
        success: false,
        precision: false,
        steps_taken: 0,
        blocked_count: 0,
        trace_len: 0,
        tokens: TokenUsage::default(),
        terminated_by: None,
        error: None,
        result: None,
        trace_dag: None,
    };
    let policy = match agent.policy(prepared.entry) {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(e);
            return record;
        }
    };
    let result = match run_episode(
        &prepared.entry.query,
        &prepared.exemplars,
        policy.as_ref(),
        env,
        supervisor,
        config.budget,
    ) {
        Ok(r) => r,
        Err(EpisodeError::Policy { source, partial }) => {
            record.steps_taken = partial.steps_taken;
            record.tokens = partial.token_usage;
            record.error = Some(source.to_string());
            return record;
        }
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.steps_taken = result.steps_taken;
    record.blocked_count = result.blocked_count;
    record.trace_len = result.trace.len();
    record.tokens = result.token_usage;
    record.terminated_by = Some(result.terminated_by);
    match success_check(
        &result.trace,
        &prepared.truth,
        &prepared.expert_dag,
        env,
        config.success_mode,
    ) {
        Ok(ok) => record.success = ok,
        Err(e) => record.error = Some(e.to_string()),
    }
    if let Ok(dag) = trace_to_dag(&result.trace, env.schemas(), rules) {
        record.precision = precision_check(&dag, &prepared.expert_dag, env.schemas());
        record.trace_dag = Some(dag);
    }
    record.result = Some(result);
    record
}

/// Runs `config.trials` episodes per query, each on a fresh environment
/// state, and aggregates the metrics. Episode failures count as failed
/// trials; only setup problems are errors.
pub fn run_benchmark(
    suite: &[SuiteEntry],
    env: &Environment,
    rules: &RuleLibrary,
    supervisor: Option<&Supervisor>,
    config: &BenchmarkConfig,
    agent: &dyn AgentFactory,
) -> Result<MetricsReport, BenchError> {
    if config.trials == 0 {
        return Err(BenchError::NoTrials);
    }
    let work = || -> Result<Vec<RunRecord>, BenchError> {
        let prepared: Vec<Prepared<'_>> = suite
            .par_iter()
            .map(|entry| prepare(entry, env, rules, agent))
            .collect::<Result<_, _>>()?;
        let tasks: Vec<(usize, usize)> = (0..prepared.len())
            .flat_map(|q| (1..=config.trials).map(move |t| (q, t)))
            .collect();
        Ok(tasks
            .par_iter()
            .map(|&(q, t)| run_trial(&prepared[q], t, env, rules, supervisor, config, agent))
            .collect())
    };
    let runs = match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| BenchError::Pool(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(aggregate_runs(suite, runs, config, supervisor.is_some()))
}

/// Per-query and overall metrics from finished runs.
pub fn aggregate_runs(
    suite: &[SuiteEntry],
    runs: Vec<RunRecord>,
    config: &BenchmarkConfig,
    supervisor: bool,
) -> MetricsReport {
    let n = config.trials;
    let queries: Vec<QueryMetrics> = suite
        .iter()
        .map(|entry| {
            let mine: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.query_id == entry.query_id)
                .collect();
            let s = mine.iter().filter(|r| r.success).count();
            let pass1 = pass_at_k(n as u64, s as u64, 1).expect("valid counts");
            let total_tokens: u64 = mine.iter().map(|r| r.tokens.total()).sum();
            QueryMetrics {
                query_id: entry.query_id.clone(),
                difficulty: entry.difficulty,
                n,
                s,
                pass_at_1: pass1,
                pass_at_3: (n >= 3)
                    .then(|| pass_at_k(n as u64, s as u64, 3).expect("valid counts")),
                precision: mine.iter().filter(|r| r.precision).count() as f64 / n as f64,
                total_tokens,
                tokens_per_pass1: tokens_per_pass1(total_tokens, n as u64, pass1),
            }
        })
        .collect();
    let q = queries.len().max(1) as f64;
    let pass_at_1 = queries.iter().map(|m| m.pass_at_1).sum::<f64>() / q;
    let total_tokens: u64 = runs.iter().map(|r| r.tokens.total()).sum();
    let aggregate = AggregateMetrics {
        queries: queries.len(),
        runs: runs.len(),
        successes: runs.iter().filter(|r| r.success).count(),
        pass_at_1,
        pass_at_3: (n >= 3).then(|| queries.iter().filter_map(|m| m.pass_at_3).sum::<f64>() / q),
        precision: runs.iter().filter(|r| r.precision).count() as f64 / runs.len().max(1) as f64,
        total_tokens,
        tokens_per_pass1: tokens_per_pass1(total_tokens, runs.len() as u64, pass_at_1),
    };
    MetricsReport {
        config: ReportConfig {
            bench: config.clone(),
            supervisor,
            coverage_extra_writes: "tolerated only when analysis outputs still match",
        },
        aggregate,
        queries,
        runs,
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn kilo(t: TokensPerPass1) -> String {
    match t {
        TokensPerPass1::Value(v) => format!("{:.2}", v / 1000.0),
        TokensPerPass1::Undefined => "n/a".into(),
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table with P@1, P@3 and precision in percent and tokens per
    /// Pass@1 in thousands.
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "Method: {} (supervisor {}, retrieval {}, success {:?}, trials {})\n",
            c.bench.label,
            if c.supervisor { "on" } else { "off" },
            c.bench.retrieval,
            c.bench.success_mode,
            c.bench.trials
        );
        let width = self
            .queries
            .iter()
            .map(|q| q.query_id.len())
            .max()
            .unwrap_or(0)
            .max(8);
        out.push_str(&format!(
            "{:<width$}  {:<10}  {:>3}  {:>3}  {:>7}  {:>7}  {:>7}  {:>10}\n",
            "query", "difficulty", "n", "s", "P@1", "P@3", "Pr.", "Tk/P@1(K)"
        ));
        let p3 = |v: Option<f64>| v.map(pct).unwrap_or_else(|| "-".into());
        for m in &self.queries {
            let difficulty = format!("{:?}", m.difficulty).to_lowercase();
            out.push_str(&format!(
                "{:<width$}  {:<10}  {:>3}  {:>3}  {:>7}  {:>7}  {:>7}  {:>10}\n",
                m.query_id,
                difficulty,
                m.n,
                m.s,
                pct(m.pass_at_1),
                p3(m.pass_at_3),
                pct(m.precision),
                kilo(m.tokens_per_pass1)
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "{:<width$}  {:<10}  {:>3}  {:>3}  {:>7}  {:>7}  {:>7}  {:>10}\n",
            "ALL",
            "",
            a.runs,
            a.successes,
            pct(a.pass_at_1),
            p3(a.pass_at_3),
            pct(a.precision),
            kilo(a.tokens_per_pass1)
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Script, ScriptedPolicy};
    use crate::env::Fixture;
    use crate::supervisor::PrerequisiteRule;

    fn env() -> Environment {
        Environment::new(
            Fixture::parse(
                r#"{"feeders": {"glover": {"buses": 20, "lines": 19, "transformers": 6,
                    "capacitors": 1, "regulators": 1, "base_timestamp": "2025-01-01T00:00"}}, "seed": 2}"#,
            )
            .unwrap(),
        )
    }

    fn suite_json() -> &'static str {
        r#"[
          {"query_id": "q1", "query": "How many capacitors are in Glover?", "difficulty": "easy",
           "expert_workflow": [{"tool": "load_network", "args": {"feeder": "glover"}},
                               {"tool": "get_component_counts", "args": {"component": "capacitors"}}]},
          {"query_id": "q2", "query": "Plot Glover voltages at 11:00 on 2025-03-18.", "difficulty": "medium",
           "expert_workflow": [{"tool": "load_network", "args": {"feeder": "glover"}},
                               {"tool": "set_timestamp", "args": {"timestamp": "2025-03-18T11:00"}},
                               {"tool": "run_power_flow"},
                               {"tool": "plot_voltage_map"}]}
        ]"#
    }

    fn rules() -> RuleLibrary {
        RuleLibrary::from_rules([
            PrerequisiteRule::new("get_component_counts", ["load_network"], "x"),
            PrerequisiteRule::new("run_power_flow", ["load_network", "set_timestamp"], "x"),
            PrerequisiteRule::new("plot_voltage_map", ["run_power_flow"], "x"),
        ])
        .unwrap()
    }

    /// Replays the expert workflow, optionally without one tool.
    struct Replay {
        skip: Option<&'static str>,
    }

    impl AgentFactory for Replay {
        fn exemplars(&self, _: &SuiteEntry) -> Result<Vec<ExemplarRecord>, String> {
            Ok(Vec::new())
        }
        fn policy<'s>(&'s self, entry: &SuiteEntry) -> Result<Box<dyn Policy + 's>, String> {
            let calls = entry
                .expert_workflow
                .iter()
                .filter(|c| Some(c.tool.as_str()) != self.skip)
                .cloned();
            Ok(Box::new(ScriptedPolicy::new(Script::from_calls(
                calls, "done",
            ))))
        }
    }

    #[test]
    fn suite_validation_lists_offenders() {
        let reg = env().schemas().clone();
        assert_eq!(parse_suite(suite_json(), &reg).unwrap().len(), 2);
        let bad = r#"[{"query_id": "a", "query": "", "difficulty": "easy", "expert_workflow": []},
                      {"query_id": "a", "query": "x", "difficulty": "hard",
                       "expert_workflow": [{"tool": "nope"}]},
                      {"query_id": "b"}]"#;
        let errors = parse_suite(bad, &reg).unwrap_err();
        assert_eq!(errors.len(), 5, "{errors:#?}");
    }

    #[test]
    fn oracle_replay_scores_perfectly() {
        let env = env();
        let suite = parse_suite(suite_json(), env.schemas()).unwrap();
        let report = run_benchmark(
            &suite,
            &env,
            &rules(),
            None,
            &BenchmarkConfig::default(),
            &Replay { skip: None },
        )
        .unwrap();
        assert_eq!(report.aggregate.pass_at_1, 1.0);
        assert_eq!(report.aggregate.pass_at_3, Some(1.0));
        assert_eq!(report.aggregate.precision, 1.0);
        assert!(report.aggregate.tokens_per_pass1.value().unwrap() > 0.0);
        assert_eq!(report.runs.len(), 6);
        assert!(report.to_table().contains("ALL"));
    }

    #[test]
    fn skipped_write_fails_without_supervisor() {
        let env = env();
        let suite = parse_suite(suite_json(), &env.schemas().clone()).unwrap();
        let agent = Replay {
            skip: Some("run_power_flow"),
        };
        let report = run_benchmark(
            &suite,
            &env,
            &rules(),
            None,
            &BenchmarkConfig::default(),
            &agent,
        )
        .unwrap();
        assert_eq!(report.queries[0].pass_at_1, 1.0);
        assert_eq!(report.queries[1].pass_at_1, 0.0);
        assert_eq!(
            report.queries[1].tokens_per_pass1,
            TokensPerPass1::Undefined
        );
    }

    #[test]
    fn reports_are_reproducible_and_trial_count_is_checked() {
        let env = env();
        let suite = parse_suite(suite_json(), env.schemas()).unwrap();
        let config = BenchmarkConfig {
            jobs: Some(2),
            ..Default::default()
        };
        let a = run_benchmark(
            &suite,
            &env,
            &rules(),
            None,
            &config,
            &Replay { skip: None },
        )
        .unwrap();
        let b = run_benchmark(
            &suite,
            &env,
            &rules(),
            None,
            &config,
            &Replay { skip: None },
        )
        .unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let zero = BenchmarkConfig {
            trials: 0,
            ..Default::default()
        };
        assert!(matches!(
            run_benchmark(&suite, &env, &rules(), None, &zero, &Replay { skip: None }),
            Err(BenchError::NoTrials)
        ));
    }
}
