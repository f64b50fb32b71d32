//! The closed agent loop: sample an action, route it through the
//! supervisor, execute it or return the advisory, record history.

mod policy;
mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Environment, Observation};
use crate::gateway::{GatewayError, TokenUsage};
use crate::retrieval::ExemplarRecord;
use crate::supervisor::{record_execution, Decision, Supervisor, SupervisorState};
use crate::workflow::{ExecutionTrace, SchemaRegistry, ToolInvocation};

pub use policy::{
    parse_action, ActionParseError, ChatPolicy, Policy, PolicyStep, Script, ScriptStep,
    ScriptedPolicy,
};
pub use prompt::{render_system_prompt, truncate_observation, OBSERVATION_LIMIT};

/// Prefix every advisory observation starts with.
pub const ADVISORY_MARKER: &str = "DECISION REQUIRED";

/// Default step budget per episode.
pub const DEFAULT_BUDGET: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    ToolCall(ToolInvocation),
    FinalResponse(String),
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).expect("action serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: AgentAction,
    pub observation: String,
}

/// Append-only list of (action, observation) pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct InteractionHistory {
    entries: Vec<HistoryEntry>,
}

impl InteractionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, action: AgentAction, observation: impl Into<String>) {
        self.entries.push(HistoryEntry {
            action,
            observation: observation.into(),
        });
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Everything a policy conditions on.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub query: &'a str,
    pub exemplars: &'a [ExemplarRecord],
    pub history: &'a InteractionHistory,
    pub schemas: &'a SchemaRegistry,
    /// [`render_system_prompt`] of the three fields above.
    pub system_prompt: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalResponse,
    BudgetExhausted,
}

/// What happened to one sampled action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Executed,
    Blocked,
    /// The environment or the action parser refused the call.
    Rejected,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub action: AgentAction,
    pub decision: StepOutcome,
    /// Untruncated observation text.
    pub observation: String,
    pub tokens: TokenUsage,
    pub state_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub query: String,
    pub exemplar_ids: Vec<String>,
    pub steps: Vec<TranscriptStep>,
    pub final_response: String,
    pub terminated_by: Termination,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub trace: ExecutionTrace,
    pub final_response: String,
    pub steps_taken: usize,
    pub blocked_count: usize,
    pub token_usage: TokenUsage,
    pub terminated_by: Termination,
    pub history: InteractionHistory,
    pub transcript: Transcript,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("step budget must be at least 1")]
    InvalidBudget,
    #[error("policy failed after {} step(s): {source}", partial.steps_taken)]
    Policy {
        source: GatewayError,
        /// The episode up to the failing step.
        partial: Box<EpisodeResult>,
    },
}

/// Runs one episode from the environment's initial state. With
/// `supervisor = None` every call goes straight to the environment.
///
/// Every sampled action counts toward `budget`, including blocked ones.
/// Executed calls enter both the trace and the history; blocked and
/// rejected calls only the history. The final answer appears in the
/// transcript but not in the history.
pub fn run_episode(
    query: &str,
    exemplars: &[ExemplarRecord],
    policy: &dyn Policy,
    env: &Environment,
    supervisor: Option<&Supervisor>,
    budget: usize,
) -> Result<EpisodeResult, EpisodeError> {
    if budget == 0 {
        return Err(EpisodeError::InvalidBudget);
    }
    let schemas = env.schemas();
    let system_prompt = render_system_prompt(query, exemplars, schemas);
    let mut result = EpisodeResult {
        trace: ExecutionTrace::default(),
        final_response: String::new(),
        steps_taken: 0,
        blocked_count: 0,
        token_usage: TokenUsage::default(),
        terminated_by: Termination::BudgetExhausted,
        history: InteractionHistory::new(),
        transcript: Transcript {
            query: query.to_string(),
            exemplar_ids: exemplars.iter().map(|r| r.id.clone()).collect(),
            steps: Vec::new(),
            final_response: String::new(),
            terminated_by: Termination::BudgetExhausted,
        },
    };
    let mut state = env.reset();
    let mut ledger = SupervisorState::new();

    while result.steps_taken < budget {
        let ctx = PolicyContext {
            query,
            exemplars,
            history: &result.history,
            schemas,
            system_prompt: &system_prompt,
        };
        let step = match policy.next_action(&ctx) {
            Ok(step) => step,
            Err(source) => {
                return Err(EpisodeError::Policy {
                    source,
                    partial: Box::new(result),
                })
            }
        };
        result.steps_taken += 1;
        result.token_usage += step.usage;

        let (action, outcome, observation) = match step.action {
            Ok(AgentAction::FinalResponse(text)) => {
                result.transcript.steps.push(TranscriptStep {
                    action: AgentAction::FinalResponse(text.clone()),
                    decision: StepOutcome::Final,
                    observation: String::new(),
                    tokens: step.usage,
                    state_digest: state.digest(),
                });
                result.final_response = text.clone();
                result.terminated_by = Termination::FinalResponse;
                result.transcript.final_response = text;
                result.transcript.terminated_by = Termination::FinalResponse;
                return Ok(result);
            }
            Err(e) => (
                AgentAction::ToolCall(ToolInvocation::new(e.tool.clone())),
                StepOutcome::Rejected,
                Observation::error(e.to_string()).text,
            ),
            Ok(AgentAction::ToolCall(call)) => {
                let decision = match supervisor {
                    Some(sup) => {
                        let (decision, next) = sup.decide(&ledger, &call);
                        ledger = next;
                        decision
                    }
                    None => Decision::Execute,
                };
                match decision {
                    Decision::Block { advisory } => {
                        result.blocked_count += 1;
                        (AgentAction::ToolCall(call), StepOutcome::Blocked, advisory)
                    }
                    Decision::Execute => {
                        let (next, obs) = env.execute_tool(&state, &call);
                        if obs.is_error {
                            (AgentAction::ToolCall(call), StepOutcome::Rejected, obs.text)
                        } else {
                            state = next;
                            ledger = record_execution(&ledger, &call.tool);
                            result.trace.push(call.clone());
                            (AgentAction::ToolCall(call), StepOutcome::Executed, obs.text)
                        }
                    }
                }
            }
        };
        tracing::debug!(step = result.steps_taken, action = %action, outcome = ?outcome, "agent step");
        result
            .history
            .push(action.clone(), truncate_observation(&observation));
        result.transcript.steps.push(TranscriptStep {
            action,
            decision: outcome,
            observation,
            tokens: step.usage,
            state_digest: state.digest(),
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Fixture;
    use crate::gateway::{ChatBackend, ChatRequest, ChatResponse, MockChat, MockReply};
    use crate::supervisor::{PrerequisiteRule, RuleLibrary};
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    fn env() -> Environment {
        Environment::new(
            Fixture::parse(
                r#"{"feeders": {"glover": {"buses": 40, "lines": 39, "transformers": 12,
                    "capacitors": 2, "regulators": 1, "base_timestamp": "2025-01-01T00:00"}}, "seed": 5}"#,
            )
            .unwrap(),
        )
    }

    fn call(tool: &str) -> ToolInvocation {
        ToolInvocation::new(tool)
    }

    fn load() -> ToolInvocation {
        call("load_network").arg("feeder", "glover")
    }

    fn supervisor(pairs: &[(&str, &[&str])]) -> Supervisor {
        Supervisor::new(
            RuleLibrary::from_rules(pairs.iter().map(|(t, r)| {
                PrerequisiteRule::new(*t, r.iter().copied(), "Run {missing} first.")
            }))
            .unwrap(),
        )
    }

    fn scripted(calls: Vec<ToolInvocation>) -> ScriptedPolicy {
        ScriptedPolicy::new(Script::from_calls(calls, "done"))
    }

    #[test]
    fn final_only() {
        let policy = scripted(vec![]);
        let r = run_episode("q", &[], &policy, &env(), None, 5).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.steps_taken, 1);
        assert_eq!(r.terminated_by, Termination::FinalResponse);
        assert_eq!(r.final_response, "done");
        assert!(r.history.is_empty());
        assert_eq!(r.transcript.steps.len(), 1);
    }

    #[test]
    fn satisfied_rules_execute_everything() {
        let policy = scripted(vec![load(), call("run_power_flow"), call("get_voltages")]);
        let sup = supervisor(&[
            ("run_power_flow", &["load_network"]),
            ("get_voltages", &["run_power_flow"]),
        ]);
        let r = run_episode("q", &[], &policy, &env(), Some(&sup), 30).unwrap();
        assert_eq!(r.trace.len(), 3);
        assert_eq!(r.blocked_count, 0);
        assert_eq!(r.history.len(), r.steps_taken - 1);
    }

    #[test]
    fn blocked_call_goes_to_history_only() {
        let policy = scripted(vec![
            load(),
            call("plot_voltage_map"),
            call("run_power_flow"),
            call("plot_voltage_map"),
        ]);
        let sup = supervisor(&[("plot_voltage_map", &["run_power_flow"])]);
        let r = run_episode("q", &[], &policy, &env(), Some(&sup), 30).unwrap();
        assert_eq!(r.blocked_count, 1);
        assert_eq!(r.trace.len(), 3);
        assert!(r.history.entries()[1]
            .observation
            .contains("DECISION REQUIRED"));
        assert_eq!(r.transcript.steps[1].decision, StepOutcome::Blocked);
        assert_eq!(
            r.transcript.steps[0].state_digest,
            r.transcript.steps[1].state_digest
        );
    }

    #[test]
    fn budget_exhaustion_is_exact() {
        let policy = ScriptedPolicy::new(Script {
            steps: vec![ScriptStep::Call(call("list_feeders")); 50],
            on_advisory: Default::default(),
        });
        let r = run_episode("q", &[], &policy, &env(), None, 7).unwrap();
        assert_eq!(r.steps_taken, 7);
        assert_eq!(r.terminated_by, Termination::BudgetExhausted);
        assert_eq!(r.history.len(), 7);
        assert!(matches!(
            run_episode("q", &[], &policy, &env(), None, 0),
            Err(EpisodeError::InvalidBudget)
        ));
    }

    #[test]
    fn corrective_branch_runs_after_advisory() {
        let mut script = Script::from_calls(vec![load(), call("plot_voltage_map")], "done");
        script.on_advisory.insert(
            "plot_voltage_map".into(),
            vec![ScriptStep::Call(call("run_power_flow"))],
        );
        let policy = ScriptedPolicy::new(script);
        let sup = supervisor(&[("plot_voltage_map", &["run_power_flow"])]);
        let r = run_episode("q", &[], &policy, &env(), Some(&sup), 30).unwrap();
        let names: Vec<&str> = r.trace.tool_names().collect();
        assert_eq!(
            names,
            ["load_network", "run_power_flow", "plot_voltage_map"]
        );
        assert_eq!(r.terminated_by, Termination::FinalResponse);
    }

    #[test]
    fn unknown_tools_are_fed_back() {
        let policy = scripted(vec![call("foo"), load()]);
        let r = run_episode("q", &[], &policy, &env(), None, 30).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert!(r.history.entries()[0].observation.starts_with("ERROR"));
        assert_eq!(r.transcript.steps[0].decision, StepOutcome::Rejected);
    }

    #[test]
    fn transcripts_are_reproducible() {
        let policy = scripted(vec![load(), call("run_power_flow"), call("get_voltages")]);
        let a = run_episode("q", &[], &policy, &env(), None, 30).unwrap();
        let b = run_episode("q", &[], &policy, &env(), None, 30).unwrap();
        assert_eq!(a.transcript.to_json(), b.transcript.to_json());
        assert!(a.token_usage.total() > 0);
    }

    struct Flaky {
        failures: AtomicUsize,
        error: GatewayError,
    }

    impl ChatBackend for Flaky {
        fn identity(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _: &ChatRequest) -> Result<ChatResponse, GatewayError> {
            if self.failures.fetch_sub(1, Ordering::SeqCst) > 0 {
                return Err(self.error.clone());
            }
            Ok(ChatResponse {
                content: crate::gateway::ChatContent::Text("ok".into()),
                usage: TokenUsage::new(3, 1),
            })
        }
    }

    #[test]
    fn chat_policy_retries_transient_failures() {
        let backend = Flaky {
            failures: AtomicUsize::new(2),
            error: GatewayError::Transport("reset".into()),
        };
        let policy = ChatPolicy::new(&backend).with_retries(3, Duration::ZERO);
        let r = run_episode("q", &[], &policy, &env(), None, 5).unwrap();
        assert_eq!(r.final_response, "ok");
        assert_eq!(r.token_usage, TokenUsage::new(3, 1));

        let fatal = Flaky {
            failures: AtomicUsize::new(1),
            error: GatewayError::Auth("bad key".into()),
        };
        let policy = ChatPolicy::new(&fatal).with_retries(3, Duration::ZERO);
        let err = run_episode("q", &[], &policy, &env(), None, 5).unwrap_err();
        match err {
            EpisodeError::Policy { partial, .. } => assert_eq!(partial.steps_taken, 0),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn chat_policy_over_mock_script() {
        let chat = MockChat::from_messages([(
            "Which feeders exist?",
            MockReply::ToolCall {
                name: "list_feeders".into(),
                arguments: json!({}),
            },
        )]);
        let policy = ChatPolicy::new(&chat);
        let r = run_episode("Which feeders exist?", &[], &policy, &env(), None, 3).unwrap();
        // the last user message never changes, so the mock keeps calling the tool
        assert_eq!(r.terminated_by, Termination::BudgetExhausted);
        assert_eq!(r.trace.len(), 3);
        let req = policy.request(&PolicyContext {
            query: "Which feeders exist?",
            exemplars: &[],
            history: &r.history,
            schemas: env().schemas(),
            system_prompt: "sys",
        });
        assert_eq!(req.messages.len(), 2 + 2 * 3);
        assert_eq!(req.tools.len(), 82);
    }
}
