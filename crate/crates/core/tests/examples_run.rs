//! Every example runs to completion; each asserts on its own results.

#[allow(dead_code)]
#[path = "../examples/adaptive_retrieval.rs"]
mod adaptive_retrieval;

#[allow(dead_code)]
#[path = "../examples/agent_episode.rs"]
mod agent_episode;

#[allow(dead_code)]
#[path = "../examples/argument_schemas.rs"]
mod argument_schemas;

#[allow(dead_code)]
#[path = "../examples/benchmark.rs"]
mod benchmark;

#[allow(dead_code)]
#[path = "../examples/command_line.rs"]
mod command_line;

#[allow(dead_code)]
#[path = "../examples/cutoff_profile.rs"]
mod cutoff_profile;

#[allow(dead_code)]
#[path = "../examples/mock_gateway.rs"]
mod mock_gateway;

#[allow(dead_code)]
#[path = "../examples/pass_at_k.rs"]
mod pass_at_k;

#[allow(dead_code)]
#[path = "../examples/remote_gateway.rs"]
mod remote_gateway;

#[allow(dead_code)]
#[path = "../examples/rule_mining.rs"]
mod rule_mining;

#[allow(dead_code)]
#[path = "../examples/simulator.rs"]
mod simulator;

#[allow(dead_code)]
#[path = "../examples/supervision.rs"]
mod supervision;

#[allow(dead_code)]
#[path = "../examples/workflow_dag.rs"]
mod workflow_dag;

#[test]
fn adaptive_retrieval() {
    adaptive_retrieval::run_example();
}

#[test]
fn agent_episode() {
    agent_episode::run_example();
}

#[test]
fn argument_schemas() {
    argument_schemas::run_example();
}

#[test]
fn benchmark() {
    benchmark::run_example();
}

#[test]
fn command_line() {
    command_line::run_example();
}

#[test]
fn cutoff_profile() {
    cutoff_profile::run_example();
}

#[test]
fn mock_gateway() {
    mock_gateway::run_example();
}

#[test]
fn pass_at_k() {
    pass_at_k::run_example();
}

#[test]
fn remote_gateway() {
    remote_gateway::run_example();
}

#[test]
fn rule_mining() {
    rule_mining::run_example();
}

#[test]
fn simulator() {
    simulator::run_example();
}

#[test]
fn supervision() {
    supervision::run_example();
}

#[test]
fn workflow_dag() {
    workflow_dag::run_example();
}
