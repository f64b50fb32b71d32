//! Runs the silent-failure scenarios with and without the supervisor and
//! prints both tables.

use jitflow::corpus::{
    reference_archive, reference_environment, reference_rules, scriptbook, silent_failure_scenarios,
};
use jitflow::eval::{run_benchmark, BenchmarkConfig};
use jitflow::gateway::{EchoFilterChat, MockEmbedder};
use jitflow::harness::{Agents, PolicySource};
use jitflow::retrieval::RetrievalMode;
use jitflow::supervisor::Supervisor;

pub fn run_example() {
    let env = reference_environment();
    let rules = reference_rules();
    let archive = reference_archive();
    let scenarios = silent_failure_scenarios();
    let suite: Vec<_> = scenarios.iter().map(|s| s.entry.clone()).collect();

    let embedder = MockEmbedder::new(0);
    let filter = EchoFilterChat::new();
    let source = PolicySource::Scripted {
        book: scriptbook(&scenarios),
        default: None,
    };
    let agents =
        Agents::new(&archive, &embedder, &filter, source).with_retrieval(RetrievalMode::TopK(3));
    let supervisor = Supervisor::new(rules.clone());

    let mut config = BenchmarkConfig {
        label: "supervised".into(),
        retrieval: "topk:3".into(),
        ..Default::default()
    };
    let on = run_benchmark(&suite, &env, &rules, Some(&supervisor), &config, &agents).unwrap();
    config.label = "unsupervised".into();
    let off = run_benchmark(&suite, &env, &rules, None, &config, &agents).unwrap();

    print!("{}\n{}", on.to_table(), off.to_table());
    assert_eq!(on.aggregate.pass_at_1, 1.0);
    assert_eq!(off.aggregate.pass_at_1, 0.0);
}

fn main() {
    run_example();
}
