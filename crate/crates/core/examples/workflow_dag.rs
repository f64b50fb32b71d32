//! Builds the dependency DAG of a trace and checks that reordering
//! independent steps keeps it equivalent.

use jitflow::corpus::{reference_environment, reference_rules};
use jitflow::workflow::{
    dag_equivalent_with, is_linearization, trace_to_dag, ArgMatcher, ExecutionTrace, ToolInvocation,
};

pub fn run_example() {
    let env = reference_environment();
    let rules = reference_rules();
    let load = ToolInvocation::new("load_network").arg("feeder", "glover");
    let at = ToolInvocation::new("set_timestamp").arg("timestamp", "2025-03-21T18:00");
    let limits = ToolInvocation::new("set_voltage_limits")
        .arg("vmin", 0.95)
        .arg("vmax", 1.05);

    // timestamp and limits only depend on the network, so either order works
    let a = ExecutionTrace::new(vec![load.clone(), at.clone(), limits.clone()]);
    let b = ExecutionTrace::new(vec![load, limits, at]);
    let dag_a = trace_to_dag(&a, env.schemas(), &rules).unwrap();
    let dag_b = trace_to_dag(&b, env.schemas(), &rules).unwrap();
    println!("edges of A: {:?}", dag_a.edges);
    println!("edges of B: {:?}", dag_b.edges);

    let matcher = ArgMatcher::with_schemas(env.schemas());
    let same = dag_equivalent_with(&dag_a, &dag_b, &matcher).unwrap();
    println!("equivalent: {same}");
    assert!(same);
    assert!(is_linearization(&b, &dag_a).unwrap());
}

fn main() {
    run_example();
}
