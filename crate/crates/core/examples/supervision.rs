//! One-shot prerequisite supervision: the first violating call is blocked
//! with an advisory, a repeat goes through.

use jitflow::corpus::reference_rules;
use jitflow::supervisor::{record_execution, Decision, Supervisor, SupervisorState};
use jitflow::workflow::ToolInvocation;

pub fn run_example() {
    let supervisor = Supervisor::new(reference_rules());
    let mut state = SupervisorState::new();
    state = record_execution(&state, "load_network");

    let pf = ToolInvocation::new("run_power_flow");
    let (first, state) = supervisor.decide(&state, &pf);
    match &first {
        Decision::Block { advisory } => println!("{advisory}\n"),
        Decision::Execute => unreachable!("timestamp and loads are missing"),
    }
    let (second, _) = supervisor.decide(&state, &pf);
    println!("repeat: {second:?}");
    assert!(first.is_block());
    assert!(!second.is_block());
}

fn main() {
    run_example();
}
