//! A scripted agent forgets the timestamp; the supervisor blocks the load
//! profile call and the script's corrective branch recovers.

use jitflow::agent::{run_episode, Script, ScriptStep, ScriptedPolicy, StepOutcome};
use jitflow::corpus::{reference_environment, reference_rules};
use jitflow::supervisor::Supervisor;
use jitflow::workflow::ToolInvocation;

pub fn run_example() {
    let env = reference_environment();
    let supervisor = Supervisor::new(reference_rules());
    let at = ToolInvocation::new("set_timestamp").arg("timestamp", "2025-03-22T12:00");
    let mut script = Script::from_calls(
        [
            ToolInvocation::new("load_network").arg("feeder", "south_hero"),
            ToolInvocation::new("attach_load_profile").arg("source", "ami"),
            ToolInvocation::new("run_power_flow"),
            ToolInvocation::new("get_voltages"),
        ],
        "Voltages reported.",
    );
    script
        .on_advisory
        .insert("attach_load_profile".into(), vec![ScriptStep::Call(at)]);

    let query =
        "Run power flow on South Hero at noon on 2025-03-22 with AMI loads and report voltages.";
    let result = run_episode(
        query,
        &[],
        &ScriptedPolicy::new(script),
        &env,
        Some(&supervisor),
        10,
    )
    .unwrap();
    for step in &result.transcript.steps {
        let tag = match step.decision {
            StepOutcome::Blocked => "blocked ",
            _ => "        ",
        };
        println!("{tag}{}", step.action);
    }
    println!(
        "final: {} ({} blocked, {} tokens)",
        result.final_response,
        result.blocked_count,
        result.token_usage.total()
    );
    let tools: Vec<_> = result.trace.tool_names().collect();
    assert_eq!(tools[1], "set_timestamp");
    assert_eq!(result.blocked_count, 1);
}

fn main() {
    run_example();
}
