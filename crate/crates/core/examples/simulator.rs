//! The deterministic grid simulator: a skipped power flow is not an error,
//! the voltages are just stale.

use jitflow::corpus::reference_environment;
use jitflow::env::{classify_tools, reference_probe_suite};
use jitflow::workflow::{ToolInvocation, ToolKind};

pub fn run_example() {
    let env = reference_environment();
    let kinds = classify_tools(&env, &reference_probe_suite(&env)).unwrap();
    let writes: Vec<_> = kinds
        .iter()
        .filter(|(_, k)| **k == ToolKind::Write)
        .map(|(n, _)| n.as_str())
        .collect();
    println!("{} tools, writes: {writes:?}", kinds.len());

    let setup = [
        ToolInvocation::new("load_network").arg("feeder", "Rochester"),
        ToolInvocation::new("set_timestamp").arg("timestamp", "2025-03-19 15:00"),
        ToolInvocation::new("attach_load_profile").arg("source", "ami"),
    ];
    let voltages = ToolInvocation::new("get_voltages");

    let skipped: Vec<_> = setup.iter().cloned().chain([voltages.clone()]).collect();
    let (_, obs) = env.replay(skipped.iter());
    let stale = obs.last().unwrap();

    let full: Vec<_> = setup
        .iter()
        .cloned()
        .chain([ToolInvocation::new("run_power_flow"), voltages])
        .collect();
    let (state, obs) = env.replay(full.iter());
    let fresh = obs.last().unwrap();

    let head = |text: &str| text.lines().take(2).collect::<Vec<_>>().join(" | ");
    println!(
        "without power flow: error={} {}",
        stale.is_error,
        head(&stale.text)
    );
    println!(
        "with power flow:    error={} {}",
        fresh.is_error,
        head(&fresh.text)
    );
    println!("state digest {}", state.digest());
    assert!(!stale.is_error);
    assert_ne!(stale.structured, fresh.structured);
}

fn main() {
    run_example();
}
