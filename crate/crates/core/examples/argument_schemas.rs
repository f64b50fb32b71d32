//! Validates and coerces tool arguments against the registered schemas.

use jitflow::corpus::reference_environment;
use jitflow::workflow::ToolInvocation;

pub fn run_example() {
    let env = reference_environment();
    let schema = env.schemas().get("run_infeasibility").unwrap();
    for spec in &schema.args {
        println!("{}: {:?} required={}", spec.name, spec.ty, spec.required);
    }

    let good = ToolInvocation::new("run_infeasibility")
        .arg("norm", "l2")
        .arg("tolerance", 1e-6);
    assert!(schema.validate(&good.args).is_ok());

    let bad = ToolInvocation::new("run_infeasibility").arg("norm", "l3");
    let err = schema.validate(&bad.args).unwrap_err();
    println!("rejected: {err}");

    // numeric strings from a model become numbers
    let loose = ToolInvocation::new("top_k_infeasible_buses").arg("k", "5");
    let fixed = env
        .schemas()
        .get("top_k_infeasible_buses")
        .unwrap()
        .coerce(&loose.args);
    println!("coerced k = {}", fixed["k"]);
    assert!(fixed["k"].is_number());
}

fn main() {
    run_example();
}
