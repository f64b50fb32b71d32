//! Proposes prerequisite rules from the verified workflows in the archive.

use jitflow::corpus::{reference_archive, reference_environment, reference_rules};
use jitflow::supervisor::{mine_rules, MiningOptions};

pub fn run_example() {
    let env = reference_environment();
    let archive = reference_archive();
    let mined = mine_rules(
        archive.iter().map(|r| &r.workflow),
        env.schemas(),
        MiningOptions::default(),
    );
    let curated = reference_rules();

    for rule in &mined {
        let note = match curated.required(&rule.tool) {
            None => "  (no curated rule)",
            Some(req) if rule.requires.iter().all(|t| req.contains(t)) => "",
            Some(_) => "  (wider than curated)",
        };
        println!("{:<30} <- {:?}{note}", rule.tool, rule.requires);
    }
    assert!(!mined.is_empty());
}

fn main() {
    run_example();
}
