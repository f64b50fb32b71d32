//! Drives the `validate` and `bench` commands in-process against the
//! shipped fixtures.

use std::path::Path;

fn jitflow(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("jitflow")
        .chain(args.iter().copied())
        .map(String::from);
    let code = jitflow::cli::main_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned() + &String::from_utf8_lossy(&err),
    )
}

pub fn run_example() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = fixtures.join("jitflow.toml");
    let config = config.to_str().unwrap();

    let (code, text) = jitflow(&["--config", config, "validate"]);
    print!("{text}");
    assert_eq!(code, 0);

    let report = std::env::temp_dir().join(format!("jitflow-example-{}.json", std::process::id()));
    let suite = fixtures.join("suite.json");
    let (code, text) = jitflow(&[
        "--config",
        config,
        "bench",
        "--suite",
        suite.to_str().unwrap(),
        "--policy",
        "oracle",
        "--trials",
        "1",
        "--report",
        report.to_str().unwrap(),
    ]);
    print!("{}", text.lines().rev().take(1).collect::<String>());
    println!();
    assert_eq!(code, 0);
    for ext in ["json", "txt", "meta.json"] {
        let _ = std::fs::remove_file(report.with_extension(ext));
    }
}

fn main() {
    run_example();
}
