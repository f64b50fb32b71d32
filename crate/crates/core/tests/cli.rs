use std::path::{Path, PathBuf};

use jitflow::cli::main_with;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("jitflow")
        .chain(args.iter().copied())
        .map(String::from);
    let code = main_with(argv, &mut out, &mut err);
    assert_ne!(code, 64, "usage error: {}", String::from_utf8_lossy(&err));
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// A config in `dir` that reads the shipped fixtures and writes into `dir`.
fn temp_config(dir: &Path, extra: &str) -> PathBuf {
    let f = fixtures();
    let text = format!(
        "archive = {:?}\nrules = {:?}\nenv = {:?}\noutput_dir = {:?}\n{extra}\n",
        f.join("archive.jsonl"),
        f.join("rules.json"),
        f.join("environment.json"),
        dir.join("out"),
    );
    let path = dir.join("jitflow.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_transcript_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(dir.path(), "");
    let script = fixtures().join("scripts/count_capacitors.json");
    let policy = format!("scripted:{}", s(&script));
    let transcript = dir.path().join("t.json");
    let (code, out, err) = cli(&[
        "run",
        "--config",
        s(&config),
        "--query",
        "How many capacitors does Rochester have?",
        "--policy",
        &policy,
        "--transcript",
        s(&transcript),
    ]);
    assert_eq!(code, 0, "{out}{err}");
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&transcript).unwrap()).unwrap();
    assert!(json.to_string().contains("get_component_counts"));
    assert!(dir.path().join("t.meta.json").exists());
}

#[test]
fn run_out_of_budget_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(dir.path(), "");
    let policy = format!(
        "scripted:{}",
        s(&fixtures().join("scripts/count_capacitors.json"))
    );
    let transcript = dir.path().join("t.json");
    let (code, _, _) = cli(&[
        "run",
        "--config",
        s(&config),
        "--query",
        "q",
        "--policy",
        &policy,
        "--budget",
        "1",
        "--transcript",
        s(&transcript),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn missing_archive_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(dir.path(), "");
    let missing = dir.path().join("nowhere.jsonl");
    for command in [&["validate"][..], &["run", "--query", "q"][..]] {
        let mut args = command.to_vec();
        args.extend(["--config", s(&config), "--archive", s(&missing)]);
        let (code, _, err) = cli(&args);
        assert_eq!(code, 1, "{command:?}");
        assert!(err.contains("nowhere.jsonl"), "{command:?}: {err}");
    }
}

#[test]
fn shipped_fixtures_validate() {
    for config in ["jitflow.toml", "silent_failure.toml", "planted.toml"] {
        let (code, out, err) = cli(&["validate", "--config", s(&fixtures().join(config))]);
        assert_eq!(code, 0, "{config}: {out}{err}");
    }
    let (code, out, err) = cli(&[
        "rules",
        "validate",
        "--config",
        s(&fixtures().join("jitflow.toml")),
    ]);
    assert_eq!(code, 0, "{out}{err}");
}

#[test]
fn rule_on_a_read_tool_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.json");
    std::fs::write(
        &rules,
        r#"[{"tool": "get_voltages", "requires": ["run_power_flow"], "advisory": "x"},
            {"tool": "run_power_flow", "requires": ["get_voltages"], "advisory": "x"}]"#,
    )
    .unwrap();
    let (code, out, err) = cli(&["rules", "validate", s(&rules)]);
    assert_eq!(code, 1, "{out}{err}");
    assert!(
        out.contains("get_voltages") || err.contains("get_voltages"),
        "{out}{err}"
    );
}

#[test]
fn archive_record_without_workflow_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("archive.jsonl");
    let good = std::fs::read_to_string(fixtures().join("archive.jsonl")).unwrap();
    let first = good.lines().next().unwrap();
    std::fs::write(
        &archive,
        format!("{first}\n{{\"query\": \"empty\", \"workflow\": []}}\n"),
    )
    .unwrap();
    let config = temp_config(dir.path(), "");
    let (code, out, err) = cli(&["validate", "--config", s(&config), "--archive", s(&archive)]);
    assert_eq!(code, 1, "{out}{err}");
}

#[test]
fn malformed_suite_fails_bench() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.json");
    std::fs::write(&suite, r#"[{"query_id": "a", "query": "q"}]"#).unwrap();
    let config = temp_config(dir.path(), "");
    let (code, out, err) = cli(&[
        "bench",
        "--config",
        s(&config),
        "--suite",
        s(&suite),
        "--policy",
        "oracle",
    ]);
    assert_eq!(code, 1, "{out}{err}");
}

fn bench_pass1(extra_args: &[&str]) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let scripts = fixtures().join("silent_failure/scripts.json");
    let config = temp_config(dir.path(), &format!("scripts = {scripts:?}"));
    let report = dir.path().join("report.json");
    let suite = fixtures().join("silent_failure/suite.json");
    let mut args = vec![
        "bench",
        "--config",
        s(&config),
        "--suite",
        s(&suite),
        "--trials",
        "1",
        "--report",
        s(&report),
    ];
    args.extend_from_slice(extra_args);
    let (code, out, err) = cli(&args);
    assert_eq!(code, 0, "{out}{err}");
    assert!(report.with_extension("txt").exists());
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    json["aggregate"]["pass_at_1"].as_f64().unwrap()
}

#[test]
fn supervisor_rescues_the_silent_failure_suite() {
    assert_eq!(bench_pass1(&[]), 1.0);
    assert!(bench_pass1(&["--no-supervisor"]) < 1.0);
}

#[test]
fn oracle_bench_on_reference_suite() {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(dir.path(), "");
    let report = dir.path().join("r.json");
    let suite = fixtures().join("suite.json");
    let (code, out, err) = cli(&[
        "bench",
        "--config",
        s(&config),
        "--suite",
        s(&suite),
        "--policy",
        "oracle",
        "--report",
        s(&report),
    ]);
    assert_eq!(code, 0, "{out}{err}");
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["aggregate"]["pass_at_1"].as_f64(), Some(1.0));
    assert_eq!(json["aggregate"]["queries"].as_u64(), Some(30));
}

#[test]
fn config_interpolates_environment_variables() {
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("JITFLOW_TEST_FIXTURES", fixtures());
    let config = dir.path().join("env.toml");
    std::fs::write(
        &config,
        "archive = \"${JITFLOW_TEST_FIXTURES}/archive.jsonl\"\n\
         rules = \"${JITFLOW_TEST_FIXTURES}/rules.json\"\n\
         env = \"${JITFLOW_TEST_FIXTURES}/environment.json\"\n",
    )
    .unwrap();
    let (code, out, err) = cli(&["validate", "--config", s(&config)]);
    assert_eq!(code, 0, "{out}{err}");
    std::fs::write(
        &config,
        "archive = \"${JITFLOW_TEST_UNSET_VAR}/a.jsonl\"\nrules = \"r\"\nenv = \"e\"\n",
    )
    .unwrap();
    let (code, _, err) = cli(&["validate", "--config", s(&config)]);
    assert_eq!(code, 1);
    assert!(err.contains("JITFLOW_TEST_UNSET_VAR"), "{err}");
}

#[test]
fn usage_errors_have_their_own_exit_code() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = ["jitflow", "run", "--no-such-flag"].map(String::from);
    assert_eq!(main_with(argv, &mut out, &mut err), 64);
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = temp_config(dir.path(), "budgte = 5");
    let (code, _, err) = cli(&["validate", "--config", s(&config)]);
    assert_eq!(code, 1);
    assert!(err.contains("budgte"), "{err}");
}
