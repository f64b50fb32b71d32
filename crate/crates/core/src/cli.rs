//! Command-line surface: `run`, `bench`, `validate` and `rules validate`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::agent::{run_episode, EpisodeError, Termination};
use crate::config::{BackendKind, EngineConfig};
use crate::env::{classify_tools, reference_probe_suite, reference_toolset, Environment, Fixture};
use crate::eval::{parse_suite, run_benchmark, BenchmarkConfig, SuccessMode};
use crate::gateway::{
    ChatBackend, EchoFilterChat, Embedder, MockChat, MockEmbedder, RemoteChat, RemoteEmbedder,
};
use crate::harness::{Agents, PolicySource};
use crate::retrieval::{load_archive, ExemplarRecord, RetrievalMode};
use crate::supervisor::{RuleLibrary, Supervisor};
use crate::workflow::SchemaRegistry;

#[derive(Debug, Parser)]
#[command(
    name = "jitflow",
    version,
    about = "Tool-orchestration agent with exemplar retrieval and prerequisite supervision"
)]
pub struct Cli {
    /// Engine configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one query and write its transcript.
    Run(RunArgs),
    /// Run a benchmark suite and write JSON and text reports.
    Bench(BenchArgs),
    /// Check the rule file, the archive and the environment tool roster.
    Validate(ValidateArgs),
    /// Rule file commands.
    Rules {
        #[command(subcommand)]
        command: RulesCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum RulesCommand {
    /// Load a rule file against the tool registry and list every problem.
    Validate {
        /// Defaults to the rule file named in the config.
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Environment fixture.
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// `scripted:<file>`, `oracle` (bench only), or `remote` for the
    /// configured chat backend.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub no_supervisor: bool,
    /// `adaptive`, `topk:<k>` or `none`.
    #[arg(long)]
    pub retrieval: Option<RetrievalMode>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub query: String,
    /// Key into a script book.
    #[arg(long, default_value = "run")]
    pub query_id: String,
    /// Defaults to `<output_dir>/transcript.json`.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[command(flatten)]
    pub common: Overrides,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    /// JSON report path; the table goes next to it with a `.txt` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// `result` or `coverage`.
    #[arg(long, default_value = "result")]
    pub success: String,
    #[arg(long)]
    pub label: Option<String>,
    #[command(flatten)]
    pub common: Overrides,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 success, 1 failure, 2 budget exhausted
/// (`run`), 64 bad command line.
pub fn main_with(
    args: impl IntoIterator<Item = String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(cli.config.as_deref(), a, out),
        Command::Bench(a) => cmd_bench(cli.config.as_deref(), a, out),
        Command::Validate(a) => cmd_validate(cli.config.as_deref(), a, out),
        Command::Rules {
            command: RulesCommand::Validate { file },
        } => cmd_rules_validate(cli.config.as_deref(), file.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
    }
}

fn load_config(path: Option<&Path>, o: &Overrides) -> Result<EngineConfig, String> {
    let mut cfg = match path {
        Some(p) => EngineConfig::load(p).map_err(|e| e.to_string())?,
        None => {
            let need = |v: &Option<PathBuf>, flag: &str| {
                v.clone()
                    .ok_or_else(|| format!("--{flag} is required without --config"))
            };
            let text = format!(
                "archive = {:?}\nrules = {:?}\nenv = {:?}\n",
                need(&o.archive, "archive")?,
                need(&o.rules, "rules")?,
                need(&o.env, "env")?
            );
            EngineConfig::parse(&text, Path::new("."), "<flags>", |_| None)
                .map_err(|e| e.to_string())?
        }
    };
    let exists = |p: &PathBuf, what: &str| {
        if p.exists() {
            Ok(p.clone())
        } else {
            Err(format!("{what} `{}` does not exist", p.display()))
        }
    };
    if let Some(p) = &o.archive {
        cfg.archive = exists(p, "archive")?;
    }
    if let Some(p) = &o.rules {
        cfg.rules = exists(p, "rules")?;
    }
    if let Some(p) = &o.env {
        cfg.env = exists(p, "env fixture")?;
    }
    if let Some(b) = o.budget {
        if b == 0 {
            return Err("--budget must be at least 1".into());
        }
        cfg.budget = b;
    }
    if o.no_supervisor {
        cfg.supervisor = false;
    }
    if let Some(r) = o.retrieval {
        cfg.retrieval = r;
    }
    Ok(cfg)
}

struct Backends {
    chat: Box<dyn ChatBackend>,
    filter: Box<dyn ChatBackend>,
    embedder: Box<dyn Embedder>,
}

fn backends(cfg: &EngineConfig) -> Result<Backends, String> {
    let g = &cfg.gateway;
    match g.backend {
        BackendKind::Mock => {
            let chat = match &g.chat_script {
                Some(p) => MockChat::load(p).map_err(|e| e.to_string())?,
                None => MockChat::new(Default::default()),
            };
            let mut embedder = MockEmbedder::new(g.mock_seed);
            if let Some(p) = &g.embedding_overrides {
                embedder = embedder.load_overrides(p).map_err(|e| e.to_string())?;
            }
            Ok(Backends {
                chat: Box::new(chat),
                filter: Box::new(EchoFilterChat::new()),
                embedder: Box::new(embedder),
            })
        }
        BackendKind::Remote => {
            let remote = g.remote.clone().ok_or("gateway.remote is missing")?;
            let filter = g.filter.clone().unwrap_or_else(|| remote.clone());
            Ok(Backends {
                chat: Box::new(RemoteChat::new(remote.clone())),
                filter: Box::new(RemoteChat::new(filter)),
                embedder: Box::new(RemoteEmbedder::new(remote, g.embedding_dimension)),
            })
        }
    }
}

struct Loaded {
    env: Environment,
    rules: RuleLibrary,
    archive: Vec<ExemplarRecord>,
}

fn load_inputs(cfg: &EngineConfig) -> Result<Loaded, String> {
    let fixture = Fixture::load(&cfg.env).map_err(|e| format!("{}: {e}", cfg.env.display()))?;
    let env = Environment::new(fixture).with_mode(cfg.missing_objects);
    let rules = RuleLibrary::load_file(&cfg.rules, env.schemas()).map_err(|errs| {
        errs.iter()
            .map(|e| format!("{}: {e}", cfg.rules.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    let archive = load_archive(&cfg.archive).map_err(|errs| {
        errs.iter()
            .map(|e| format!("{}:{}: {}", cfg.archive.display(), e.line, e.message))
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    Ok(Loaded {
        env,
        rules,
        archive,
    })
}

fn policy_source<'a>(
    spec: Option<&str>,
    cfg: &EngineConfig,
    chat: &'a dyn ChatBackend,
) -> Result<PolicySource<'a>, String> {
    let chat_source = || PolicySource::Chat {
        backend: chat,
        attempts: cfg.gateway.retries.max(1),
    };
    match spec {
        None => match &cfg.scripts {
            Some(p) => PolicySource::load_scripts(p),
            None => Ok(chat_source()),
        },
        Some("oracle") => Ok(PolicySource::Oracle),
        Some("remote") => Ok(chat_source()),
        Some(other) => match other.strip_prefix("scripted:") {
            Some(file) => PolicySource::load_scripts(Path::new(file)),
            None => Err(format!(
                "unknown policy `{other}` (scripted:<file> | oracle | remote)"
            )),
        },
    }
}

fn epoch_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Sidecar holding wall-clock facts kept out of reproducible outputs.
fn write_metadata(
    artifact: &Path,
    cfg: &EngineConfig,
    started: u64,
    elapsed_ms: u128,
) -> Result<(), String> {
    let meta = json!({
        "artifact": artifact.file_name().map(|n| n.to_string_lossy().to_string()),
        "config": cfg.source.display().to_string(),
        "started_at_unix": started,
        "elapsed_ms": elapsed_ms,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_file(
        &artifact.with_extension("meta.json"),
        &format!("{meta:#}\n"),
    )
}

fn supervisor_for(cfg: &EngineConfig, rules: &RuleLibrary) -> Option<Supervisor> {
    cfg.supervisor
        .then(|| Supervisor::new(rules.clone()).with_freshness(cfg.freshness))
}

fn cmd_run(config: Option<&Path>, a: &RunArgs, out: &mut dyn Write) -> Result<i32, String> {
    let started = epoch_seconds();
    let clock = Instant::now();
    let cfg = load_config(config, &a.common)?;
    let loaded = load_inputs(&cfg)?;
    let env = loaded.env.with_sandbox(cfg.output_dir.join("exports"));
    let b = backends(&cfg)?;
    let source = policy_source(a.common.policy.as_deref(), &cfg, b.chat.as_ref())?;
    if matches!(source, PolicySource::Oracle) {
        return Err("the oracle policy needs an expert workflow; use it with `bench`".into());
    }
    let agents = Agents::new(
        &loaded.archive,
        b.embedder.as_ref(),
        b.filter.as_ref(),
        source,
    )
    .with_retrieval(cfg.retrieval);
    let exemplars = agents.select(&a.query)?.selected;
    let policy = agents.policy_for(&a.query_id, &[])?;
    let supervisor = supervisor_for(&cfg, &loaded.rules);
    let transcript_path = a
        .transcript
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("transcript.json"));
    let result = match run_episode(
        &a.query,
        &exemplars,
        policy.as_ref(),
        &env,
        supervisor.as_ref(),
        cfg.budget,
    ) {
        Ok(r) => r,
        Err(EpisodeError::Policy { source, partial }) => {
            write_file(&transcript_path, &partial.transcript.to_json())?;
            return Err(format!(
                "policy failed after {} step(s): {source}; partial transcript at {}",
                partial.steps_taken,
                transcript_path.display()
            ));
        }
        Err(e) => return Err(e.to_string()),
    };
    write_file(&transcript_path, &result.transcript.to_json())?;
    write_metadata(&transcript_path, &cfg, started, clock.elapsed().as_millis())?;
    let _ = writeln!(out, "{}", result.final_response);
    let _ = writeln!(
        out,
        "[{} step(s), {} blocked, {} tokens, transcript {}]",
        result.steps_taken,
        result.blocked_count,
        result.token_usage.total(),
        transcript_path.display()
    );
    Ok(match result.terminated_by {
        Termination::FinalResponse => 0,
        Termination::BudgetExhausted => 2,
    })
}

fn cmd_bench(config: Option<&Path>, a: &BenchArgs, out: &mut dyn Write) -> Result<i32, String> {
    let started = epoch_seconds();
    let clock = Instant::now();
    let cfg = load_config(config, &a.common)?;
    if a.trials == 0 {
        return Err("--trials must be at least 1".into());
    }
    let success_mode = match a.success.as_str() {
        "result" => SuccessMode::ResultEquivalence,
        "coverage" => SuccessMode::Coverage,
        other => {
            return Err(format!(
                "unknown success mode `{other}` (result | coverage)"
            ))
        }
    };
    let loaded = load_inputs(&cfg)?;
    let suite_text =
        std::fs::read_to_string(&a.suite).map_err(|e| format!("{}: {e}", a.suite.display()))?;
    let suite = parse_suite(&suite_text, loaded.env.schemas()).map_err(|errs| {
        errs.iter()
            .map(|e| format!("{}: {e}", a.suite.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    let b = backends(&cfg)?;
    let source = policy_source(a.common.policy.as_deref(), &cfg, b.chat.as_ref())?;
    let agents = Agents::new(
        &loaded.archive,
        b.embedder.as_ref(),
        b.filter.as_ref(),
        source,
    )
    .with_retrieval(cfg.retrieval);
    let supervisor = supervisor_for(&cfg, &loaded.rules);
    let bench = BenchmarkConfig {
        label: a.label.clone().unwrap_or_else(|| "jitflow".into()),
        trials: a.trials,
        budget: cfg.budget,
        success_mode,
        retrieval: cfg.retrieval.to_string(),
        jobs: a.jobs,
    };
    let report = run_benchmark(
        &suite,
        &loaded.env,
        &loaded.rules,
        supervisor.as_ref(),
        &bench,
        &agents,
    )
    .map_err(|e| e.to_string())?;
    let json_path = a
        .report
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("report.json"));
    write_file(&json_path, &report.to_json())?;
    let table = report.to_table();
    write_file(&json_path.with_extension("txt"), &table)?;
    write_metadata(&json_path, &cfg, started, clock.elapsed().as_millis())?;
    let _ = write!(out, "{table}");
    let failed: Vec<_> = report.runs.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        let _ = writeln!(
            out,
            "incomplete: {} trial {}: {}",
            r.query_id,
            r.trial_id,
            r.error.as_deref().unwrap_or_default()
        );
    }
    Ok(if failed.is_empty() { 0 } else { 1 })
}

fn report_rule_errors(path: &Path, schemas: &SchemaRegistry, out: &mut dyn Write) -> bool {
    match RuleLibrary::load_file(path, schemas) {
        Ok(lib) => {
            let _ = writeln!(out, "ok: {} ({} rules)", path.display(), lib.len());
            true
        }
        Err(errs) => {
            for e in errs {
                let _ = writeln!(out, "FAIL: {}: {e}", path.display());
            }
            false
        }
    }
}

fn cmd_rules_validate(
    config: Option<&Path>,
    file: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, String> {
    let path = match (file, config) {
        (Some(f), _) => f.to_path_buf(),
        (None, Some(c)) => EngineConfig::load(c).map_err(|e| e.to_string())?.rules,
        (None, None) => return Err("give a rule file or --config".into()),
    };
    let registry = reference_toolset();
    Ok(if report_rule_errors(&path, registry.schemas(), out) {
        0
    } else {
        1
    })
}

fn cmd_validate(
    config: Option<&Path>,
    a: &ValidateArgs,
    out: &mut dyn Write,
) -> Result<i32, String> {
    let paths = Overrides {
        archive: a.archive.clone(),
        rules: a.rules.clone(),
        env: a.env.clone(),
        policy: None,
        budget: None,
        no_supervisor: false,
        retrieval: None,
    };
    let cfg = load_config(config, &paths)?;
    let mut ok = true;
    let fixture = match Fixture::load(&cfg.env) {
        Ok(f) => {
            let _ = writeln!(
                out,
                "ok: {} ({} feeders)",
                cfg.env.display(),
                f.feeders.len()
            );
            f
        }
        Err(e) => {
            let _ = writeln!(out, "FAIL: {}: {e}", cfg.env.display());
            return Ok(1);
        }
    };
    let env = Environment::new(fixture);
    match classify_tools(&env, &reference_probe_suite(&env)) {
        Ok(kinds) => {
            let _ = writeln!(out, "ok: tool roster ({} tools classified)", kinds.len());
        }
        Err(e) => {
            ok = false;
            let _ = writeln!(out, "FAIL: tool roster: {e}");
        }
    }
    ok &= report_rule_errors(&cfg.rules, env.schemas(), out);
    match load_archive(&cfg.archive) {
        Ok(records) => {
            let mut bad = 0;
            for (line, r) in records.iter().enumerate() {
                for step in &r.workflow.steps {
                    let problem = match env.schemas().get(&step.tool) {
                        None => Some(format!("unknown tool `{}`", step.tool)),
                        Some(s) => s
                            .validate(&step.args)
                            .err()
                            .map(|e| format!("`{}`: {e}", step.tool)),
                    };
                    if let Some(p) = problem {
                        bad += 1;
                        let _ = writeln!(
                            out,
                            "FAIL: {}: record #{} `{}`: {p}",
                            cfg.archive.display(),
                            line + 1,
                            r.id
                        );
                    }
                }
            }
            if bad == 0 {
                let _ = writeln!(
                    out,
                    "ok: {} ({} records)",
                    cfg.archive.display(),
                    records.len()
                );
            }
            ok &= bad == 0;
        }
        Err(errs) => {
            ok = false;
            for e in errs {
                let _ = writeln!(
                    out,
                    "FAIL: {}:{}: {}",
                    cfg.archive.display(),
                    e.line,
                    e.message
                );
            }
        }
    }
    Ok(if ok { 0 } else { 1 })
}
