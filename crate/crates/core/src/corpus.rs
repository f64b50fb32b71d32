//! Shipped reference corpus: environment fixture, prerequisite rules, the
//! 30-query benchmark suite, the 50-record exemplar archive, the planted
//! retrieval archive and the silent-failure scenarios.
//!
//! `examples/generate_fixtures.rs` writes all of it to `fixtures/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::{Script, ScriptStep};
use crate::env::{Environment, FeederSpec, Fixture};
use crate::eval::{Difficulty, SuiteEntry};
use crate::gateway::MOCK_EMBEDDING_DIM;
use crate::retrieval::{archive_to_jsonl, ExemplarRecord};
use crate::supervisor::{PrerequisiteRule, RuleLibrary};
use crate::workflow::{ExecutionTrace, ToolInvocation};

pub const FIXTURE_SEED: u64 = 2025;

pub fn reference_fixture() -> Fixture {
    let feeder = |buses: usize, transformers, capacitors, regulators| FeederSpec {
        buses,
        lines: buses - 1,
        transformers,
        capacitors,
        regulators,
        base_timestamp: "2025-01-01T00:00".into(),
    };
    Fixture {
        feeders: BTreeMap::from([
            ("glover".to_string(), feeder(40, 12, 2, 1)),
            ("hinesburg".to_string(), feeder(36, 10, 1, 1)),
            ("rochester".to_string(), feeder(60, 18, 4, 2)),
            ("south_hero".to_string(), feeder(45, 14, 3, 1)),
            ("stowe".to_string(), feeder(52, 15, 3, 2)),
        ]),
        seed: FIXTURE_SEED,
    }
}

pub fn reference_environment() -> Environment {
    Environment::new(reference_fixture())
}

const ADVISORY: &str = "`{tool}` reads or extends session state built by {missing}. Nothing in this session has provided that state yet.";

/// Prerequisite rules for the functional roster. Every prerequisite is a
/// Write tool.
pub fn reference_rules() -> RuleLibrary {
    let setup = [
        "load_network",
        "set_timestamp",
        "attach_load_profile",
        "set_voltage_limits",
        "set_transformer_limit",
    ];
    let table: Vec<(&str, Vec<&str>)> = vec![
        ("set_timestamp", vec!["load_network"]),
        ("attach_load_profile", vec!["load_network", "set_timestamp"]),
        ("attach_pv_profile", vec!["load_network", "set_timestamp"]),
        ("set_voltage_limits", vec!["load_network"]),
        ("set_transformer_limit", vec!["load_network"]),
        ("export_nodes_to_file", vec!["load_network"]),
        ("get_component_counts", vec!["load_network"]),
        ("find_nodes_by_voltage", vec!["load_network"]),
        (
            "plot_input_voltage_map",
            vec!["load_network", "set_timestamp"],
        ),
        (
            "run_power_flow",
            vec!["load_network", "set_timestamp", "attach_load_profile"],
        ),
        ("get_voltages", vec!["run_power_flow"]),
        ("plot_voltage_map", vec!["run_power_flow"]),
        (
            "run_hosting_capacity",
            setup.iter().copied().chain(["attach_pv_profile"]).collect(),
        ),
        ("get_hosting_capacity_summary", vec!["run_hosting_capacity"]),
        ("plot_curtailment_map", vec!["run_hosting_capacity"]),
        ("run_infeasibility", setup.to_vec()),
        ("top_k_infeasible_buses", vec!["run_infeasibility"]),
        ("plot_infeasible_currents_map", vec!["run_infeasibility"]),
        ("plot_infeasibility_voltage_map", vec!["run_infeasibility"]),
    ];
    RuleLibrary::from_rules(
        table
            .into_iter()
            .map(|(tool, reqs)| PrerequisiteRule::new(tool, reqs, ADVISORY)),
    )
    .expect("reference rules are consistent")
}

fn call(tool: &str, args: Value) -> ToolInvocation {
    ToolInvocation {
        tool: tool.to_string(),
        args: args
            .as_object()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default(),
    }
}

fn bare(tool: &str) -> ToolInvocation {
    ToolInvocation::new(tool)
}

fn load(feeder: &str) -> ToolInvocation {
    call("load_network", json!({ "feeder": feeder }))
}

fn at(ts: &str) -> ToolInvocation {
    call("set_timestamp", json!({ "timestamp": ts }))
}

fn loads(source: &str) -> ToolInvocation {
    call("attach_load_profile", json!({ "source": source }))
}

fn solar(source: &str) -> ToolInvocation {
    call("attach_pv_profile", json!({ "source": source }))
}

fn limits(vmin: f64, vmax: f64) -> ToolInvocation {
    call("set_voltage_limits", json!({ "vmin": vmin, "vmax": vmax }))
}

fn custom_limits(vmin: f64, vmax: f64, buses: &[u32], cmin: f64, cmax: f64) -> ToolInvocation {
    call(
        "set_voltage_limits",
        json!({ "vmin": vmin, "vmax": vmax, "custom_bus_ids": buses, "custom_vmin": cmin, "custom_vmax": cmax }),
    )
}

fn xfmr(percent: f64) -> ToolInvocation {
    call("set_transformer_limit", json!({ "percent": percent }))
}

fn hosting(norm: &str) -> ToolInvocation {
    call("run_hosting_capacity", json!({ "norm": norm }))
}

fn infeasibility(norm: &str, extra: Value) -> ToolInvocation {
    let mut args = json!({ "norm": norm });
    if let (Some(a), Some(e)) = (args.as_object_mut(), extra.as_object()) {
        a.extend(e.clone());
    }
    call("run_infeasibility", args)
}

fn counts(component: &str) -> ToolInvocation {
    call("get_component_counts", json!({ "component": component }))
}

fn power_flow(feeder: &str, ts: &str, source: &str) -> Vec<ToolInvocation> {
    vec![load(feeder), at(ts), loads(source), bare("run_power_flow")]
}

fn entry(
    id: usize,
    difficulty: Difficulty,
    class: &str,
    query: &str,
    workflow: Vec<ToolInvocation>,
) -> SuiteEntry {
    SuiteEntry {
        query_id: format!("q{id:02}"),
        query: query.to_string(),
        expert_workflow: workflow,
        difficulty,
        analysis_class: Some(class.to_string()),
    }
}

fn with(
    mut base: Vec<ToolInvocation>,
    tail: impl IntoIterator<Item = ToolInvocation>,
) -> Vec<ToolInvocation> {
    base.extend(tail);
    base
}

/// Thirty expert-curated queries over four analysis classes, ten per tier.
pub fn reference_suite() -> Vec<SuiteEntry> {
    use Difficulty::*;
    let data = "data_only";
    let pf = "power_flow";
    let hc = "hosting_capacity";
    let inf = "infeasibility";
    vec![
        entry(1, Easy, data, "How many capacitors are in the Rochester feeder, Vermont?", vec![load("rochester"), counts("capacitors")]),
        entry(2, Easy, data, "How many transformers does the Glover feeder have?", vec![load("glover"), counts("transformers")]),
        entry(3, Easy, data, "Count the buses in the Stowe distribution network.", vec![load("stowe"), counts("buses")]),
        entry(4, Easy, data, "How many voltage regulators are installed on the South Hero feeder?", vec![load("south_hero"), counts("regulators")]),
        entry(5, Easy, data, "Report the number of lines in the Hinesburg feeder model.", vec![load("hinesburg"), counts("lines")]),
        entry(6, Easy, data, "Which nodes in the Glover feeder have a nominal voltage of 240 volts?", vec![load("glover"), call("find_nodes_by_voltage", json!({"voltage": 240.0}))]),
        entry(7, Easy, data, "List all 7200 V nodes of the Stowe feeder.", vec![load("stowe"), call("find_nodes_by_voltage", json!({"voltage": 7200.0}))]),
        entry(8, Easy, data, "Which feeders are available in the dataset?", vec![bare("list_feeders")]),
        entry(9, Easy, data, "Export every 480 V node of the Rochester feeder to rochester_480.txt.", vec![load("rochester"), call("export_nodes_to_file", json!({"filename": "rochester_480.txt", "voltage": 480.0}))]),
        entry(10, Easy, data, "Can you export all nodes whose voltage is 120 volts in the South Hero feeder into a txt file?", vec![load("south_hero"), call("export_nodes_to_file", json!({"filename": "south_hero_120v.txt", "voltage": 120.0}))]),
        entry(11, Medium, data, "Without running any analysis, plot the bus voltage magnitudes from the input data for the Glover distribution network at 11:00 AM, 18th of March, 2025.", vec![load("glover"), at("2025-03-18T11:00"), bare("plot_input_voltage_map")]),
        entry(12, Medium, pf, "Run power flow on the Rochester feeder for 2025-03-19 15:00 using AMI load data and report the bus voltages.", with(power_flow("rochester", "2025-03-19T15:00", "ami"), [bare("get_voltages")])),
        entry(13, Medium, pf, "Plot the voltage map of the Stowe feeder after a power flow at 08:30 on March 20, 2025 with synthetic load profiles.", with(power_flow("stowe", "2025-03-20T08:30", "synthetic"), [bare("plot_voltage_map")])),
        entry(14, Medium, pf, "For South Hero at noon on 2025-03-22, run power flow with AMI loads, then list the bus voltages and plot them on the feeder map.", with(power_flow("south_hero", "2025-03-22T12:00", "ami"), [bare("get_voltages"), bare("plot_voltage_map")])),
        entry(15, Medium, pf, "What are the bus voltages in Hinesburg at 7 PM on March 17, 2025 under AMI load?", with(power_flow("hinesburg", "2025-03-17T19:00", "ami"), [bare("get_voltages")])),
        entry(16, Medium, hc, "Compute L2 dynamic hosting capacity for Glover at 13:00 on 2025-03-21 with irradiance PV data, voltage limits 0.95-1.05 p.u. and transformers at 100% of rating. Summarize the result.", vec![load("glover"), at("2025-03-21T13:00"), loads("ami"), solar("irradiance"), limits(0.95, 1.05), xfmr(100.0), hosting("l2"), bare("get_hosting_capacity_summary")]),
        entry(17, Medium, inf, "For the Glover network at 6:00 PM on March 21, 2025, run L1 current infeasibility analysis. Set the convergence tolerance to 1e-6. Report the top 5 buses with the highest infeasible currents. Then, plot the voltage magnitude after this analysis.", vec![load("glover"), at("2025-03-21T18:00"), loads("ami"), limits(0.9, 1.1), xfmr(100.0), infeasibility("l1", json!({"tolerance": 1e-6})), call("top_k_infeasible_buses", json!({"k": 5})), bare("plot_infeasibility_voltage_map")]),
        entry(18, Medium, data, "Plot the input-data voltage map of the Stowe feeder at 10:00 on March 23, 2025 without solving anything.", vec![load("stowe"), at("2025-03-23T10:00"), bare("plot_input_voltage_map")]),
        entry(19, Medium, pf, "Rochester, 2025-03-25 07:00, synthetic loads: run power flow and give me the voltages.", with(power_flow("rochester", "2025-03-25T07:00", "synthetic"), [bare("get_voltages")])),
        entry(20, Medium, inf, "Run an L2 current-infeasibility study for Stowe at 2025-03-24 16:00 with default 0.90-1.10 p.u. bounds and 100% transformer limits, and report the three worst buses.", vec![load("stowe"), at("2025-03-24T16:00"), loads("ami"), limits(0.9, 1.1), xfmr(100.0), infeasibility("l2", json!({})), call("top_k_infeasible_buses", json!({"k": 3}))]),
        entry(21, Hard, hc, "Load network file for the Rochester feeder in Vermont on 2025-03-19 at 15:00. Run dynamic hosting capacity. Assume solar irradiance data for that date and time. Choose a sparse curtailment strategy. Enforce the voltage limit between 0.95 and 1.05 at all nodes. Limit transformer flow to 110% of rated. After solving the problem, plot the curtailed power as a feeder topology map.", vec![load("rochester"), at("2025-03-19T15:00"), loads("ami"), solar("irradiance"), limits(0.95, 1.05), xfmr(110.0), hosting("l1"), bare("plot_curtailment_map")]),
        entry(22, Hard, inf, "Conduct a L2 norm current infeasibility study for the Stowe feeder, representing conditions at 10:00 on March 23, 2025. Apply 0.94-1.06 p.u. to all buses except buses 10, 25 and 36, which must stay within 0.98-1.02 p.u. Enforce a transformer loading limit of 115%. Solve with IPOPT, tolerance 1e-6 and at most 1000 iterations. Plot the infeasible currents and the bus voltages on maps.", vec![load("stowe"), at("2025-03-23T10:00"), loads("ami"), custom_limits(0.94, 1.06, &[10, 25, 36], 0.98, 1.02), xfmr(115.0), infeasibility("l2", json!({"solver": "ipopt", "tolerance": 1e-6, "max_iter": 1000})), bare("plot_infeasible_currents_map"), bare("plot_infeasibility_voltage_map")]),
        entry(23, Hard, hc, "For Glover on 2025-03-26 at 12:30, minimize the worst-case curtailment (L-infinity hosting capacity) with clear-sky PV, 0.93-1.07 p.u. voltage limits and a 105% transformer limit. Summarize and map the curtailment.", vec![load("glover"), at("2025-03-26T12:30"), loads("ami"), solar("clear_sky"), limits(0.93, 1.07), xfmr(105.0), hosting("linf"), bare("get_hosting_capacity_summary"), bare("plot_curtailment_map")]),
        entry(24, Hard, hc, "South Hero, 2025-03-27 14:00: L2 hosting capacity with irradiance PV and synthetic load, global limits 0.92-1.08 p.u. but buses 3, 7 and 12 held to 0.97-1.03 p.u., transformers at 120%. Report the summary.", vec![load("south_hero"), at("2025-03-27T14:00"), loads("synthetic"), solar("irradiance"), custom_limits(0.92, 1.08, &[3, 7, 12], 0.97, 1.03), xfmr(120.0), hosting("l2"), bare("get_hosting_capacity_summary")]),
        entry(25, Hard, inf, "Hinesburg at 21:00 on 2025-03-28: L1 current infeasibility with Gurobi, voltage limits 0.95-1.05 p.u. and 90% transformer limit. Report the ten worst buses and map the infeasible currents.", vec![load("hinesburg"), at("2025-03-28T21:00"), loads("ami"), limits(0.95, 1.05), xfmr(90.0), infeasibility("l1", json!({"solver": "gurobi"})), call("top_k_infeasible_buses", json!({"k": 10})), bare("plot_infeasible_currents_map")]),
        entry(26, Hard, hc, "For Rochester at 2025-03-29 11:00 first run a power flow with AMI loads and report voltages, then run sparse-curtailment hosting capacity with irradiance PV, 0.95-1.05 p.u. limits and 100% transformers, and summarize it.", with(power_flow("rochester", "2025-03-29T11:00", "ami"), [bare("get_voltages"), solar("irradiance"), limits(0.95, 1.05), xfmr(100.0), hosting("l1"), bare("get_hosting_capacity_summary")])),
        entry(27, Hard, inf, "Glover, 2025-03-30 17:45: run power flow with AMI loads and plot voltages, then run L2 current infeasibility with 0.94-1.06 p.u. limits and 110% transformers and list the top 5 buses.", with(power_flow("glover", "2025-03-30T17:45", "ami"), [bare("plot_voltage_map"), limits(0.94, 1.06), xfmr(110.0), infeasibility("l2", json!({})), call("top_k_infeasible_buses", json!({"k": 5}))])),
        entry(28, Hard, hc, "Stowe at 2025-03-31 09:15: L1 hosting capacity using clear-sky PV and synthetic load, voltage band 0.95-1.05 p.u., transformer limit 100%. Map the curtailment and export the 240 V nodes to stowe_240.txt.", vec![load("stowe"), at("2025-03-31T09:15"), loads("synthetic"), solar("clear_sky"), limits(0.95, 1.05), xfmr(100.0), hosting("l1"), bare("plot_curtailment_map"), call("export_nodes_to_file", json!({"filename": "stowe_240.txt", "voltage": 240.0}))]),
        entry(29, Hard, inf, "For the South Hero feeder at 2025-04-01 08:00, run L2 current-infeasibility with transformer limits at 110%, applying global voltage bounds of 0.90-1.10 p.u. and custom bounds of 0.95-1.05 p.u. for the 5th, 10th and 30th buses by ID. Then plot both the bus voltages and infeasible currents.", vec![load("south_hero"), at("2025-04-01T08:00"), loads("ami"), custom_limits(0.9, 1.1, &[5, 10, 30], 0.95, 1.05), xfmr(110.0), infeasibility("l2", json!({})), bare("plot_infeasibility_voltage_map"), bare("plot_infeasible_currents_map")]),
        entry(30, Hard, hc, "Hinesburg, 2025-04-02 13:30: run power flow with AMI loads and map voltages, then L2 hosting capacity with irradiance PV, 0.94-1.06 p.u. and a 95% transformer limit, and map the curtailment.", with(power_flow("hinesburg", "2025-04-02T13:30", "ami"), [bare("plot_voltage_map"), solar("irradiance"), limits(0.94, 1.06), xfmr(95.0), hosting("l2"), bare("plot_curtailment_map")])),
    ]
}

const FEEDER_NAMES: [(&str, &str); 5] = [
    ("glover", "Glover"),
    ("hinesburg", "Hinesburg"),
    ("rochester", "Rochester"),
    ("south_hero", "South Hero"),
    ("stowe", "Stowe"),
];

/// Fifty annotated query-workflow pairs, ten templates over five feeders.
pub fn reference_archive() -> Vec<ExemplarRecord> {
    let mut out = Vec::new();
    for (f, (id, name)) in FEEDER_NAMES.iter().enumerate() {
        let day = 3 + f;
        let ts = format!("2025-02-{day:02}T{:02}:00", 9 + f);
        let pretty = format!("February {day}, 2025 at {:02}:00", 9 + f);
        let templates: Vec<(String, Vec<ToolInvocation>)> = vec![
            (
                format!("Load the {name} feeder model and report counts of buses, lines, and transformers as a quick integrity check."),
                vec![load(id), counts("buses"), counts("lines"), counts("transformers")],
            ),
            (
                format!("List the 12470 V nodes of the {name} feeder."),
                vec![load(id), call("find_nodes_by_voltage", json!({"voltage": 12470.0}))],
            ),
            (
                format!("Export the 240 V nodes of {name} to {id}_240.txt."),
                vec![load(id), call("export_nodes_to_file", json!({"filename": format!("{id}_240.txt"), "voltage": 240.0}))],
            ),
            (
                format!("Plot the input voltage magnitudes of {name} on {pretty} without running analysis."),
                vec![load(id), at(&ts), bare("plot_input_voltage_map")],
            ),
            (
                format!("Run unbalanced power flow for {name} on {pretty} with AMI load data and report bus voltages."),
                with(power_flow(id, &ts, "ami"), [bare("get_voltages")]),
            ),
            (
                format!("Run power flow for {name} on {pretty} using synthetic load profiles and plot the voltage map."),
                with(power_flow(id, &ts, "synthetic"), [bare("plot_voltage_map")]),
            ),
            (
                format!("Compute sparse-curtailment (L1) dynamic hosting capacity for {name} on {pretty} with irradiance PV, 0.95-1.05 p.u. limits and 100% transformer loading, then plot curtailment."),
                vec![load(id), at(&ts), loads("ami"), solar("irradiance"), limits(0.95, 1.05), xfmr(100.0), hosting("l1"), bare("plot_curtailment_map")],
            ),
            (
                format!("Compute L2 dynamic hosting capacity for {name} on {pretty} with clear-sky PV, 0.94-1.06 p.u. limits and 110% transformer loading, and summarize it."),
                vec![load(id), at(&ts), loads("ami"), solar("clear_sky"), limits(0.94, 1.06), xfmr(110.0), hosting("l2"), bare("get_hosting_capacity_summary")],
            ),
            (
                format!("Run L1 current-infeasibility analysis for {name} on {pretty} with 0.90-1.10 p.u. limits and 100% transformers; report the top 5 buses."),
                vec![load(id), at(&ts), loads("ami"), limits(0.9, 1.1), xfmr(100.0), infeasibility("l1", json!({})), call("top_k_infeasible_buses", json!({"k": 5}))],
            ),
            (
                format!("For the {name} feeder on {pretty}, run L2 current-infeasibility with transformer limits at 110%, applying global voltage bounds of 0.90-1.10 p.u. and custom bounds of 0.95-1.05 p.u. for 5th, 10th, and 30th buses by ID. Then plot both the bus voltages and infeasible currents."),
                vec![load(id), at(&ts), loads("ami"), custom_limits(0.9, 1.1, &[5, 10, 30], 0.95, 1.05), xfmr(110.0), infeasibility("l2", json!({})), bare("plot_infeasibility_voltage_map"), bare("plot_infeasible_currents_map")],
            ),
        ];
        for (t, (query, workflow)) in templates.into_iter().enumerate() {
            out.push(ExemplarRecord {
                id: format!("ex-{id}-{t:02}"),
                query,
                workflow: ExecutionTrace::new(workflow),
            });
        }
    }
    out
}

/// Archive with planted similarities: ten relevant records at cosine
/// `0.99 - 0.01 i` to the query and forty distractors at `0.30 - 0.005 j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedArchive {
    pub query: String,
    pub records: Vec<ExemplarRecord>,
    /// Exact-text embedding overrides for the mock embedder.
    pub overrides: BTreeMap<String, Vec<f64>>,
    pub relevant_ids: Vec<String>,
}

pub const PLANTED_RELEVANT: usize = 10;
pub const PLANTED_DISTRACTORS: usize = 40;

fn planted_vector(cosine: f64, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; MOCK_EMBEDDING_DIM];
    v[0] = cosine;
    v[axis] = (1.0 - cosine * cosine).sqrt();
    v
}

pub fn planted_archive() -> PlantedArchive {
    let query =
        "Run L2 hosting capacity for the Glover feeder with irradiance PV and plot curtailment."
            .to_string();
    let mut overrides = BTreeMap::new();
    let mut unit = vec![0.0; MOCK_EMBEDDING_DIM];
    unit[0] = 1.0;
    overrides.insert(query.clone(), unit);

    let archive = reference_archive();
    let hosting: Vec<&ExemplarRecord> = archive
        .iter()
        .filter(|r| r.workflow.tool_names().any(|t| t == "run_hosting_capacity"))
        .collect();
    let others: Vec<&ExemplarRecord> = archive
        .iter()
        .filter(|r| !r.workflow.tool_names().any(|t| t == "run_hosting_capacity"))
        .collect();
    assert_eq!(hosting.len(), PLANTED_RELEVANT, "archive shape changed");
    assert_eq!(others.len(), PLANTED_DISTRACTORS, "archive shape changed");

    // interleave so rank order differs from archive order
    let mut records = Vec::new();
    let mut relevant_ids = Vec::new();
    for (i, r) in hosting.iter().enumerate() {
        overrides.insert(
            r.query.clone(),
            planted_vector(0.99 - 0.01 * i as f64, 1 + i),
        );
        relevant_ids.push(r.id.clone());
    }
    for (j, r) in others.iter().enumerate() {
        overrides.insert(
            r.query.clone(),
            planted_vector(0.30 - 0.005 * j as f64, 1 + PLANTED_RELEVANT + j),
        );
    }
    let mut d = others.iter();
    for r in &hosting {
        records.push((*r).clone());
        for _ in 0..4 {
            if let Some(x) = d.next() {
                records.push((*x).clone());
            }
        }
    }
    records.extend(d.map(|r| (*r).clone()));
    PlantedArchive {
        query,
        records,
        overrides,
        relevant_ids,
    }
}

/// Expert workflow, the prerequisite a flawed agent forgets, and the
/// script that forgets it but knows how to recover when advised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilentFailureScenario {
    pub entry: SuiteEntry,
    pub skipped: String,
    pub script: Script,
}

/// Drops the first call to `skipped` and registers it as the corrective
/// branch for the call that depends on it.
fn flawed(entry: SuiteEntry, skipped: &str, blocked: &str) -> SilentFailureScenario {
    let pos = entry
        .expert_workflow
        .iter()
        .position(|c| c.tool == skipped)
        .expect("skipped tool is in the workflow");
    let removed = entry.expert_workflow[pos].clone();
    let calls = entry
        .expert_workflow
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != pos)
        .map(|(_, c)| c.clone());
    let mut script = Script::from_calls(calls, "Analysis complete.");
    script
        .on_advisory
        .insert(blocked.to_string(), vec![ScriptStep::Call(removed)]);
    SilentFailureScenario {
        entry,
        skipped: skipped.to_string(),
        script,
    }
}

/// Twelve scenarios, each skipping one prerequisite Write of a suite query.
pub fn silent_failure_scenarios() -> Vec<SilentFailureScenario> {
    let suite = reference_suite();
    let q = |id: &str| {
        let mut e = suite
            .iter()
            .find(|e| e.query_id == id)
            .cloned()
            .expect("suite query exists");
        e.query_id = format!("sf-{id}");
        e
    };
    vec![
        flawed(q("q11"), "set_timestamp", "plot_input_voltage_map"),
        flawed(q("q12"), "run_power_flow", "get_voltages"),
        flawed(q("q13"), "attach_load_profile", "run_power_flow"),
        flawed(q("q14"), "set_timestamp", "attach_load_profile"),
        flawed(q("q16"), "set_voltage_limits", "run_hosting_capacity"),
        flawed(q("q17"), "run_infeasibility", "top_k_infeasible_buses"),
        flawed(q("q21"), "attach_pv_profile", "run_hosting_capacity"),
        flawed(q("q22"), "set_transformer_limit", "run_infeasibility"),
        flawed(
            q("q23"),
            "run_hosting_capacity",
            "get_hosting_capacity_summary",
        ),
        flawed(q("q25"), "set_voltage_limits", "run_infeasibility"),
        flawed(q("q27"), "run_power_flow", "plot_voltage_map"),
        flawed(q("q30"), "set_transformer_limit", "run_hosting_capacity"),
    ]
}

/// Scripts keyed by query id, as read by the `bench` command.
pub fn scriptbook(scenarios: &[SilentFailureScenario]) -> BTreeMap<String, Script> {
    scenarios
        .iter()
        .map(|s| (s.entry.query_id.clone(), s.script.clone()))
        .collect()
}

const CONFIG_HEAD: &str = "# Offline configuration: mock gateway, shipped fixtures.
archive = \"archive.jsonl\"
rules = \"rules.json\"
env = \"environment.json\"
output_dir = \"../../../target/jitflow-out\"
budget = 30
";

/// Writes the shipped corpus under `dir` and returns the files written,
/// relative to `dir`.
pub fn write_fixtures(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let scenarios = silent_failure_scenarios();
    let planted = planted_archive();
    let silent_suite: Vec<SuiteEntry> = scenarios.iter().map(|s| s.entry.clone()).collect();
    fn pretty<T: Serialize>(v: &T) -> String {
        serde_json::to_string_pretty(v).expect("corpus serializes")
    }
    let mut files: Vec<(PathBuf, String)> = vec![
        ("environment.json".into(), reference_fixture().to_json()),
        ("rules.json".into(), reference_rules().to_json()),
        ("archive.jsonl".into(), archive_to_jsonl(&reference_archive())),
        ("suite.json".into(), pretty(&reference_suite())),
        ("silent_failure/suite.json".into(), pretty(&silent_suite)),
        ("silent_failure/scripts.json".into(), pretty(&scriptbook(&scenarios))),
        ("planted/archive.jsonl".into(), archive_to_jsonl(&planted.records)),
        ("planted/embeddings.json".into(), pretty(&planted.overrides)),
        ("planted/suite.json".into(), pretty(&vec![planted_entry(&planted)])),
        (
            "scripts/count_capacitors.json".into(),
            pretty(&Script::from_calls(
                reference_suite()[0].expert_workflow.clone(),
                "The Rochester feeder has 4 capacitors.",
            )),
        ),
        ("jitflow.toml".into(), format!("{CONFIG_HEAD}retrieval = \"adaptive\"\nsupervisor = true\n")),
        (
            "silent_failure.toml".into(),
            format!("{CONFIG_HEAD}scripts = \"silent_failure/scripts.json\"\nsupervisor = true\n"),
        ),
        (
            "planted.toml".into(),
            CONFIG_HEAD.replace("\"archive.jsonl\"", "\"planted/archive.jsonl\"")
                + "retrieval = \"adaptive\"\n\n[gateway]\nbackend = \"mock\"\nembedding_overrides = \"planted/embeddings.json\"\n",
        ),
    ];
    for (rel, text) in &mut files {
        if !text.ends_with('\n') {
            text.push('\n');
        }
        let path = dir.join(&*rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, text.as_bytes())?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// The planted query as a one-entry suite, answered by the hosting
/// capacity workflow of the first planted record.
pub fn planted_entry(planted: &PlantedArchive) -> SuiteEntry {
    let first = planted
        .records
        .iter()
        .find(|r| r.id == planted.relevant_ids[0])
        .expect("planted records include the relevant ones");
    SuiteEntry {
        query_id: "planted".into(),
        query: planted.query.clone(),
        expert_workflow: first.workflow.steps.clone(),
        difficulty: Difficulty::Hard,
        analysis_class: Some("hosting_capacity".into()),
    }
}
