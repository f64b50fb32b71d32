//! Reference roster: 21 functional grid-analysis tools plus 61 inert
//! distractors.

use std::collections::BTreeMap;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::numerics::{round6, KeyedStream};
use super::{
    Environment, EnvironmentState, MissingObjectMode, Observation, ProbeSuite, ToolContext,
    ToolHandler, ToolRegistry,
};
use crate::digest::json_digest;
use crate::workflow::{
    parse_timestamp, ArgSpec, ArgType, Arguments, ToolInvocation, ToolKind, ToolSchema,
};

pub const FUNCTIONAL_TOOLS: [&str; 21] = [
    "list_feeders",
    "load_network",
    "get_component_counts",
    "find_nodes_by_voltage",
    "export_nodes_to_file",
    "set_timestamp",
    "plot_input_voltage_map",
    "attach_load_profile",
    "attach_pv_profile",
    "set_voltage_limits",
    "set_transformer_limit",
    "run_power_flow",
    "get_voltages",
    "plot_voltage_map",
    "run_hosting_capacity",
    "get_hosting_capacity_summary",
    "plot_curtailment_map",
    "run_infeasibility",
    "top_k_infeasible_buses",
    "plot_infeasible_currents_map",
    "plot_infeasibility_voltage_map",
];

const DISTRACTORS: [&str; 61] = [
    "get_weather_forecast",
    "get_market_prices",
    "get_customer_count",
    "list_outage_events",
    "get_outage_history",
    "get_crew_schedule",
    "get_asset_age",
    "get_pole_inventory",
    "get_meter_firmware",
    "get_scada_tags",
    "list_substations",
    "get_substation_info",
    "get_tariff_schedule",
    "get_interconnection_queue",
    "get_ev_charger_sites",
    "get_vegetation_risk",
    "get_fire_risk_index",
    "get_lightning_strikes",
    "get_reliability_indices",
    "get_saidi_saifi",
    "get_work_orders",
    "get_inspection_reports",
    "get_gis_layers",
    "get_parcel_info",
    "get_service_territory",
    "get_load_forecast_summary",
    "get_peak_demand_history",
    "get_power_quality_events",
    "get_harmonics_report",
    "get_protection_settings",
    "get_relay_inventory",
    "get_fuse_inventory",
    "get_switch_inventory",
    "get_recloser_status",
    "get_battery_inventory",
    "get_microgrid_status",
    "get_demand_response_enrollment",
    "get_net_metering_accounts",
    "get_rate_case_summary",
    "get_regulatory_filings",
    "get_vendor_catalog",
    "get_spare_parts",
    "get_training_records",
    "get_safety_incidents",
    "get_emission_factors",
    "get_carbon_report",
    "get_renewable_credits",
    "get_community_solar_projects",
    "get_storm_hardening_plan",
    "get_capital_plan",
    "get_budget_summary",
    "get_billing_summary",
    "get_call_center_stats",
    "get_social_media_alerts",
    "get_news_feed",
    "get_calendar_events",
    "draft_email_notification",
    "draft_ticket",
    "translate_text",
    "summarize_document",
    "search_knowledge_base",
];

pub const DISTRACTOR_COUNT: usize = DISTRACTORS.len();

const NOMINAL_VOLTAGES: [f64; 5] = [120.0, 240.0, 480.0, 7200.0, 12470.0];
const DEFAULT_VMIN: f64 = 0.9;
const DEFAULT_VMAX: f64 = 1.1;
const DEFAULT_TRANSFORMER_PERCENT: f64 = 100.0;

/// Network model as stored in the `network` object.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkModel {
    feeder: String,
    buses: usize,
    lines: usize,
    transformers: usize,
    capacitors: usize,
    regulators: usize,
    base_timestamp: String,
}

impl NetworkModel {
    fn bus_ids(&self) -> Vec<String> {
        (1..=self.buses).map(|i| format!("bus_{i:03}")).collect()
    }

    fn layout_digest(&self) -> String {
        // radial layout: bus i hangs off bus i/2
        let edges: Vec<(usize, usize)> = (2..=self.buses).map(|i| (i / 2, i)).collect();
        json_digest(&json!({"feeder": self.feeder, "edges": edges}))
    }
}

fn normalize_timestamp(s: &str) -> Option<String> {
    parse_timestamp(s).map(|t| t.format("%Y-%m-%dT%H:%M").to_string())
}

fn str_arg<'a>(args: &'a Arguments, name: &str) -> Option<&'a str> {
    args.get(name).and_then(Value::as_str)
}

fn real_arg(args: &Arguments, name: &str) -> Option<f64> {
    args.get(name).and_then(Value::as_f64)
}

fn folded(args: &Arguments, name: &str) -> Option<String> {
    str_arg(args, name).map(|s| s.trim().to_lowercase())
}

/// Observation for a Read whose source object is absent.
fn missing(ctx: &ToolContext<'_>, object: &str) -> Result<Observation, String> {
    match ctx.mode {
        MissingObjectMode::Silent => Ok(Observation::ok(
            format!("No {object} is available in the current session; nothing to report."),
            None,
        )),
        MissingObjectMode::Strict => Err(format!("required object `{object}` is missing")),
    }
}

fn network(state: &EnvironmentState) -> Option<NetworkModel> {
    state
        .payload("network")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn require_network(state: &EnvironmentState) -> Result<NetworkModel, String> {
    network(state).ok_or_else(|| "no network is loaded".to_string())
}

fn current_timestamp(state: &EnvironmentState, net: &NetworkModel) -> String {
    state
        .payload("timestamp")
        .and_then(|v| v["timestamp"].as_str())
        .map(str::to_string)
        .unwrap_or_else(|| net.base_timestamp.clone())
}

fn profile_tag(state: &EnvironmentState, object: &str, default: &str) -> String {
    match state.payload(object) {
        Some(p) => format!(
            "{}@{}",
            p["source"].as_str().unwrap_or_default(),
            p["timestamp"].as_str().unwrap_or_default()
        ),
        None => default.to_string(),
    }
}

fn limits_tag(state: &EnvironmentState) -> String {
    let voltage = state
        .payload("voltage_limits")
        .cloned()
        .unwrap_or_else(|| json!({"vmin": DEFAULT_VMIN, "vmax": DEFAULT_VMAX}));
    let transformer = state
        .payload("transformer_limit")
        .and_then(|p| p["percent"].as_f64())
        .unwrap_or(DEFAULT_TRANSFORMER_PERCENT);
    format!(
        "v={}|xfmr={transformer}",
        serde_json::to_string(&voltage).expect("json")
    )
}

fn per_bus(net: &NetworkModel, stream: &mut KeyedStream, lo: f64, hi: f64) -> Map<String, Value> {
    net.bus_ids()
        .into_iter()
        .map(|bus| (bus, Value::from(stream.next_in(lo, hi))))
        .collect()
}

fn nominal_voltages(seed: u64, net: &NetworkModel) -> Vec<(String, f64)> {
    let mut stream = KeyedStream::new(seed, format!("{}|nominal_voltage", net.feeder));
    net.bus_ids()
        .into_iter()
        .map(|bus| {
            let v = NOMINAL_VOLTAGES[(stream.next_u64() % NOMINAL_VOLTAGES.len() as u64) as usize];
            (bus, v)
        })
        .collect()
}

fn nodes_at_voltage(seed: u64, net: &NetworkModel, voltage: f64) -> Vec<String> {
    nominal_voltages(seed, net)
        .into_iter()
        .filter(|(_, v)| (v - voltage).abs() < 1e-9)
        .map(|(bus, _)| bus)
        .collect()
}

fn power_flow_payload(seed: u64, net: &NetworkModel, timestamp: &str, load: &str) -> Value {
    let key = format!("{}|{timestamp}|power_flow|load={load}", net.feeder);
    let mut stream = KeyedStream::new(seed, key);
    json!({
        "kind": "power_flow",
        "feeder": net.feeder,
        "timestamp": timestamp,
        "load_profile": load,
        "voltages": per_bus(net, &mut stream, 0.92, 1.08),
    })
}

fn table(values: &Map<String, Value>, unit: &str) -> String {
    values
        .iter()
        .map(|(bus, v)| format!("{bus}\t{}{unit}", v.as_f64().unwrap_or_default()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn plot_record(net: &NetworkModel, plot: &str, timestamp: &Value, values: &Value) -> Value {
    json!({
        "plot": plot,
        "feeder": net.feeder,
        "timestamp": timestamp,
        "values": values,
        "layout_digest": net.layout_digest(),
    })
}

fn plot_observation(record: Value) -> Observation {
    let text = format!(
        "Rendered {} for feeder {} ({} buses, layout {}).",
        record["plot"].as_str().unwrap_or_default(),
        record["feeder"].as_str().unwrap_or_default(),
        record["values"].as_object().map_or(0, Map::len),
        &record["layout_digest"].as_str().unwrap_or_default()[..12],
    );
    Observation::ok(text, Some(record))
}

// ---- Write tools ----

fn load_network(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    let name = folded(args, "feeder")
        .unwrap_or_default()
        .replace([' ', '-'], "_");
    let spec = ctx
        .fixture
        .feeders
        .get(&name)
        .ok_or_else(|| format!("unknown feeder `{name}`"))?;
    let base =
        normalize_timestamp(&spec.base_timestamp).ok_or("fixture has an invalid base timestamp")?;
    let net = NetworkModel {
        feeder: name.clone(),
        buses: spec.buses,
        lines: spec.lines,
        transformers: spec.transformers,
        capacitors: spec.capacitors,
        regulators: spec.regulators,
        base_timestamp: base.clone(),
    };
    for derived in [
        "timestamp",
        "load_profile",
        "pv_profile",
        "voltage_limits",
        "transformer_limit",
        "hosting_result",
        "infeasibility_result",
    ] {
        state.objects.remove(derived);
    }
    state.put("network", serde_json::to_value(&net).expect("json"));
    // the model file ships with a solved operating point
    state.put(
        "powerflow_result",
        power_flow_payload(state.rng_seed, &net, &base, "nominal"),
    );
    Ok(Observation::ok(
        format!(
            "Loaded feeder {name}: {} buses, {} lines, {} transformers.",
            net.buses, net.lines, net.transformers
        ),
        None,
    ))
}

fn set_timestamp(
    _: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    require_network(state)?;
    let ts = str_arg(args, "timestamp")
        .and_then(normalize_timestamp)
        .ok_or("invalid timestamp")?;
    state.put("timestamp", json!({ "timestamp": ts }));
    Ok(Observation::ok(
        format!("Simulation time set to {ts}."),
        None,
    ))
}

fn attach_profile(
    state: &mut EnvironmentState,
    args: &Arguments,
    object: &str,
    label: &str,
) -> Result<Observation, String> {
    let net = require_network(state)?;
    let source = folded(args, "source").unwrap_or_default();
    let ts = current_timestamp(state, &net);
    state.put(object, json!({ "source": source, "timestamp": ts }));
    Ok(Observation::ok(
        format!("Attached {source} {label} profile for {ts}."),
        None,
    ))
}

fn attach_load_profile(
    _: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    attach_profile(state, args, "load_profile", "load")
}

fn attach_pv_profile(
    _: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    attach_profile(state, args, "pv_profile", "PV")
}

fn set_voltage_limits(
    _: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    let net = require_network(state)?;
    let vmin = real_arg(args, "vmin").unwrap_or(DEFAULT_VMIN);
    let vmax = real_arg(args, "vmax").unwrap_or(DEFAULT_VMAX);
    if !(vmin > 0.0 && vmin < vmax) {
        return Err(format!("invalid voltage band {vmin}..{vmax}"));
    }
    let mut payload = json!({ "vmin": vmin, "vmax": vmax });
    if let Some(ids) = args.get("custom_bus_ids").and_then(Value::as_array) {
        let mut buses = Vec::new();
        for id in ids {
            let id = id.as_f64().unwrap_or(-1.0);
            if id.fract() != 0.0 || id < 1.0 || id as usize > net.buses {
                return Err(format!("bus id {id} is not on feeder {}", net.feeder));
            }
            buses.push(id as u64);
        }
        buses.sort_unstable();
        buses.dedup();
        let cmin =
            real_arg(args, "custom_vmin").ok_or("custom_vmin is required with custom_bus_ids")?;
        let cmax =
            real_arg(args, "custom_vmax").ok_or("custom_vmax is required with custom_bus_ids")?;
        if !(cmin > 0.0 && cmin < cmax) {
            return Err(format!("invalid custom voltage band {cmin}..{cmax}"));
        }
        payload["custom"] = json!({ "bus_ids": buses, "vmin": cmin, "vmax": cmax });
    }
    state.put("voltage_limits", payload);
    Ok(Observation::ok(
        format!("Voltage limits set to {vmin}-{vmax} p.u."),
        None,
    ))
}

fn set_transformer_limit(
    _: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    require_network(state)?;
    let percent = real_arg(args, "percent").unwrap_or_default();
    if percent <= 0.0 {
        return Err("transformer limit must be positive".into());
    }
    state.put("transformer_limit", json!({ "percent": percent }));
    Ok(Observation::ok(
        format!("Transformer loading limited to {percent}% of rating."),
        None,
    ))
}

fn run_power_flow(
    _: &ToolContext<'_>,
    state: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    let net = require_network(state)?;
    let ts = current_timestamp(state, &net);
    let load = profile_tag(state, "load_profile", "nominal");
    let payload = power_flow_payload(state.rng_seed, &net, &ts, &load);
    state.put("powerflow_result", payload);
    Ok(Observation::ok(
        format!(
            "Unbalanced power flow converged for {} at {ts}.",
            net.feeder
        ),
        None,
    ))
}

fn run_hosting_capacity(
    _: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    let net = require_network(state)?;
    let norm = folded(args, "norm").unwrap_or_default();
    let ts = current_timestamp(state, &net);
    let key = format!(
        "{}|{ts}|hosting_capacity|norm={norm}|load={}|pv={}|{}",
        net.feeder,
        profile_tag(state, "load_profile", "nominal"),
        profile_tag(state, "pv_profile", "none"),
        limits_tag(state)
    );
    let mut stream = KeyedStream::new(state.rng_seed, key);
    let curtailment = per_bus(&net, &mut stream, 0.0, 50.0);
    let capacity = round6((0..net.buses).map(|_| stream.next_in(20.0, 200.0)).sum());
    state.put(
        "hosting_result",
        json!({
            "kind": "hosting_capacity",
            "feeder": net.feeder,
            "timestamp": ts,
            "norm": norm,
            "curtailment_kw": curtailment,
            "hosting_capacity_kw": capacity,
        }),
    );
    Ok(Observation::ok(
        format!(
            "Dynamic hosting capacity ({norm}) solved for {} at {ts}.",
            net.feeder
        ),
        None,
    ))
}

fn run_infeasibility(
    _: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    let net = require_network(state)?;
    let norm = folded(args, "norm").unwrap_or_default();
    let solver = folded(args, "solver").unwrap_or_else(|| "ipopt".into());
    let tolerance = real_arg(args, "tolerance").unwrap_or(1e-6);
    let max_iter = args.get("max_iter").and_then(Value::as_i64).unwrap_or(1000);
    if tolerance <= 0.0 || max_iter <= 0 {
        return Err("tolerance and max_iter must be positive".into());
    }
    let ts = current_timestamp(state, &net);
    let key = format!(
        "{}|{ts}|infeasibility|norm={norm}|solver={solver}|tol={tolerance:e}|iter={max_iter}|load={}|{}",
        net.feeder,
        profile_tag(state, "load_profile", "nominal"),
        limits_tag(state)
    );
    let mut stream = KeyedStream::new(state.rng_seed, key);
    let currents = per_bus(&net, &mut stream, 0.0, 5.0);
    let voltages = per_bus(&net, &mut stream, 0.9, 1.1);
    state.put(
        "infeasibility_result",
        json!({
            "kind": "infeasibility",
            "feeder": net.feeder,
            "timestamp": ts,
            "norm": norm,
            "solver": solver,
            "infeasible_currents": currents,
            "voltages": voltages,
        }),
    );
    Ok(Observation::ok(
        format!(
            "Current-infeasibility analysis ({norm}, {solver}) converged for {} at {ts}.",
            net.feeder
        ),
        None,
    ))
}

fn check_relative(filename: &str) -> Result<(), String> {
    let path = Path::new(filename);
    if filename.trim().is_empty()
        || path.is_absolute()
        || path
            .components()
            .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return Err(format!(
            "export path `{filename}` is outside the output directory"
        ));
    }
    Ok(())
}

fn export_nodes_to_file(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    let net = require_network(state)?;
    let filename = str_arg(args, "filename")
        .unwrap_or_default()
        .trim()
        .to_string();
    check_relative(&filename)?;
    let voltage = real_arg(args, "voltage").unwrap_or_default();
    let nodes = nodes_at_voltage(state.rng_seed, &net, voltage);
    if let Some(dir) = ctx.sandbox {
        let target = dir.join(&filename);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
        let mut body = nodes.join("\n");
        body.push('\n');
        std::fs::write(&target, body).map_err(|e| e.to_string())?;
    }
    let record = json!({ "feeder": net.feeder, "voltage": voltage, "nodes": nodes });
    let mut exports = state
        .payload("exports")
        .and_then(Value::as_object)
        .cloned()
        .unwrap_or_default();
    exports.insert(filename.clone(), record.clone());
    state.put("exports", Value::Object(exports));
    Ok(Observation::ok(
        format!(
            "Exported {} nodes at {voltage} V to {filename}.",
            nodes.len()
        ),
        Some(record),
    ))
}

// ---- Read tools ----

fn list_feeders(
    ctx: &ToolContext<'_>,
    _: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    let names: Vec<&String> = ctx.fixture.feeders.keys().collect();
    Ok(Observation::ok(
        format!(
            "Available feeders: {}.",
            names
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ),
        Some(json!(names)),
    ))
}

fn get_component_counts(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    let Some(net) = network(state) else {
        return missing(ctx, "network");
    };
    let component = folded(args, "component").unwrap_or_default();
    let count = match component.as_str() {
        "buses" => net.buses,
        "lines" => net.lines,
        "transformers" => net.transformers,
        "capacitors" => net.capacitors,
        "regulators" => net.regulators,
        other => return Err(format!("unknown component `{other}`")),
    };
    Ok(Observation::ok(
        format!("Feeder {} has {count} {component}.", net.feeder),
        Some(json!({ "feeder": net.feeder, "component": component, "count": count })),
    ))
}

fn find_nodes_by_voltage(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    let Some(net) = network(state) else {
        return missing(ctx, "network");
    };
    let voltage = real_arg(args, "voltage").unwrap_or_default();
    let nodes = nodes_at_voltage(state.rng_seed, &net, voltage);
    Ok(Observation::ok(
        format!("{} nodes at {voltage} V: {}", nodes.len(), nodes.join(", ")),
        Some(json!({ "feeder": net.feeder, "voltage": voltage, "nodes": nodes })),
    ))
}

fn plot_input_voltage_map(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    let Some(net) = network(state) else {
        return missing(ctx, "network");
    };
    let ts = current_timestamp(state, &net);
    let mut stream = KeyedStream::new(state.rng_seed, format!("{}|{ts}|input_voltage", net.feeder));
    let values = Value::Object(per_bus(&net, &mut stream, 0.95, 1.05));
    Ok(plot_observation(plot_record(
        &net,
        "input_voltage_map",
        &json!(ts),
        &values,
    )))
}

fn result_and_network(
    ctx: &ToolContext<'_>,
    state: &EnvironmentState,
    object: &str,
) -> Result<Result<(Value, NetworkModel), Observation>, String> {
    let (Some(result), Some(net)) = (state.payload(object), network(state)) else {
        return missing(ctx, object).map(Err);
    };
    Ok(Ok((result.clone(), net)))
}

fn get_voltages(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    let (result, _) = match result_and_network(ctx, state, "powerflow_result")? {
        Ok(found) => found,
        Err(obs) => return Ok(obs),
    };
    let voltages = result["voltages"].as_object().cloned().unwrap_or_default();
    Ok(Observation::ok(
        format!(
            "Bus voltages (p.u.) for {} at {}:\n{}",
            result["feeder"].as_str().unwrap_or_default(),
            result["timestamp"].as_str().unwrap_or_default(),
            table(&voltages, "")
        ),
        Some(json!({
            "feeder": result["feeder"],
            "timestamp": result["timestamp"],
            "voltages": voltages,
        })),
    ))
}

fn plot_from(
    ctx: &ToolContext<'_>,
    state: &EnvironmentState,
    object: &str,
    field: &str,
    plot: &str,
) -> Result<Observation, String> {
    let (result, net) = match result_and_network(ctx, state, object)? {
        Ok(found) => found,
        Err(obs) => return Ok(obs),
    };
    Ok(plot_observation(plot_record(
        &net,
        plot,
        &result["timestamp"],
        &result[field],
    )))
}

fn plot_voltage_map(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    plot_from(ctx, state, "powerflow_result", "voltages", "voltage_map")
}

fn plot_curtailment_map(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    plot_from(
        ctx,
        state,
        "hosting_result",
        "curtailment_kw",
        "curtailment_map",
    )
}

fn plot_infeasible_currents_map(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    plot_from(
        ctx,
        state,
        "infeasibility_result",
        "infeasible_currents",
        "infeasible_currents_map",
    )
}

fn plot_infeasibility_voltage_map(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    plot_from(
        ctx,
        state,
        "infeasibility_result",
        "voltages",
        "infeasibility_voltage_map",
    )
}

fn get_hosting_capacity_summary(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    let (result, _) = match result_and_network(ctx, state, "hosting_result")? {
        Ok(found) => found,
        Err(obs) => return Ok(obs),
    };
    let curtailment = result["curtailment_kw"]
        .as_object()
        .cloned()
        .unwrap_or_default();
    let total = round6(curtailment.values().filter_map(Value::as_f64).sum());
    let summary = json!({
        "feeder": result["feeder"],
        "timestamp": result["timestamp"],
        "norm": result["norm"],
        "hosting_capacity_kw": result["hosting_capacity_kw"],
        "total_curtailment_kw": total,
    });
    Ok(Observation::ok(
        format!(
            "Hosting capacity {} kW, total curtailment {total} kW.",
            result["hosting_capacity_kw"]
        ),
        Some(summary),
    ))
}

fn top_k_infeasible_buses(
    ctx: &ToolContext<'_>,
    state: &mut EnvironmentState,
    args: &Arguments,
) -> Result<Observation, String> {
    let k = args.get("k").and_then(Value::as_i64).unwrap_or_default();
    if k < 1 {
        return Err("k must be at least 1".into());
    }
    let (result, _) = match result_and_network(ctx, state, "infeasibility_result")? {
        Ok(found) => found,
        Err(obs) => return Ok(obs),
    };
    let mut ranked: Vec<(String, f64)> = result["infeasible_currents"]
        .as_object()
        .map(|m| {
            m.iter()
                .map(|(b, v)| (b.clone(), v.as_f64().unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k as usize);
    let text = ranked
        .iter()
        .map(|(b, v)| format!("{b}\t{v} A"))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Observation::ok(
        format!("Top {k} infeasible buses:\n{text}"),
        Some(json!({
            "feeder": result["feeder"],
            "timestamp": result["timestamp"],
            "buses": ranked.iter().map(|(b, v)| json!({"bus": b, "current_a": v})).collect::<Vec<_>>(),
        })),
    ))
}

fn distractor(
    _: &ToolContext<'_>,
    _: &mut EnvironmentState,
    _: &Arguments,
) -> Result<Observation, String> {
    Ok(Observation::ok(
        "This service returned no data for the configured feeders.",
        None,
    ))
}

fn schema(name: &str, description: &str, args: Vec<ArgSpec>, kind: ToolKind) -> ToolSchema {
    ToolSchema::new(name, description, args, kind).expect("reference schemas are well formed")
}

fn functional_entries() -> Vec<(ToolSchema, ToolHandler, bool)> {
    use ArgType::*;
    use ToolKind::*;
    let none = Vec::new;
    vec![
        (
            schema("list_feeders", "List the feeders available in the dataset.", none(), Read),
            list_feeders as ToolHandler,
            true,
        ),
        (
            schema(
                "load_network",
                "Load the network model of a feeder. Replaces any previously loaded network.",
                vec![ArgSpec::required("feeder", String)],
                Write,
            ),
            load_network,
            false,
        ),
        (
            schema(
                "get_component_counts",
                "Count components of one type in the loaded network.",
                vec![ArgSpec::required("component", String).with_options(&[
                    "buses",
                    "lines",
                    "transformers",
                    "capacitors",
                    "regulators",
                ])],
                Read,
            ),
            get_component_counts,
            true,
        ),
        (
            schema(
                "find_nodes_by_voltage",
                "List nodes of the loaded network with the given nominal voltage in volts.",
                vec![ArgSpec::required("voltage", Real)],
                Read,
            ),
            find_nodes_by_voltage,
            true,
        ),
        (
            schema(
                "export_nodes_to_file",
                "Write the nodes with the given nominal voltage to a text file in the output directory.",
                vec![ArgSpec::required("filename", String), ArgSpec::required("voltage", Real)],
                Write,
            ),
            export_nodes_to_file,
            true,
        ),
        (
            schema(
                "set_timestamp",
                "Set the simulation date and time (YYYY-MM-DDTHH:MM).",
                vec![ArgSpec::required("timestamp", Timestamp)],
                Write,
            ),
            set_timestamp,
            false,
        ),
        (
            schema(
                "plot_input_voltage_map",
                "Plot bus voltage magnitudes from input measurements at the current time, without running analysis.",
                none(),
                Read,
            ),
            plot_input_voltage_map,
            true,
        ),
        (
            schema(
                "attach_load_profile",
                "Attach load time series for the current time.",
                vec![ArgSpec::required("source", String).with_options(&["ami", "synthetic"])],
                Write,
            ),
            attach_load_profile,
            false,
        ),
        (
            schema(
                "attach_pv_profile",
                "Attach solar generation time series for the current time.",
                vec![ArgSpec::required("source", String).with_options(&["irradiance", "clear_sky"])],
                Write,
            ),
            attach_pv_profile,
            false,
        ),
        (
            schema(
                "set_voltage_limits",
                "Set global voltage bounds in p.u., optionally with custom bounds for specific bus ids.",
                vec![
                    ArgSpec::required("vmin", Real),
                    ArgSpec::required("vmax", Real),
                    ArgSpec::optional("custom_bus_ids", ListOfReal),
                    ArgSpec::optional("custom_vmin", Real),
                    ArgSpec::optional("custom_vmax", Real),
                ],
                Write,
            ),
            set_voltage_limits,
            false,
        ),
        (
            schema(
                "set_transformer_limit",
                "Limit transformer loading to a percentage of rating.",
                vec![ArgSpec::required("percent", Real)],
                Write,
            ),
            set_transformer_limit,
            false,
        ),
        (
            schema(
                "run_power_flow",
                "Solve unbalanced three-phase power flow for the current time and load profile.",
                none(),
                Write,
            ),
            run_power_flow,
            false,
        ),
        (
            schema("get_voltages", "Report bus voltages from the latest power flow result.", none(), Read),
            get_voltages,
            true,
        ),
        (
            schema("plot_voltage_map", "Plot bus voltages from the latest power flow result on the feeder map.", none(), Read),
            plot_voltage_map,
            true,
        ),
        (
            schema(
                "run_hosting_capacity",
                "Solve dynamic hosting capacity. l1 gives sparse curtailment, l2 spreads it, linf bounds the worst bus.",
                vec![ArgSpec::required("norm", String).with_options(&["l1", "l2", "linf"])],
                Write,
            ),
            run_hosting_capacity,
            false,
        ),
        (
            schema(
                "get_hosting_capacity_summary",
                "Summarize the latest hosting capacity result.",
                none(),
                Read,
            ),
            get_hosting_capacity_summary,
            true,
        ),
        (
            schema(
                "plot_curtailment_map",
                "Plot curtailed power per bus from the latest hosting capacity result.",
                none(),
                Read,
            ),
            plot_curtailment_map,
            true,
        ),
        (
            schema(
                "run_infeasibility",
                "Solve three-phase current-infeasibility analysis.",
                vec![
                    ArgSpec::required("norm", String).with_options(&["l1", "l2"]),
                    ArgSpec::optional("solver", String).with_options(&["ipopt", "gurobi", "knitro"]),
                    ArgSpec::optional("tolerance", Real),
                    ArgSpec::optional("max_iter", Integer),
                ],
                Write,
            ),
            run_infeasibility,
            false,
        ),
        (
            schema(
                "top_k_infeasible_buses",
                "Report the k buses with the largest infeasible currents.",
                vec![ArgSpec::required("k", Integer)],
                Read,
            ),
            top_k_infeasible_buses,
            true,
        ),
        (
            schema(
                "plot_infeasible_currents_map",
                "Plot infeasible currents per bus from the latest infeasibility result.",
                none(),
                Read,
            ),
            plot_infeasible_currents_map,
            true,
        ),
        (
            schema(
                "plot_infeasibility_voltage_map",
                "Plot bus voltages from the latest infeasibility result.",
                none(),
                Read,
            ),
            plot_infeasibility_voltage_map,
            true,
        ),
    ]
}

/// The 82-tool reference registry.
pub fn reference_toolset() -> ToolRegistry {
    let mut registry = ToolRegistry::new();
    for (schema, handler, output) in functional_entries() {
        registry
            .register(schema, handler, output)
            .expect("unique tool names");
    }
    for name in DISTRACTORS {
        let description = format!(
            "Query the {} service.",
            name.trim_start_matches("get_").replace('_', " ")
        );
        let args = vec![ArgSpec::optional("query", ArgType::String)];
        registry
            .register(
                schema(name, &description, args, ToolKind::Read),
                distractor,
                false,
            )
            .expect("unique tool names");
    }
    registry
}

/// Valid arguments for every reference tool plus three probe states: the
/// initial state, a freshly loaded network and a state holding every
/// result object.
pub fn reference_probe_suite(env: &Environment) -> ProbeSuite {
    let feeder = env
        .fixture()
        .feeders
        .keys()
        .next()
        .cloned()
        .unwrap_or_default();
    let args = |pairs: Value| -> Arguments {
        pairs
            .as_object()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default()
    };
    let mut arguments: BTreeMap<String, Arguments> = BTreeMap::new();
    let functional = [
        ("load_network", json!({ "feeder": feeder })),
        ("get_component_counts", json!({ "component": "buses" })),
        ("find_nodes_by_voltage", json!({ "voltage": 120.0 })),
        (
            "export_nodes_to_file",
            json!({ "filename": "probe.txt", "voltage": 120.0 }),
        ),
        ("set_timestamp", json!({ "timestamp": "2025-03-18T11:00" })),
        ("attach_load_profile", json!({ "source": "ami" })),
        ("attach_pv_profile", json!({ "source": "irradiance" })),
        ("set_voltage_limits", json!({ "vmin": 0.95, "vmax": 1.05 })),
        ("set_transformer_limit", json!({ "percent": 110.0 })),
        ("run_hosting_capacity", json!({ "norm": "l1" })),
        ("run_infeasibility", json!({ "norm": "l2" })),
        ("top_k_infeasible_buses", json!({ "k": 3 })),
    ];
    for (name, a) in functional {
        arguments.insert(name.to_string(), args(a));
    }
    for schema in env.schemas().iter() {
        arguments.entry(schema.name.clone()).or_default();
    }

    let initial = env.reset();
    let mut state = initial.clone();
    let mut states = vec![initial];
    let setup = [
        "load_network",
        "set_timestamp",
        "attach_load_profile",
        "attach_pv_profile",
        "set_voltage_limits",
        "set_transformer_limit",
        "run_power_flow",
        "run_hosting_capacity",
        "run_infeasibility",
        "export_nodes_to_file",
    ];
    for (i, name) in setup.iter().enumerate() {
        let invocation = ToolInvocation {
            tool: name.to_string(),
            args: arguments[*name].clone(),
        };
        state = env.execute_tool(&state, &invocation).0;
        if i == 0 {
            states.push(state.clone());
        }
    }
    states.push(state);
    ProbeSuite { arguments, states }
}
