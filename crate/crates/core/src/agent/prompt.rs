use crate::retrieval::ExemplarRecord;
use crate::workflow::{ArgType, SchemaRegistry, ToolKind};

/// Observations longer than this are cut before entering the history.
pub const OBSERVATION_LIMIT: usize = 4000;

const PREAMBLE: &str = "You are an analysis agent for power distribution grids. Answer the user's query by calling the available tools one at a time; each call returns an observation. When the query is fully answered, reply with a plain-text final response and no tool call.

Write tools change the stored session state (network, time, profiles, limits, analysis results). Read tools report whatever is currently stored and never fail on stale data, so run every Write tool a Read depends on before calling it.";

fn type_name(ty: ArgType) -> &'static str {
    match ty {
        ArgType::String => "string",
        ArgType::Integer => "integer",
        ArgType::Real => "real",
        ArgType::Boolean => "boolean",
        ArgType::ListOfReal => "list of real",
        ArgType::Timestamp => "timestamp YYYY-MM-DDTHH:MM",
    }
}

/// Deterministic system prompt: preamble, query, exemplars in the given
/// (ranked) order, then every tool schema in registry order. The exemplar
/// section is omitted when there are none.
pub fn render_system_prompt(
    query: &str,
    exemplars: &[ExemplarRecord],
    schemas: &SchemaRegistry,
) -> String {
    let mut out = String::from(PREAMBLE);
    out.push_str("\n\n## Query\n");
    out.push_str(query.trim());
    out.push('\n');

    if !exemplars.is_empty() {
        out.push_str("\n## Verified example workflows\n");
        for (i, record) in exemplars.iter().enumerate() {
            out.push_str(&format!(
                "\nExample {}\nQuery: {}\nWorkflow:\n",
                i + 1,
                record.query.trim()
            ));
            for (j, step) in record.workflow.steps.iter().enumerate() {
                let args = serde_json::to_string(&step.args).expect("args serialize");
                out.push_str(&format!("  {}. {} {}\n", j + 1, step.tool, args));
            }
        }
    }

    out.push_str("\n## Tools\n");
    for schema in schemas.iter() {
        let kind = match schema.kind {
            ToolKind::Read => "read",
            ToolKind::Write => "write",
        };
        out.push_str(&format!(
            "- {} ({kind}): {}\n",
            schema.name, schema.description
        ));
        for arg in &schema.args {
            let presence = if arg.required { "required" } else { "optional" };
            out.push_str(&format!(
                "    {}: {}, {presence}",
                arg.name,
                type_name(arg.ty)
            ));
            if let Some(options) = &arg.options {
                out.push_str(&format!(", one of {}", options.join("|")));
            }
            out.push('\n');
        }
    }
    out
}

/// Cuts `text` to [`OBSERVATION_LIMIT`] characters, appending a marker.
pub fn truncate_observation(text: &str) -> String {
    let total = text.chars().count();
    if total <= OBSERVATION_LIMIT {
        return text.to_string();
    }
    let kept: String = text.chars().take(OBSERVATION_LIMIT).collect();
    format!(
        "{kept}\n[truncated {} characters]",
        total - OBSERVATION_LIMIT
    )
}
