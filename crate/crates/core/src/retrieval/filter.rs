//! Workflow-filter prompt and the deterministic index parser applied to
//! the filter model's reply.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{ExemplarRecord, RetrievalError};
use crate::workflow::ToolInvocation;

#[derive(Serialize)]
struct CandidateView<'a> {
    query: &'a str,
    workflow: &'a [ToolInvocation],
}

/// JSON array of `{"query", "workflow"}` objects; index = position.
pub fn candidates_json(candidates: &[ExemplarRecord]) -> String {
    let views: Vec<CandidateView<'_>> = candidates
        .iter()
        .map(|c| CandidateView {
            query: &c.query,
            workflow: &c.workflow.steps,
        })
        .collect();
    serde_json::to_string(&views).expect("candidates serialize")
}

pub fn render_filter_prompt(query: &str, candidates: &[ExemplarRecord]) -> String {
    format!(
        "Select the best out of these candidate workflows to keep as in-context exemplars.\n\
         \n\
         USER QUERY: {query}\n\
         \n\
         CANDIDATES (JSON): {candidates}\n\
         \n\
         Each candidate has:\n\
         - \"query\"\n\
         - \"workflow\" (tool name + arguments)\n\
         \n\
         Keep a candidate if its workflow helps solve the user query.\n\
         Exclude only if clearly unrelated.\n\
         \n\
         Return ONLY a JSON list of indices to keep (no duplicates).\n\
         Example: [0, 2, 5]",
        candidates = candidates_json(candidates),
    )
}

/// Parses the first bracketed list of integers in `text`. Duplicates
/// collapse and indices outside `0..candidate_count` are dropped.
pub fn parse_filter_output(
    text: &str,
    candidate_count: usize,
) -> Result<BTreeSet<usize>, RetrievalError> {
    let list = first_integer_list(text)
        .ok_or_else(|| RetrievalError::ParseFailure("no bracketed integer list".into()))?;
    let kept: BTreeSet<usize> = list
        .into_iter()
        .filter_map(|tok| tok.parse::<usize>().ok())
        .filter(|&i| i < candidate_count)
        .collect();
    if kept.is_empty() {
        return Err(RetrievalError::ParseFailure(
            "no valid candidate index in list".into(),
        ));
    }
    Ok(kept)
}

fn first_integer_list(text: &str) -> Option<Vec<&str>> {
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let close = after.find(']')?;
        let inner = after[..close].trim();
        let tokens: Vec<&str> = if inner.is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(str::trim).collect()
        };
        let is_int = |t: &&str| {
            let digits = t.strip_prefix('-').unwrap_or(t);
            !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
        };
        if tokens.iter().all(is_int) {
            return Some(tokens);
        }
        rest = after;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::ExecutionTrace;

    fn record(q: &str) -> ExemplarRecord {
        ExemplarRecord {
            id: q.into(),
            query: q.into(),
            workflow: ExecutionTrace::new(vec![
                ToolInvocation::new("load_network").arg("feeder", "glover")
            ]),
        }
    }

    #[test]
    fn prompt_template() {
        let p = render_filter_prompt("Q", &[record("a")]);
        assert!(p.contains("\nUSER QUERY: Q\n"));
        assert!(p.ends_with("\nExample: [0, 2, 5]"));
        assert!(p.contains(
            r#"CANDIDATES (JSON): [{"query":"a","workflow":[{"tool":"load_network","args":{"feeder":"glover"}}]}]"#
        ));
        let empty_query = render_filter_prompt("", &[record("a")]);
        assert!(empty_query.contains("USER QUERY: \n"));
        let three = render_filter_prompt("Q", &[record("a"), record("b"), record("c")]);
        let start = three.find("CANDIDATES (JSON): ").unwrap() + 19;
        let end = three.find("\n\nEach candidate").unwrap();
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&three[start..end]).unwrap();
        assert_eq!(parsed.len(), 3);
    }

    #[test]
    fn parser_rules() {
        let set = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(
            parse_filter_output("[0, 2, 5]", 6).unwrap(),
            set(&[0, 2, 5])
        );
        assert_eq!(parse_filter_output("[1, 1, 1]", 3).unwrap(), set(&[1]));
        assert_eq!(parse_filter_output("I think [0, 9]", 3).unwrap(), set(&[0]));
        assert_eq!(
            parse_filter_output("keep [\"a\"] then [2,1]", 3).unwrap(),
            set(&[1, 2])
        );
        assert_eq!(parse_filter_output("[-1, 1]", 3).unwrap(), set(&[1]));
        assert!(parse_filter_output("[]", 3).is_err());
        assert!(parse_filter_output("none", 3).is_err());
        assert!(parse_filter_output("[7, 8]", 3).is_err());
        assert!(parse_filter_output("[1, 2", 3).is_err());
    }
}
