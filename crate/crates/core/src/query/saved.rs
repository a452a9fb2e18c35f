use std::collections::BTreeMap;

use super::{evaluate, parse_query, QueryError, ResultTable};
use crate::graph::LedgerGraph;

/// A named query template. Parameters appear as `$name` and are replaced by
/// escaped string literals.
#[derive(Debug, Clone, Copy)]
pub struct SavedQuery {
    pub name: &'static str,
    pub params: &'static [&'static str],
    pub text: &'static str,
    pub summary: &'static str,
}

const LIBRARY: &[SavedQuery] = &[
    SavedQuery {
        name: "regression-attribution",
        params: &["topic", "boundary"],
        text: r#"MATCH (c:Contribution)-[:MOTIVATES]->(t:Test)
MATCH (t)<-[:USES_TEST]-(r:EvaluationRun)-[:EVALUATES]->(a:Artifact)
MATCH (a)-[:DEPLOYED_AS]->(d:Deployment)
WHERE t.topic = $topic AND r.decision = "fail"
  AND d.boundary = $boundary
RETURN c.id, t.id, r.artifact_version, r.timestamp, d.id;"#,
        summary: "contributions whose tests caught a failure of a deployed artifact",
    },
    SavedQuery {
        name: "tests-by-topic",
        params: &["topic"],
        text: r#"MATCH (c:Contribution)-[:MOTIVATES]->(t:Test)
WHERE t.topic = $topic
RETURN c.id, t.id;"#,
        summary: "tests on a topic and the contributions that motivated them",
    },
    SavedQuery {
        name: "runs-of-test",
        params: &["test"],
        text: r#"MATCH (t:Test)<-[:USES_TEST]-(r:EvaluationRun)
WHERE t.id = $test
RETURN r.id, r.artifact_version, r.decision, r.timestamp;"#,
        summary: "every run of one test",
    },
];

pub fn saved_queries() -> &'static [SavedQuery] {
    LIBRARY
}

/// Quotes `s` as a query string literal.
pub fn escape_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn substitute(text: &str, params: &BTreeMap<String, String>) -> String {
    // Longest names first so that `$ab` is not split by `$a`.
    let mut names: Vec<&String> = params.keys().collect();
    names.sort_by_key(|n| std::cmp::Reverse(n.len()));
    let mut out = text.to_string();
    for n in names {
        out = out.replace(&format!("${n}"), &escape_literal(&params[n]));
    }
    out
}

pub fn run_saved_query(
    name: &str,
    params: &BTreeMap<String, String>,
    graph: &LedgerGraph,
) -> Result<ResultTable, QueryError> {
    let q = LIBRARY
        .iter()
        .find(|q| q.name == name)
        .ok_or_else(|| QueryError::UnknownQueryName(name.to_string()))?;
    let fits = params.len() == q.params.len() && q.params.iter().all(|p| params.contains_key(*p));
    if !fits {
        return Err(QueryError::ParameterArity {
            name: name.to_string(),
            expected: q.params.len(),
            params: q.params.iter().map(|p| p.to_string()).collect(),
            got: params.len(),
        });
    }
    let ast = parse_query(&substitute(q.text, params))?;
    Ok(evaluate(&ast, graph))
}
