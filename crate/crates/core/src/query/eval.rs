use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use super::{Direction, Label, Query};
use crate::canon::render;
use crate::graph::{LedgerGraph, Node};
use crate::model::{EdgeKind, EntryType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    /// Aligned columns with a header row.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let mut l = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i + 1 == cells.len() {
                    l.push_str(cell);
                } else {
                    let _ = write!(l, "{cell:<w$}  ");
                }
            }
            out.push_str(l.trim_end());
            out.push('\n');
        };
        line(&self.columns);
        for row in &self.rows {
            line(row);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

fn label_matches(node: &Node, label: Label) -> bool {
    match label {
        Label::Entry(t) => node.entry_type == t,
        Label::Deployment => node.deployment,
    }
}

/// Query view of a relation. Influence edges are read in both of their
/// stored forms: `a INFLUENCES b` holds when `a influences b` or
/// `b influencedBy a` is recorded, and symmetrically.
fn related(g: &LedgerGraph, from: &str, kind: EdgeKind, to: &str) -> bool {
    if g.has_edge(from, kind, to) {
        return true;
    }
    match kind {
        EdgeKind::Influences => g.has_edge(to, EdgeKind::InfluencedBy, from),
        EdgeKind::InfluencedBy => g.has_edge(to, EdgeKind::Influences, from),
        _ => false,
    }
}

fn edge_holds(g: &LedgerGraph, a: &str, kind: EdgeKind, dir: Direction, b: &str) -> bool {
    match dir {
        Direction::Out => related(g, a, kind, b),
        Direction::In => related(g, b, kind, a),
        Direction::Either => related(g, a, kind, b) || related(g, b, kind, a),
        Direction::Both => related(g, a, kind, b) && related(g, b, kind, a),
    }
}

fn render_scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        other => render(other).ok().map(|b| String::from_utf8(b).expect("canonical json is utf-8")),
    }
}

fn snake_to_camel(s: &str) -> String {
    let mut out = String::new();
    let mut up = false;
    for c in s.chars() {
        if c == '_' {
            up = true;
        } else if up {
            out.extend(c.to_uppercase());
            up = false;
        } else {
            out.push(c);
        }
    }
    out
}

/// Resolves `field` on a node.
///
/// `id` and `type` always resolve. Otherwise the fixed names `topic` (test),
/// `decision`, `timestamp` and `artifact_version` (run) and `boundary`
/// (artifact/deployment) are tried, then the payload's own fields
/// (snake_case names map to camelCase), then `createdAt`. Redacted nodes
/// expose only `id` and `type`.
pub fn field_value(g: &LedgerGraph, node: &Node, field: &str) -> Option<String> {
    match field {
        "id" => return Some(node.id.to_string()),
        "type" => return Some(node.entry_type.to_string()),
        _ => {}
    }
    let entry = g.visible_entry(node)?;
    let fixed = match (node.entry_type, field) {
        (EntryType::Test, "topic") => entry.test().map(|t| t.topic.clone()),
        (EntryType::EvaluationRun, "decision") => entry.run().map(|r| r.decision.to_string()),
        (EntryType::EvaluationRun, "timestamp") => entry.run().map(|r| r.timestamp.to_string()),
        (EntryType::EvaluationRun, "artifact_version") => entry.run().map(|r| r.version.clone()),
        (EntryType::Artifact, "boundary") => entry.artifact().and_then(|a| a.boundary.clone()),
        _ => None,
    };
    if fixed.is_some() {
        return fixed;
    }
    let payload = entry.payload.to_value().ok()?;
    let camel = snake_to_camel(field);
    if let Some(v) = payload.get(field).or_else(|| payload.get(&camel)) {
        return render_scalar(v);
    }
    match camel.as_str() {
        "createdAt" => Some(entry.created_at.to_string()),
        _ => None,
    }
}

fn var_index<'q>(name: &'q str, vars: &mut Vec<&'q str>, labels: &mut Vec<Vec<Label>>) -> usize {
    match vars.iter().position(|v| *v == name) {
        Some(i) => i,
        None => {
            vars.push(name);
            labels.push(Vec::new());
            vars.len() - 1
        }
    }
}

struct Constraint {
    a: usize,
    b: usize,
    kind: EdgeKind,
    dir: Direction,
}

/// All assignments of graph nodes to variables (homomorphisms; distinct
/// variables may share a node) satisfying every pattern and predicate.
/// One row per assignment, rows sorted.
pub fn evaluate(q: &Query, g: &LedgerGraph) -> ResultTable {
    let mut vars: Vec<&str> = Vec::new();
    let mut labels: Vec<Vec<Label>> = Vec::new();
    let mut constraints = Vec::new();
    for m in &q.matches {
        let mut prev = var_index(&m.start.var, &mut vars, &mut labels);
        labels[prev].extend(m.start.label);
        for (e, n) in &m.steps {
            let i = var_index(&n.var, &mut vars, &mut labels);
            labels[i].extend(n.label);
            constraints.push(Constraint {
                a: prev,
                b: i,
                kind: e.kind,
                dir: e.direction,
            });
            prev = i;
        }
    }
    let preds: Vec<(usize, &str, &str)> = q
        .predicates
        .iter()
        .map(|p| {
            let i = vars.iter().position(|v| *v == p.var).expect("bound by parse");
            (i, p.field.as_str(), p.value.as_str())
        })
        .collect();

    // Candidates per variable after label and single-variable predicate
    // filtering.
    let all: Vec<&Node> = g.nodes().collect();
    let candidates: Vec<Vec<&Node>> = (0..vars.len())
        .map(|i| {
            all.iter()
                .copied()
                .filter(|n| labels[i].iter().all(|l| label_matches(n, *l)))
                .filter(|n| {
                    preds
                        .iter()
                        .filter(|(v, _, _)| *v == i)
                        .all(|(_, f, want)| field_value(g, n, f).as_deref() == Some(*want))
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut chosen: Vec<&Node> = Vec::with_capacity(vars.len());
    search(g, &candidates, &constraints, &mut chosen, &mut |assign: &[&Node]| {
        let row = q
            .returns
            .iter()
            .map(|p| {
                let i = vars.iter().position(|v| *v == p.var).expect("bound by parse");
                field_value(g, assign[i], &p.field).unwrap_or_default()
            })
            .collect();
        rows.push(row);
    });
    rows.sort();
    ResultTable {
        columns: q.returns.iter().map(ToString::to_string).collect(),
        rows,
    }
}

fn search<'g>(
    g: &LedgerGraph,
    candidates: &[Vec<&'g Node>],
    constraints: &[Constraint],
    chosen: &mut Vec<&'g Node>,
    emit: &mut dyn FnMut(&[&Node]),
) {
    let k = chosen.len();
    if k == candidates.len() {
        emit(chosen);
        return;
    }
    for n in &candidates[k] {
        chosen.push(n);
        let ok = constraints
            .iter()
            .filter(|c| c.a.max(c.b) == k)
            .all(|c| edge_holds(g, chosen[c.a].id.as_str(), c.kind, c.dir, chosen[c.b].id.as_str()));
        if ok {
            search(g, candidates, constraints, chosen, emit);
        }
        chosen.pop();
    }
}
