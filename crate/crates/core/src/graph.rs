//! Typed influence graph over ledger entries, influence tracing and
//! linkage-completeness metrics.
//!
//! Edges are exactly the declared links: every `(entry, kind, target)` of
//! every LinkSet, plus one `motivates` edge from each contribution listed in
//! a test's `motivatedBy` to that test. Nothing is inferred beyond that.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{EdgeKind, EntryEnvelope, EntryType, LedgerId};

/// Maximum number of edges in a traced path.
pub const TRACE_BOUND: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: LedgerId,
    pub entry_type: EntryType,
    /// Payload hidden by a tombstone; type and edges remain.
    pub redacted: bool,
    /// Artifact entry of the deployment kind.
    pub deployment: bool,
    index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Edge {
    pub from: LedgerId,
    pub kind: EdgeKind,
    /// A ledger id, or an external URI for evidence links.
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DanglingLink {
    pub entry_id: LedgerId,
    pub kind: EdgeKind,
    pub target_id: String,
}

#[derive(Debug, Clone, Default)]
pub struct LedgerGraph {
    entries: Vec<EntryEnvelope>,
    nodes: BTreeMap<LedgerId, Node>,
    edges: Vec<Edge>,
    out: HashMap<(String, EdgeKind), Vec<usize>>,
    inc: HashMap<(String, EdgeKind), Vec<usize>>,
    dangling: Vec<DanglingLink>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(String),
}

/// Builds the graph of a verified snapshot. Links to absent entries are
/// recorded as dangling rather than rejected.
pub fn build_graph(entries: &[EntryEnvelope]) -> LedgerGraph {
    let mut g = LedgerGraph {
        entries: entries.to_vec(),
        ..LedgerGraph::default()
    };
    let redacted: BTreeSet<&LedgerId> = entries
        .iter()
        .filter_map(|e| e.tombstone())
        .map(|t| &t.target_id)
        .collect();
    for (i, e) in entries.iter().enumerate() {
        g.nodes.entry(e.id.clone()).or_insert_with(|| Node {
            id: e.id.clone(),
            entry_type: e.entry_type(),
            redacted: redacted.contains(&e.id),
            deployment: e.artifact().is_some_and(|a| a.artifact_kind.is_deployment()),
            index: i,
        });
    }
    // Each edge with the entry that declared it.
    let mut edges: Vec<(Edge, &LedgerId)> = Vec::new();
    for e in entries {
        for (kind, to) in e.links.iter() {
            let edge = Edge {
                from: e.id.clone(),
                kind,
                to: to.to_string(),
            };
            edges.push((edge, &e.id));
        }
        if let Some(t) = e.test() {
            for c in &t.motivated_by {
                let edge = Edge {
                    from: c.clone(),
                    kind: EdgeKind::Motivates,
                    to: e.id.to_string(),
                };
                edges.push((edge, &e.id));
            }
        }
    }
    for (edge, declarer) in edges {
        let i = g.edges.len();
        g.out.entry((edge.from.to_string(), edge.kind)).or_default().push(i);
        g.inc.entry((edge.to.clone(), edge.kind)).or_default().push(i);
        let far = if &edge.from == declarer { edge.to.as_str() } else { edge.from.as_str() };
        let entry_like = LedgerId::parse(far).is_ok_and(|id| id.entry_type().is_some());
        if g.node_str(far).is_none() && (edge.kind != EdgeKind::Evidence || entry_like) {
            g.dangling.push(DanglingLink {
                entry_id: declarer.clone(),
                kind: edge.kind,
                target_id: far.to_string(),
            });
        }
        g.edges.push(edge);
    }
    g
}

impl LedgerGraph {
    pub fn entries(&self) -> &[EntryEnvelope] {
        &self.entries
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: &LedgerId) -> Option<&Node> {
        self.nodes.get(id)
    }

    /// Log position of a node's entry.
    pub fn position(&self, node: &Node) -> usize {
        node.index
    }

    pub fn node_str(&self, id: &str) -> Option<&Node> {
        LedgerId::parse(id).ok().and_then(|id| self.nodes.get(&id))
    }

    /// The entry behind a node, including its payload (callers decide
    /// whether to honour `redacted`).
    pub fn entry(&self, node: &Node) -> &EntryEnvelope {
        &self.entries[node.index]
    }

    /// Entry of a node whose payload may be shown; `None` when redacted.
    pub fn visible_entry(&self, node: &Node) -> Option<&EntryEnvelope> {
        (!node.redacted).then(|| self.entry(node))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges as a sorted multiset, for order-independent comparison.
    pub fn edge_multiset(&self) -> Vec<Edge> {
        let mut v = self.edges.clone();
        v.sort();
        v
    }

    pub fn dangling(&self) -> &[DanglingLink] {
        &self.dangling
    }

    pub fn outgoing(&self, from: &str, kind: EdgeKind) -> impl Iterator<Item = &str> {
        self.out
            .get(&(from.to_string(), kind))
            .into_iter()
            .flatten()
            .map(|i| self.edges[*i].to.as_str())
    }

    pub fn incoming(&self, to: &str, kind: EdgeKind) -> impl Iterator<Item = &str> {
        self.inc
            .get(&(to.to_string(), kind))
            .into_iter()
            .flatten()
            .map(|i| self.edges[*i].from.as_str())
    }

    pub fn has_edge(&self, from: &str, kind: EdgeKind, to: &str) -> bool {
        self.outgoing(from, kind).any(|t| t == to)
    }

    /// Edge-list export: one `from<TAB>kind<TAB>to` line per edge.
    pub fn export_edge_list(&self) -> String {
        let mut s = String::new();
        for e in &self.edges {
            let _ = writeln!(s, "{}\t{}\t{}", e.from, e.kind, e.to);
        }
        s
    }

    /// Influence successors of `n`: forward influences, motivates,
    /// evaluates and deployedAs edges, plus reversed influencedBy and
    /// usesTest edges. Only existing nodes are returned, sorted.
    pub fn influence_successors(&self, n: &str) -> Vec<&str> {
        let mut next: BTreeSet<&str> = BTreeSet::new();
        for k in [EdgeKind::Influences, EdgeKind::Motivates, EdgeKind::Evaluates, EdgeKind::DeployedAs] {
            next.extend(self.outgoing(n, k));
        }
        for k in [EdgeKind::InfluencedBy, EdgeKind::UsesTest] {
            next.extend(self.incoming(n, k));
        }
        next.into_iter().filter(|m| self.node_str(m).is_some()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub paths: Vec<Vec<LedgerId>>,
    /// Some branch reached the path-length bound and was cut.
    pub truncated: bool,
}

/// Nodes reachable from `start` along influence successors, excluding
/// `start` itself.
pub fn influence_reach<'g>(g: &'g LedgerGraph, start: &str) -> BTreeSet<&'g str> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        for m in g.influence_successors(n) {
            if m != start && seen.insert(m) {
                stack.push(m);
            }
        }
    }
    seen
}

/// Every simple influence path from `contribution` to a deployment node,
/// at most [`TRACE_BOUND`] edges long, sorted by node-id sequence.
pub fn trace_influence(graph: &LedgerGraph, contribution: &LedgerId) -> Result<Trace, GraphError> {
    trace_bounded(graph, contribution, TRACE_BOUND)
}

pub fn trace_bounded(graph: &LedgerGraph, start: &LedgerId, bound: usize) -> Result<Trace, GraphError> {
    if graph.node(start).is_none() {
        return Err(GraphError::UnknownNode(start.to_string()));
    }
    let mut trace = Trace {
        paths: Vec::new(),
        truncated: false,
    };
    let mut path = vec![start.as_str()];
    dfs(graph, &mut path, bound, &mut trace);
    trace.paths.sort();
    Ok(trace)
}

fn dfs<'g>(g: &'g LedgerGraph, path: &mut Vec<&'g str>, bound: usize, trace: &mut Trace) {
    let here = *path.last().expect("nonempty path");
    for next in g.influence_successors(here) {
        if path.contains(&next) {
            continue;
        }
        if path.len() > bound {
            trace.truncated = true;
            return;
        }
        path.push(next);
        if g.node_str(next).is_some_and(|n| n.deployment) {
            trace
                .paths
                .push(path.iter().map(|s| LedgerId::parse(s).expect("node id")).collect());
        }
        dfs(g, path, bound, trace);
        path.pop();
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinkageOptions {
    /// Count `evidence` links from a change to a contribution as linkage.
    pub count_evidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LinkageReport {
    pub total_changes: usize,
    pub changes_with_contribution: usize,
    pub changes_with_test: usize,
    /// Changes with both a contribution and a test.
    pub changes_fully_linked: usize,
    pub tests_with_run: usize,
    /// `changes_fully_linked / total_changes`, or 1 with no changes.
    pub completeness_ratio: f64,
    pub dangling: Vec<DanglingLink>,
}

pub fn linkage_completeness(graph: &LedgerGraph) -> LinkageReport {
    linkage_with(graph, LinkageOptions::default())
}

fn is_type(g: &LedgerGraph, id: &str, ty: EntryType) -> bool {
    g.node_str(id).is_some_and(|n| n.entry_type == ty)
}

pub fn linkage_with(graph: &LedgerGraph, opts: LinkageOptions) -> LinkageReport {
    let g = graph;
    let mut r = LinkageReport {
        total_changes: 0,
        changes_with_contribution: 0,
        changes_with_test: 0,
        changes_fully_linked: 0,
        tests_with_run: 0,
        completeness_ratio: 1.0,
        dangling: g.dangling.clone(),
    };
    for node in g.nodes() {
        let id = node.id.as_str();
        match node.entry_type {
            EntryType::Change => {
                r.total_changes += 1;
                let mut sources: Vec<&str> = g.outgoing(id, EdgeKind::InfluencedBy).collect();
                if opts.count_evidence {
                    sources.extend(g.outgoing(id, EdgeKind::Evidence));
                }
                let has_contrib = sources.iter().any(|c| is_type(g, c, EntryType::Contribution));
                let has_test = change_is_tested(g, node);
                r.changes_with_contribution += usize::from(has_contrib);
                r.changes_with_test += usize::from(has_test);
                r.changes_fully_linked += usize::from(has_contrib && has_test);
            }
            EntryType::Test => {
                let has_run = g
                    .incoming(id, EdgeKind::UsesTest)
                    .any(|run| is_type(g, run, EntryType::EvaluationRun));
                r.tests_with_run += usize::from(has_run);
            }
            _ => {}
        }
    }
    if r.total_changes > 0 {
        r.completeness_ratio = r.changes_fully_linked as f64 / r.total_changes as f64;
    }
    r
}

/// A change is tested if it links a test directly (`usesTest`, or a test
/// `motivates` it), or if a run evaluating the change or one of the
/// artifact versions it produced uses a test.
pub fn change_is_tested(g: &LedgerGraph, change: &Node) -> bool {
    let id = change.id.as_str();
    if g.outgoing(id, EdgeKind::UsesTest).any(|t| is_type(g, t, EntryType::Test))
        || g.incoming(id, EdgeKind::Motivates).any(|t| is_type(g, t, EntryType::Test))
    {
        return true;
    }
    let mut evaluated: Vec<String> = vec![id.to_string()];
    if let Some(c) = g.entry(change).change() {
        for ca in &c.changed_artifacts {
            for e in g.entries() {
                if let Some(a) = e.artifact() {
                    if a.artifact == ca.artifact && a.version == ca.version_after {
                        evaluated.push(e.id.to_string());
                    }
                }
            }
        }
    }
    evaluated.iter().any(|target| {
        g.incoming(target, EdgeKind::Evaluates)
            .filter(|run| is_type(g, run, EntryType::EvaluationRun))
            .any(|run| g.outgoing(run, EdgeKind::UsesTest).any(|t| is_type(g, t, EntryType::Test)))
    })
}
