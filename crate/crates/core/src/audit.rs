//! Evidence coverage coding, release exports and their conformance check,
//! and consent-violation flags.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::governance::{gate_check, voucher_heads, GateDecision};
use crate::graph::{build_graph, change_is_tested, influence_reach, LedgerGraph};
use crate::harness::{active_tests, artifact_version};
use crate::model::{
    from_value, validate_structure, ChangeKind, CompensationModel, ConsentStatus, EntryEnvelope,
    EntryType, IntendedUse, LedgerId, Timestamp, VoucherStatus,
};

/// Coverage of one evidence element, ordered `NotSpecified < Partial <
/// Reported`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoverageLevel {
    NotSpecified,
    Partial,
    Reported,
}

impl CoverageLevel {
    /// Label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            CoverageLevel::NotSpecified => "Not specified",
            CoverageLevel::Partial => "Partial",
            CoverageLevel::Reported => "Reported",
        }
    }

    /// Accepts `Reported`, `Partial`, and `NotSpecified` or `Not specified`.
    pub fn parse(s: &str) -> Option<CoverageLevel> {
        match s.replace(' ', "").to_ascii_lowercase().as_str() {
            "reported" => Some(CoverageLevel::Reported),
            "partial" => Some(CoverageLevel::Partial),
            "notspecified" => Some(CoverageLevel::NotSpecified),
            _ => None,
        }
    }
}

impl fmt::Display for CoverageLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EvidenceColumn {
    RecruitmentPathway,
    RolesAndIntermediaries,
    ConsentPrivacyScope,
    CompensationTerms,
    ExplicitInfluenceLinks,
}

impl EvidenceColumn {
    pub const ALL: [EvidenceColumn; 5] = [
        EvidenceColumn::RecruitmentPathway,
        EvidenceColumn::RolesAndIntermediaries,
        EvidenceColumn::ConsentPrivacyScope,
        EvidenceColumn::CompensationTerms,
        EvidenceColumn::ExplicitInfluenceLinks,
    ];

    pub fn key(self) -> &'static str {
        match self {
            EvidenceColumn::RecruitmentPathway => "recruitmentPathway",
            EvidenceColumn::RolesAndIntermediaries => "rolesAndIntermediaries",
            EvidenceColumn::ConsentPrivacyScope => "consentPrivacyScope",
            EvidenceColumn::CompensationTerms => "compensationTerms",
            EvidenceColumn::ExplicitInfluenceLinks => "explicitInfluenceLinks",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            EvidenceColumn::RecruitmentPathway => "Recruitment pathway",
            EvidenceColumn::RolesAndIntermediaries => "Roles and intermediaries",
            EvidenceColumn::ConsentPrivacyScope => "Consent and privacy scope",
            EvidenceColumn::CompensationTerms => "Compensation terms",
            EvidenceColumn::ExplicitInfluenceLinks => "Explicit influence links",
        }
    }
}

pub type Coverage = [CoverageLevel; 5];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AuditError {
    #[error("expected a Contribution, got {0}")]
    WrongEntryType(EntryType),
    #[error("malformed export: {0}")]
    MalformedExport(String),
    #[error("unknown release {artifact}@{version}")]
    UnknownRelease { artifact: LedgerId, version: String },
    #[error("malformed case coding: {0}")]
    MalformedCoding(String),
}

/// Codes a contribution's evidence coverage. `graph` resolves influence
/// links; without it, declared links code as Partial at most.
pub fn audit_contribution(entry: &EntryEnvelope, graph: Option<&LedgerGraph>) -> Result<Coverage, AuditError> {
    use CoverageLevel::*;
    let Some(c) = entry.contribution() else {
        return Err(AuditError::WrongEntryType(entry.entry_type()));
    };

    let recruitment = match c.recruitment_pathway.as_deref() {
        Some(p) if !p.trim().is_empty() => Reported,
        _ => NotSpecified,
    };

    // A role is always recorded; the intermediary is what makes it
    // operational.
    let roles = if entry.actor.steward_org.is_some() { Reported } else { Partial };

    let consent = match &entry.consent {
        None => NotSpecified,
        Some(k) => {
            let scope = k.scope_tags().next().is_some();
            let retention = k.retention.as_deref().is_some_and(|r| !r.trim().is_empty());
            if scope && retention && !k.reuse_constraints.is_empty() {
                Reported
            } else {
                Partial
            }
        }
    };

    let compensation = match &entry.compensation {
        None => NotSpecified,
        Some(k) => {
            let terms = match k.model {
                CompensationModel::NoneDeclared => false,
                CompensationModel::Honorarium | CompensationModel::Hourly => {
                    k.amount.is_some_and(|a| a.is_finite() && a.value() > 0.0) && k.currency.is_some()
                }
                CompensationModel::CreditLinked => true,
            };
            if terms {
                Reported
            } else {
                Partial
            }
        }
    };

    let resolved = graph.is_some_and(|g| {
        influence_reach(g, entry.id.as_str()).into_iter().any(|n| {
            g.node_str(n)
                .is_some_and(|n| matches!(n.entry_type, EntryType::Change | EntryType::Test))
        })
    });
    let influence = if resolved {
        Reported
    } else if !entry.links.influences.is_empty() {
        Partial
    } else {
        NotSpecified
    };

    Ok([recruitment, roles, consent, compensation, influence])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatrixRow {
    pub case: String,
    pub cells: Coverage,
}

/// Coverage per case (rows) and evidence element (the five fixed columns).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct EvidenceMatrix {
    pub rows: Vec<MatrixRow>,
}

impl EvidenceMatrix {
    pub fn cell(&self, case: &str, column: EvidenceColumn) -> Option<CoverageLevel> {
        let i = EvidenceColumn::ALL.iter().position(|c| *c == column)?;
        self.rows.iter().find(|r| r.case == case).map(|r| r.cells[i])
    }

    pub fn to_text(&self) -> String {
        let header: Vec<&str> = std::iter::once("Case")
            .chain(EvidenceColumn::ALL.iter().map(|c| c.title()))
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            widths[0] = widths[0].max(r.case.chars().count());
            for (i, c) in r.cells.iter().enumerate() {
                widths[i + 1] = widths[i + 1].max(c.label().len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: Vec<&str>| {
            let mut l = String::new();
            for (cell, w) in cells.iter().zip(&widths) {
                let _ = write!(l, "{cell:<w$}  ");
            }
            out.push_str(l.trim_end());
            out.push('\n');
        };
        line(header.clone());
        for r in &self.rows {
            line(std::iter::once(r.case.as_str()).chain(r.cells.iter().map(|c| c.label())).collect());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("case")
            .chain(EvidenceColumn::ALL.iter().map(|c| c.key()))
            .collect();
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let row: Vec<&str> = std::iter::once(r.case.as_str())
                .chain(r.cells.iter().map(|c| c.label()))
                .collect();
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// One human-supplied case coding: `{"case": name, "<columnKey>": level, ..}`.
/// Absent columns code as NotSpecified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseCoding {
    pub case: String,
    pub cells: BTreeMap<EvidenceColumn, CoverageLevel>,
}

/// Reads `{"cases": [ {..}, .. ]}` or a bare array of case codings.
pub fn parse_case_codings(doc: &Value) -> Result<Vec<CaseCoding>, AuditError> {
    let bad = |m: String| AuditError::MalformedCoding(m);
    let cases = doc
        .get("cases")
        .unwrap_or(doc)
        .as_array()
        .ok_or_else(|| bad("expected an array of cases".into()))?;
    let mut out = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let obj = c.as_object().ok_or_else(|| bad(format!("case {i} is not an object")))?;
        let case = obj
            .get("case")
            .and_then(Value::as_str)
            .ok_or_else(|| bad(format!("case {i} has no name")))?
            .to_string();
        let mut cells = BTreeMap::new();
        for (k, v) in obj {
            if k == "case" {
                continue;
            }
            let col = EvidenceColumn::ALL
                .into_iter()
                .find(|c| c.key() == k)
                .ok_or_else(|| bad(format!("{case}: unknown column `{k}`")))?;
            let level = v
                .as_str()
                .and_then(CoverageLevel::parse)
                .ok_or_else(|| bad(format!("{case}: `{k}` is not a coverage level")))?;
            cells.insert(col, level);
        }
        out.push(CaseCoding { case, cells });
    }
    Ok(out)
}

/// Document mode: formats supplied codings without re-judging them.
pub fn audit_corpus(cases: &[CaseCoding]) -> EvidenceMatrix {
    EvidenceMatrix {
        rows: cases
            .iter()
            .map(|c| MatrixRow {
                case: c.case.clone(),
                cells: EvidenceColumn::ALL
                    .map(|col| c.cells.get(&col).copied().unwrap_or(CoverageLevel::NotSpecified)),
            })
            .collect(),
    }
}

/// Ledger mode: each cell is the best coverage achieved by any contribution
/// of the group. Groups default to the first id segment after the kind.
pub fn audit_ledger(graph: &LedgerGraph, groups: Option<&BTreeMap<String, Vec<LedgerId>>>) -> EvidenceMatrix {
    let derived;
    let groups = match groups {
        Some(g) => g,
        None => {
            let mut m: BTreeMap<String, Vec<LedgerId>> = BTreeMap::new();
            for n in graph.nodes().filter(|n| n.entry_type == EntryType::Contribution) {
                m.entry(n.id.group().to_string()).or_default().push(n.id.clone());
            }
            derived = m;
            &derived
        }
    };
    let mut rows = Vec::new();
    for (case, ids) in groups {
        let mut cells = [CoverageLevel::NotSpecified; 5];
        for id in ids {
            let Some(entry) = graph.node(id).and_then(|n| graph.visible_entry(n)) else {
                continue;
            };
            if let Ok(cov) = audit_contribution(entry, Some(graph)) {
                for (cell, c) in cells.iter_mut().zip(cov) {
                    *cell = (*cell).max(c);
                }
            }
        }
        rows.push(MatrixRow {
            case: case.clone(),
            cells,
        });
    }
    EvidenceMatrix { rows }
}

pub const EXPORT_FORMAT: &str = "pledger-export/1";

/// Self-contained release export: the graph closure of the release's
/// artifact-version entry, active tests, every voucher with its gate
/// outcome for the release, and the ledger head digest. Redacted entries
/// are listed by id and retained hash only.
pub fn build_export(
    entries: &[EntryEnvelope],
    artifact: &LedgerId,
    version: &str,
    now: Timestamp,
) -> Result<Value, AuditError> {
    let release = artifact_version(entries, artifact, version).ok_or_else(|| AuditError::UnknownRelease {
        artifact: artifact.clone(),
        version: version.to_string(),
    })?;
    let g = build_graph(entries);

    // Undirected closure over recorded edges.
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in g.edges() {
        if g.node_str(&e.to).is_some() {
            adj.entry(e.from.as_str()).or_default().insert(e.to.as_str());
            adj.entry(e.to.as_str()).or_default().insert(e.from.as_str());
        }
    }
    let mut keep: HashSet<&str> = HashSet::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    let seeds = std::iter::once(release.id.as_str())
        .chain(active_tests(entries, artifact).into_iter().map(|(t, _)| t.as_str()))
        .chain(entries.iter().filter(|e| e.voucher().is_some()).map(|e| e.id.as_str()));
    for s in seeds {
        if keep.insert(s) {
            queue.push_back(s);
        }
    }
    while let Some(n) = queue.pop_front() {
        for m in adj.get(n).into_iter().flatten() {
            if keep.insert(m) {
                queue.push_back(m);
            }
        }
    }

    let redacted: BTreeMap<&LedgerId, (&LedgerId, &str)> = entries
        .iter()
        .filter_map(|e| e.tombstone().map(|t| (&t.target_id, (&e.id, t.retained_hash.as_str()))))
        .collect();
    let mut docs = Vec::new();
    let mut stubs = Vec::new();
    for e in entries.iter().filter(|e| keep.contains(e.id.as_str())) {
        if let Some((tomb, hash)) = redacted.get(&e.id) {
            stubs.push(json!({
                "id": e.id, "type": e.entry_type().as_str(),
                "tombstone": tomb, "retainedHash": hash,
            }));
            continue;
        }
        let doc = e
            .to_document(true)
            .map_err(|err| AuditError::MalformedExport(err.to_string()))?;
        docs.push(Value::Object(doc));
    }

    let mut vouchers = Vec::new();
    for head in voucher_heads(entries) {
        let v = head.voucher().expect("voucher");
        let gate: GateDecision = gate_check(entries, &v.capability, artifact, version, &v.boundary, now);
        vouchers.push(json!({
            "voucherId": head.id.lineage(),
            "revision": head.id,
            "capability": v.capability,
            "boundary": v.boundary,
            "action": v.action,
            "status": v.status,
            "gate": gate,
        }));
    }

    Ok(json!({
        "format": EXPORT_FORMAT,
        "release": {"artifact": artifact, "version": version, "entryId": release.id},
        "generatedAt": now,
        "head": entries.last().and_then(|e| e.integrity.as_ref()).map(|i| i.hash.clone()),
        "entries": docs,
        "redacted": stubs,
        "vouchers": vouchers,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Clause {
    #[serde(rename = "a-evidenceFields")]
    EvidenceFields,
    #[serde(rename = "b-traceabilityLinks")]
    TraceabilityLinks,
    #[serde(rename = "c-testsAndRuns")]
    TestsAndRuns,
    #[serde(rename = "d-activeVouchers")]
    ActiveVouchers,
}

impl Clause {
    pub const ALL: [Clause; 4] = [
        Clause::EvidenceFields,
        Clause::TraceabilityLinks,
        Clause::TestsAndRuns,
        Clause::ActiveVouchers,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Clause::EvidenceFields => "a-evidenceFields",
            Clause::TraceabilityLinks => "b-traceabilityLinks",
            Clause::TestsAndRuns => "c-testsAndRuns",
            Clause::ActiveVouchers => "d-activeVouchers",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClauseResult {
    pub pass: bool,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Overall {
    Conformant,
    MaterialNonConformance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConformanceReport {
    pub clause_results: BTreeMap<Clause, ClauseResult>,
    pub overall: Overall,
}

impl ConformanceReport {
    pub fn clause(&self, c: Clause) -> &ClauseResult {
        &self.clause_results[&c]
    }
}

fn field<'a>(doc: &'a Value, key: &str) -> Result<&'a Value, AuditError> {
    doc.get(key)
        .ok_or_else(|| AuditError::MalformedExport(format!("missing `{key}`")))
}

fn id_field(doc: &Value, key: &str) -> Result<LedgerId, AuditError> {
    field(doc, key)?
        .as_str()
        .and_then(|s| LedgerId::parse(s).ok())
        .ok_or_else(|| AuditError::MalformedExport(format!("`{key}` is not a ledger id")))
}

/// Checks a release export against the four clauses of the procurement
/// template.
pub fn check_export_conformance(export: &Value) -> Result<ConformanceReport, AuditError> {
    if field(export, "format")?.as_str() != Some(EXPORT_FORMAT) {
        return Err(AuditError::MalformedExport(format!("format is not {EXPORT_FORMAT}")));
    }
    let release = field(export, "release")?;
    let artifact = id_field(release, "artifact")?;
    let version = field(release, "version")?
        .as_str()
        .ok_or_else(|| AuditError::MalformedExport("release.version must be a string".into()))?
        .to_string();
    let mut entries = Vec::new();
    for (i, d) in field(export, "entries")?
        .as_array()
        .ok_or_else(|| AuditError::MalformedExport("`entries` must be an array".into()))?
        .iter()
        .enumerate()
    {
        entries.push(from_value(d.clone()).map_err(|e| AuditError::MalformedExport(format!("entries[{i}]: {e}")))?);
    }
    let empty = Vec::new();
    let stubs = export.get("redacted").and_then(Value::as_array).unwrap_or(&empty);
    let redacted_contribs: HashSet<String> = stubs
        .iter()
        .filter(|s| s.get("type").and_then(Value::as_str) == Some(EntryType::Contribution.as_str()))
        .filter_map(|s| s.get("id").and_then(Value::as_str).map(str::to_string))
        .collect();
    let vouchers = field(export, "vouchers")?
        .as_array()
        .ok_or_else(|| AuditError::MalformedExport("`vouchers` must be an array".into()))?;

    let g = build_graph(&entries);
    let mut results = BTreeMap::new();

    // (a) evidence fields of contributions used beyond documentation.
    let mut a = Vec::new();
    for e in &entries {
        let Some(c) = e.contribution() else { continue };
        if c.intended_use == Some(IntendedUse::Documentation) {
            continue;
        }
        let report = validate_structure(e);
        for v in &report.violations {
            a.push(format!("{}: {v}", e.id));
        }
    }
    results.insert(Clause::EvidenceFields, a);

    // (b) every change cites a contribution and a versioned test.
    let mut b = Vec::new();
    for e in entries.iter().filter(|e| e.change().is_some()) {
        let cited = e.links.influenced_by.iter().any(|t| {
            g.node(t).is_some_and(|n| n.entry_type == EntryType::Contribution)
                || redacted_contribs.contains(t.as_str())
        });
        if !cited {
            b.push(format!("{}: no resolvable influencedBy contribution", e.id));
        }
        if !g.node(&e.id).is_some_and(|n| change_is_tested(&g, n)) {
            b.push(format!("{}: no linked test", e.id));
        }
    }
    results.insert(Clause::TraceabilityLinks, b);

    // (c) the release's tests and their runs on the release.
    let mut c = Vec::new();
    let tests = active_tests(&entries, &artifact);
    if tests.is_empty() {
        c.push(format!("no tests target {artifact}"));
    }
    for (t, _) in tests {
        let ran = entries.iter().filter_map(|e| e.run()).any(|r| {
            &r.test_id == t && r.artifact_id == artifact && r.version == version
        });
        if !ran {
            c.push(format!("{t}: no run on {artifact}@{version}"));
        }
    }
    results.insert(Clause::TestsAndRuns, c);

    // (d) every open voucher is documented with a gate outcome.
    let mut d = Vec::new();
    for head in voucher_heads(&entries) {
        let v = head.voucher().expect("voucher");
        if !matches!(v.status, VoucherStatus::Issued | VoucherStatus::Active) {
            continue;
        }
        let lineage = head.id.lineage();
        let documented = vouchers.iter().any(|x| {
            x.get("voucherId").and_then(Value::as_str) == Some(lineage.as_str())
                && x.get("gate").is_some_and(Value::is_object)
        });
        if !documented {
            d.push(format!("{lineage}: {} voucher not documented with its gate outcome", v.status));
        }
    }
    results.insert(Clause::ActiveVouchers, d);

    let clause_results: BTreeMap<Clause, ClauseResult> = results
        .into_iter()
        .map(|(k, details)| {
            (
                k,
                ClauseResult {
                    pass: details.is_empty(),
                    details,
                },
            )
        })
        .collect();
    let overall = if clause_results.values().all(|r| r.pass) {
        Overall::Conformant
    } else {
        Overall::MaterialNonConformance
    };
    Ok(ConformanceReport {
        clause_results,
        overall,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ConsentViolationKind {
    /// The change was recorded after the contribution's consent was withdrawn.
    ConsentWithdrawn,
    /// An evaluation-only contribution fed a training-type change.
    EvaluationOnlyUsedForTraining,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsentViolation {
    pub change_id: LedgerId,
    pub contribution_id: LedgerId,
    pub violation: ConsentViolationKind,
}

/// Flags changes that use contributions against their consent terms.
/// Withdrawal is recorded either on the contribution itself or by a later
/// contribution that `supersedes` it; only changes after the withdrawal
/// are flagged.
pub fn flag_consent_violations(graph: &LedgerGraph) -> Vec<ConsentViolation> {
    let entries = graph.entries();
    // Earliest log position at which each contribution is withdrawn.
    let mut withdrawn_at: BTreeMap<&LedgerId, usize> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let Some(c) = e.contribution() else { continue };
        if e.consent.as_ref().map(|k| k.status) != Some(ConsentStatus::Withdrawn) {
            continue;
        }
        // Walk back the supersession chain so withdrawal covers every
        // earlier version of the contribution.
        let mut target = Some(&e.id);
        let mut next_prev = c.supersedes.as_ref();
        while let Some(t) = target {
            withdrawn_at.entry(t).or_insert(i);
            target = next_prev;
            next_prev = next_prev
                .and_then(|p| graph.node(p))
                .and_then(|n| graph.entry(n).contribution())
                .and_then(|c| c.supersedes.as_ref());
        }
    }
    let mut out = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let Some(change) = e.change() else { continue };
        for src in &e.links.influenced_by {
            let Some(node) = graph.node(src) else { continue };
            let Some(contrib) = graph.entry(node).contribution() else { continue };
            if withdrawn_at.get(src).is_some_and(|w| *w < i) {
                out.push(ConsentViolation {
                    change_id: e.id.clone(),
                    contribution_id: src.clone(),
                    violation: ConsentViolationKind::ConsentWithdrawn,
                });
            }
            let training = matches!(change.change_kind, ChangeKind::Dataset | ChangeKind::Adapter);
            if training && contrib.intended_use == Some(IntendedUse::EvaluationOnly) {
                out.push(ConsentViolation {
                    change_id: e.id.clone(),
                    contribution_id: src.clone(),
                    violation: ConsentViolationKind::EvaluationOnlyUsedForTraining,
                });
            }
        }
    }
    out.sort();
    out
}

/// Removes `null` members left by optional serialization, recursively.
pub fn compact(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.retain(|_, x| !x.is_null());
            m.values_mut().for_each(compact);
        }
        Value::Array(a) => a.iter_mut().for_each(compact),
        _ => {}
    }
}
