//! Tests of change, evaluation runs and regression detection.
//!
//! The harness never runs models. Raw results arrive as documents and the
//! decision is a pure function of the measurement procedure and those
//! results, so every stored decision can be replayed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::model::{
    ActorRef, Checkpoint, Comparator, ContributionKind, Decimal, Decision, EntryEnvelope,
    EntryType, LedgerId, LinkSet, Payload, Timestamp,
};
use crate::store::{AppendError, Ledger, LedgerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TestPayload {
    /// Topic tag, e.g. `accessibility`.
    pub topic: String,
    pub input_spec: Value,
    pub expected_behavior: String,
    pub measurement: MeasurementProcedure,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub motivated_by: Vec<LedgerId>,
    /// Logical artifacts this test is part of the suite for.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<LedgerId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Aggregation {
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "runnerKind",
    rename_all = "camelCase",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum MeasurementProcedure {
    Threshold {
        metric_name: String,
        comparator: Comparator,
        bound: Decimal,
    },
    Rubric {
        criteria: Vec<String>,
        scale_max: u32,
        aggregation: Aggregation,
        pass_mean: Decimal,
        min_raters: u32,
    },
    ExternalRecordOnly {},
}

impl MeasurementProcedure {
    /// Whether the harness itself judged the outcome.
    pub fn harness_attested(&self) -> bool {
        !matches!(self, MeasurementProcedure::ExternalRecordOnly {})
    }
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EvaluationRunPayload {
    pub test_id: LedgerId,
    /// Logical artifact; the evaluated version entry is in `links.evaluates`.
    pub artifact_id: LedgerId,
    pub version: String,
    pub decision: Decision,
    pub raw_results: Value,
    pub evaluator: ActorRef,
    pub checkpoint: Checkpoint,
    pub timestamp: Timestamp,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub harness_attested: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Reason recorded on runs for which the results bundle had no document.
pub const MISSING_RESULTS: &str = "missingResults";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RegressionEvent {
    pub test_id: LedgerId,
    pub artifact_id: LedgerId,
    pub from_version: String,
    pub to_version: String,
    pub failing_run_id: LedgerId,
    pub prior_passing_run_id: LedgerId,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("raw results do not match the {runner} runner: {detail}")]
    ShapeMismatch { runner: &'static str, detail: String },
    #[error("unknown test {0}")]
    UnknownTest(LedgerId),
    #[error("unknown artifact version {artifact}@{version}")]
    UnknownArtifactVersion { artifact: LedgerId, version: String },
    #[error("unknown contribution {0}")]
    UnknownContribution(LedgerId),
    #[error("{id} is a {found} contribution, expected incidentReport")]
    WrongKind { id: LedgerId, found: ContributionKind },
    #[error("cannot read results bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Append(#[from] AppendError),
}

fn shape(runner: &'static str, detail: impl Into<String>) -> HarnessError {
    HarnessError::ShapeMismatch {
        runner,
        detail: detail.into(),
    }
}

/// Raw-results document for a test that had no results in a bundle.
pub fn missing_results() -> Value {
    json!({ MISSING_RESULTS: true })
}

fn is_missing(raw: &Value) -> bool {
    raw.get(MISSING_RESULTS) == Some(&Value::Bool(true))
}

/// Judges raw results.
///
/// Shapes: threshold `{"value": n}` (optionally `"metricName"`); rubric
/// `{"scores": {rater: {criterion: n}}}`; external
/// `{"attestation": {"decision": "pass"|"fail"|"inconclusive", ..}}`.
/// `{"missingResults": true}` is always inconclusive.
pub fn decide(m: &MeasurementProcedure, raw: &Value) -> Result<Decision, HarnessError> {
    if is_missing(raw) {
        return Ok(Decision::Inconclusive);
    }
    match m {
        MeasurementProcedure::Threshold {
            metric_name,
            comparator,
            bound,
        } => {
            const R: &str = "threshold";
            let obj = raw.as_object().ok_or_else(|| shape(R, "expected an object"))?;
            if let Some(name) = obj.get("metricName") {
                if name.as_str() != Some(metric_name) {
                    return Err(shape(R, format!("metricName must be `{metric_name}`")));
                }
            }
            if obj.keys().any(|k| k != "value" && k != "metricName") {
                return Err(shape(R, "unexpected field"));
            }
            let value = obj
                .get("value")
                .and_then(Value::as_f64)
                .ok_or_else(|| shape(R, "`value` must be a number"))?;
            Ok(if comparator.holds(value, bound.value()) {
                Decision::Pass
            } else {
                Decision::Fail
            })
        }
        MeasurementProcedure::Rubric {
            criteria,
            scale_max,
            pass_mean,
            min_raters,
            ..
        } => {
            const R: &str = "rubric";
            let raters = raw
                .get("scores")
                .and_then(Value::as_object)
                .filter(|_| raw.as_object().is_some_and(|o| o.len() == 1))
                .ok_or_else(|| shape(R, "expected {\"scores\": {rater: {criterion: score}}}"))?;
            let mut scores = Vec::with_capacity(raters.len() * criteria.len());
            for (rater, sheet) in raters {
                let sheet = sheet
                    .as_object()
                    .ok_or_else(|| shape(R, format!("scores of {rater} must be an object")))?;
                if sheet.len() != criteria.len() || criteria.iter().any(|c| !sheet.contains_key(c)) {
                    return Err(shape(R, format!("{rater} must score exactly the rubric criteria")));
                }
                for (criterion, s) in sheet {
                    let s = s
                        .as_f64()
                        .filter(|s| (0.0..=f64::from(*scale_max)).contains(s))
                        .ok_or_else(|| {
                            shape(R, format!("{rater}/{criterion}: score must be in 0..={scale_max}"))
                        })?;
                    scores.push(s);
                }
            }
            if raters.len() < *min_raters as usize {
                return Ok(Decision::Inconclusive);
            }
            // Summing in sorted order keeps the mean independent of rater
            // and criterion order.
            scores.sort_by(f64::total_cmp);
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            Ok(if mean >= pass_mean.value() {
                Decision::Pass
            } else {
                Decision::Fail
            })
        }
        MeasurementProcedure::ExternalRecordOnly {} => {
            const R: &str = "externalRecordOnly";
            raw.get("attestation")
                .and_then(|a| a.get("decision"))
                .and_then(Value::as_str)
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| shape(R, "expected {\"attestation\": {\"decision\": ..}}"))
        }
    }
}

/// Artifact entry declaring `artifact@version`.
pub fn artifact_version<'a>(
    entries: &'a [EntryEnvelope],
    artifact: &LedgerId,
    version: &str,
) -> Option<&'a EntryEnvelope> {
    entries.iter().find(|e| {
        e.artifact()
            .is_some_and(|a| &a.artifact == artifact && a.version == version)
    })
}

/// Declaration rank of each version of `artifact`.
pub fn version_order(entries: &[EntryEnvelope], artifact: &LedgerId) -> HashMap<String, usize> {
    entries
        .iter()
        .filter_map(|e| e.artifact())
        .filter(|a| &a.artifact == artifact)
        .enumerate()
        .map(|(i, a)| (a.version.clone(), i))
        .collect()
}

/// Tests whose `targets` include `artifact`, in ledger order.
pub fn active_tests<'a>(
    entries: &'a [EntryEnvelope],
    artifact: &LedgerId,
) -> Vec<(&'a LedgerId, &'a TestPayload)> {
    entries
        .iter()
        .filter_map(|e| e.test().map(|t| (&e.id, t)))
        .filter(|(_, t)| t.targets.contains(artifact))
        .collect()
}

/// Everything needed to record one run.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub test_id: LedgerId,
    pub artifact_id: LedgerId,
    pub version: String,
    pub raw_results: Value,
    pub evaluator: ActorRef,
    pub checkpoint: Checkpoint,
    pub at: Timestamp,
    /// Run id; allocated from the test id when absent.
    pub id: Option<LedgerId>,
}

/// Builds (without appending) the run entry for `req`.
pub fn prepare_run(state: &LedgerState, req: RunRequest) -> Result<EntryEnvelope, HarnessError> {
    let entries = state.entries();
    let test = state
        .get(&req.test_id)
        .and_then(|e| e.test())
        .ok_or_else(|| HarnessError::UnknownTest(req.test_id.clone()))?;
    let target = artifact_version(entries, &req.artifact_id, &req.version).ok_or_else(|| {
        HarnessError::UnknownArtifactVersion {
            artifact: req.artifact_id.clone(),
            version: req.version.clone(),
        }
    })?;
    let decision = decide(&test.measurement, &req.raw_results)?;
    let reason = is_missing(&req.raw_results).then(|| MISSING_RESULTS.to_string());
    let id = req
        .id
        .unwrap_or_else(|| state.next_id(EntryType::EvaluationRun, req.test_id.group()));
    let links = LinkSet {
        uses_test: vec![req.test_id.clone()],
        evaluates: vec![target.id.clone()],
        ..LinkSet::default()
    };
    Ok(EntryEnvelope::new(
        id,
        req.at,
        req.evaluator.clone(),
        Payload::EvaluationRun(EvaluationRunPayload {
            harness_attested: test.measurement.harness_attested(),
            test_id: req.test_id,
            artifact_id: req.artifact_id,
            version: req.version,
            decision,
            raw_results: req.raw_results,
            evaluator: req.evaluator,
            checkpoint: req.checkpoint,
            timestamp: req.at,
            reason,
        }),
    )
    .with_links(links))
}

/// Judges `req` and appends the resulting run.
pub fn run_test<'l>(ledger: &'l mut Ledger, req: RunRequest) -> Result<&'l EntryEnvelope, HarnessError> {
    let entry = prepare_run(ledger.state(), req)?;
    let (_, e) = ledger.append(entry, None)?;
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SuiteVerdict {
    AllPass,
    AnyFail,
    AnyInconclusive,
}

impl SuiteVerdict {
    /// Any fail dominates; an empty suite passes.
    pub fn fold<I: IntoIterator<Item = Decision>>(decisions: I) -> SuiteVerdict {
        let mut v = SuiteVerdict::AllPass;
        for d in decisions {
            match d {
                Decision::Fail => return SuiteVerdict::AnyFail,
                Decision::Inconclusive => v = SuiteVerdict::AnyInconclusive,
                Decision::Pass => {}
            }
        }
        v
    }

    pub fn exit_code(self) -> i32 {
        match self {
            SuiteVerdict::AllPass => 0,
            SuiteVerdict::AnyFail => 1,
            SuiteVerdict::AnyInconclusive => 2,
        }
    }
}

impl fmt::Display for SuiteVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteVerdict::AllPass => "allPass",
            SuiteVerdict::AnyFail => "anyFail",
            SuiteVerdict::AnyInconclusive => "anyInconclusive",
        })
    }
}

/// Raw results keyed by test id.
#[derive(Debug, Clone, Default)]
pub struct ResultsBundle(pub BTreeMap<LedgerId, Value>);

impl ResultsBundle {
    /// Reads `<test-id-slug>.result` documents from a directory. Files
    /// that do not name a test id are ignored.
    pub fn from_dir(dir: &Path) -> Result<ResultsBundle, HarnessError> {
        let mut out = BTreeMap::new();
        let rd = fs::read_dir(dir).map_err(|e| HarnessError::Bundle(format!("{}: {e}", dir.display())))?;
        for item in rd {
            let path = item.map_err(|e| HarnessError::Bundle(e.to_string()))?.path();
            if path.extension().and_then(|x| x.to_str()) != Some("result") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let Ok(id) = LedgerId::parse(&stem.replace('_', ":")) else {
                continue;
            };
            let text = fs::read_to_string(&path)
                .map_err(|e| HarnessError::Bundle(format!("{}: {e}", path.display())))?;
            let doc = serde_json::from_str(&text)
                .map_err(|e| HarnessError::Bundle(format!("{}: {e}", path.display())))?;
            out.insert(id, doc);
        }
        Ok(ResultsBundle(out))
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SuiteOutcome {
    pub runs: Vec<LedgerId>,
    pub decisions: Vec<(LedgerId, Decision)>,
    pub verdict: SuiteVerdict,
}

/// Records one run per active test of `artifact`. Tests without results in
/// the bundle get an inconclusive run.
pub fn run_suite(
    ledger: &mut Ledger,
    checkpoint: Checkpoint,
    artifact: &LedgerId,
    version: &str,
    bundle: &ResultsBundle,
    evaluator: &ActorRef,
    at: Timestamp,
) -> Result<SuiteOutcome, HarnessError> {
    if artifact_version(ledger.entries(), artifact, version).is_none() {
        return Err(HarnessError::UnknownArtifactVersion {
            artifact: artifact.clone(),
            version: version.to_string(),
        });
    }
    let tests: Vec<LedgerId> = active_tests(ledger.entries(), artifact)
        .into_iter()
        .map(|(id, _)| id.clone())
        .collect();
    let mut outcome = SuiteOutcome {
        runs: Vec::new(),
        decisions: Vec::new(),
        verdict: SuiteVerdict::AllPass,
    };
    for test_id in tests {
        let raw = bundle.0.get(&test_id).cloned().unwrap_or_else(missing_results);
        let run = run_test(
            ledger,
            RunRequest {
                test_id: test_id.clone(),
                artifact_id: artifact.clone(),
                version: version.to_string(),
                raw_results: raw,
                evaluator: evaluator.clone(),
                checkpoint,
                at,
                id: None,
            },
        )?;
        let d = run.run().expect("run entry").decision;
        outcome.runs.push(run.id.clone());
        outcome.decisions.push((test_id, d));
    }
    outcome.verdict = SuiteVerdict::fold(outcome.decisions.iter().map(|(_, d)| *d));
    Ok(outcome)
}

/// Latest run per (test, artifact, version), in log order of first sight.
pub fn latest_runs(entries: &[EntryEnvelope]) -> BTreeMap<(LedgerId, LedgerId, String), &EntryEnvelope> {
    let mut out = BTreeMap::new();
    for e in entries {
        if let Some(r) = e.run() {
            out.insert((r.test_id.clone(), r.artifact_id.clone(), r.version.clone()), e);
        }
    }
    out
}

/// Pass-to-fail transitions between consecutive evaluated versions, per
/// test and artifact. Each version is represented by its latest run.
pub fn detect_regressions(entries: &[EntryEnvelope]) -> Vec<RegressionEvent> {
    let mut orders: HashMap<LedgerId, HashMap<String, usize>> = HashMap::new();
    let mut series: BTreeMap<(LedgerId, LedgerId), Vec<(usize, &EntryEnvelope)>> = BTreeMap::new();
    for ((test, artifact, version), run) in latest_runs(entries) {
        let order = orders
            .entry(artifact.clone())
            .or_insert_with(|| version_order(entries, &artifact));
        if let Some(rank) = order.get(&version) {
            series.entry((test, artifact)).or_default().push((*rank, run));
        }
    }
    let mut events = Vec::new();
    for ((test, artifact), mut runs) in series {
        runs.sort_by_key(|(rank, _)| *rank);
        for pair in runs.windows(2) {
            let (a, b) = (pair[0].1, pair[1].1);
            let (ra, rb) = (a.run().expect("run"), b.run().expect("run"));
            if ra.decision == Decision::Pass && rb.decision == Decision::Fail {
                events.push(RegressionEvent {
                    test_id: test.clone(),
                    artifact_id: artifact.clone(),
                    from_version: ra.version.clone(),
                    to_version: rb.version.clone(),
                    failing_run_id: b.id.clone(),
                    prior_passing_run_id: a.id.clone(),
                });
            }
        }
    }
    events
}

/// Draft of a test derived from an incident.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TestDraft {
    pub id: LedgerId,
    pub topic: String,
    pub input_spec: Value,
    pub expected_behavior: String,
    pub measurement: MeasurementProcedure,
    #[serde(default)]
    pub targets: Vec<LedgerId>,
}

/// Builds (without appending) the test entry triaged from an incident.
pub fn prepare_triage(
    state: &LedgerState,
    incident: &LedgerId,
    draft: TestDraft,
    actor: ActorRef,
    at: Timestamp,
) -> Result<EntryEnvelope, HarnessError> {
    let c = state
        .get(incident)
        .and_then(|e| e.contribution())
        .ok_or_else(|| HarnessError::UnknownContribution(incident.clone()))?;
    if c.kind != ContributionKind::IncidentReport {
        return Err(HarnessError::WrongKind {
            id: incident.clone(),
            found: c.kind.clone(),
        });
    }
    let mut entry = EntryEnvelope::new(
        draft.id,
        at,
        actor,
        Payload::Test(TestPayload {
            topic: draft.topic,
            input_spec: draft.input_spec,
            expected_behavior: draft.expected_behavior,
            measurement: draft.measurement,
            motivated_by: vec![incident.clone()],
            targets: draft.targets,
        }),
    );
    entry.links.evidence.push(incident.to_string());
    Ok(entry)
}

/// Turns an incident report into a test motivated by it.
pub fn triage_incident<'l>(
    ledger: &'l mut Ledger,
    incident: &LedgerId,
    draft: TestDraft,
    actor: ActorRef,
    at: Timestamp,
) -> Result<&'l EntryEnvelope, HarnessError> {
    let entry = prepare_triage(ledger.state(), incident, draft, actor, at)?;
    let (_, e) = ledger.append(entry, None)?;
    Ok(e)
}
