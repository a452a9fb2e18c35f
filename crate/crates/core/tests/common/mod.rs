#![allow(dead_code)]

use std::path::PathBuf;

use pledger::example::{self, Stage};
use pledger::harness::{EvaluationRunPayload, MeasurementProcedure, TestPayload};
use pledger::model::{
    parse_entry, ActorRef, ActorRole, ArtifactKind, ArtifactPayload, Comparator, Decimal, Decision, EntryEnvelope,
    LedgerId, Payload, Timestamp,
};
use pledger::store::Ledger;
use serde_json::json;

pub fn id(s: &str) -> LedgerId {
    LedgerId::parse(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// The worked example played up to `stage` in a fresh ledger file.
pub fn example_ledger(stage: Stage) -> (tempfile::TempDir, Ledger) {
    let dir = tempfile::tempdir().unwrap();
    let mut ledger = Ledger::open(dir.path().join("ledger.jsonl")).unwrap();
    example::build(&mut ledger, stage).unwrap();
    (dir, ledger)
}

pub fn example_entries(stage: Stage) -> Vec<EntryEnvelope> {
    example_ledger(stage).1.entries().to_vec()
}

/// Minute `n` after the example epoch.
pub fn minute(n: i64) -> Timestamp {
    example::day(0).plus_seconds(n * 60)
}

/// A contribution by `pseudonym`, modelled on the workshop entry.
pub fn contribution(id_: &str, pseudonym: &str, at: Timestamp) -> EntryEnvelope {
    let mut e = parse_entry(example::CONTRIBUTION_DOC).unwrap();
    e.id = id(id_);
    e.actor.pseudonym = Some(pseudonym.into());
    e.created_at = at;
    e.links = Default::default();
    e
}

/// Threshold test passing when the value is at least 0.5.
pub fn threshold_test(id_: &str, motivated_by: &[&str], target: &str, at: Timestamp) -> EntryEnvelope {
    EntryEnvelope::new(
        id(id_),
        at,
        ActorRef::pseudonymous(ActorRole::Maintainer, "maint"),
        Payload::Test(TestPayload {
            topic: "accessibility".into(),
            input_spec: json!({"promptSet": "artifact:prompt:sha256:00"}),
            expected_behavior: "value at least one half".into(),
            measurement: MeasurementProcedure::Threshold {
                metric_name: "score".into(),
                comparator: Comparator::AtLeast,
                bound: Decimal(0.5),
            },
            motivated_by: motivated_by.iter().map(|m| id(m)).collect(),
            targets: vec![id(target)],
        }),
    )
}

pub fn model_version(artifact: &str, version: &str, at: Timestamp) -> EntryEnvelope {
    EntryEnvelope::new(
        id(&format!("{artifact}:{version}")),
        at,
        ActorRef::pseudonymous(ActorRole::Maintainer, "maint"),
        Payload::Artifact(ArtifactPayload {
            artifact: id(artifact),
            artifact_kind: ArtifactKind::Model,
            version: version.into(),
            content_ref: format!("artifact:model:{version}"),
            boundary: None,
            capability: Some("cap".into()),
        }),
    )
}

/// Raw threshold result producing `d`.
pub fn raw_for(d: Decision) -> serde_json::Value {
    match d {
        Decision::Pass => json!({"value": 1.0}),
        Decision::Fail => json!({"value": 0.0}),
        Decision::Inconclusive => pledger::harness::missing_results(),
    }
}

pub fn run_decision(e: &EntryEnvelope) -> Option<(&EvaluationRunPayload, Decision)> {
    e.run().map(|r| (r, r.decision))
}

pub fn steward() -> ActorRef {
    ActorRef::pseudonymous(ActorRole::CommunitySteward, "steward")
}
