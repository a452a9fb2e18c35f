//! The worked example: an accessibility concern raised in a design
//! workshop becomes a test that catches a regression in a text-to-image
//! model, pauses the capability, and earns the contributor a credit once
//! remediated.

use serde_json::{json, Value};

use crate::governance::{
    accrue_credits, issue_voucher, transition_voucher, AccrualReport, CreditPolicy, GovernanceError,
    UnitsPerEvent, VoucherCondition, VoucherPayload, Window,
};
use crate::harness::{run_test, Aggregation, HarnessError, MeasurementProcedure, RunRequest, TestPayload};
use crate::model::{
    parse_entry, ActorRef, ActorRole, ArtifactKind, ArtifactPayload, ChangeKind, ChangePayload,
    ChangedArtifact, Checkpoint, Decimal, EntryEnvelope, LedgerId, LinkSet, ParseError, Payload,
    Timestamp, VoucherAction, VoucherStatus,
};
use crate::store::{AppendError, Ledger, StoreError};

/// The workshop contribution, as recorded by the consultation.
pub const CONTRIBUTION_DOC: &str = include_str!("../tests/fixtures/reference_entry.json");

pub const CONTRIBUTION: &str = "pl:contrib:wedesign:prompt:001";
pub const TEST: &str = "pl:test:accessibility:001";
pub const MODEL: &str = "pl:artifact:t2i";
pub const DEPLOYMENT: &str = "pl:artifact:deployment:consultation-workflow";
pub const CHANGE: &str = "pl:change:t2i:accessibility-prompts";
pub const REMEDIATION: &str = "pl:change:t2i:path-continuity-fix";
pub const PAUSE_VOUCHER: &str = "pl:voucher:wedesign:pause-t2i";
pub const CONDITION_VOUCHER: &str = "pl:voucher:wedesign:require-accessibility";
pub const RUN_V1: &str = "pl:run:accessibility:0001";
pub const RUN_V2: &str = "pl:run:accessibility:0002";
pub const RUN_V3: &str = "pl:run:accessibility:0003";
pub const CAPABILITY: &str = "image-generation";
pub const BOUNDARY: &str = "consultation_workflow";
pub const STEWARD_ORG: &str = "pl:org:wedesign-stewards";

/// How far to play the lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// v2 has failed and the pause voucher is active.
    Paused,
    /// Remediated and re-evaluated; the pause is satisfied, a standing
    /// condition voucher requires the test to pass, and credit is accrued.
    Complete,
}

#[derive(Debug, thiserror::Error)]
pub enum ExampleError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Append(#[from] AppendError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
}

fn id(s: &str) -> LedgerId {
    LedgerId::parse(s).expect("example ids are well formed")
}

/// Day `n` of the example timeline, 09:00 UTC.
pub fn day(n: i64) -> Timestamp {
    Timestamp::parse("2025-05-11T09:00:00Z")
        .expect("valid")
        .plus_seconds(n * 86_400)
}

pub fn maintainer() -> ActorRef {
    ActorRef::pseudonymous(ActorRole::Maintainer, "maint-07")
}

pub fn evaluator() -> ActorRef {
    ActorRef::pseudonymous(ActorRole::Evaluator, "eval-panel-2")
}

pub fn steward() -> ActorRef {
    ActorRef {
        role: ActorRole::CommunitySteward,
        pseudonym: Some("steward-3".into()),
        steward_org: Some(id(STEWARD_ORG)),
    }
}

/// Policy of the example: 10 units per detected regression, capped at 100
/// per beneficiary per 30 days, with the quality gate on.
pub fn credit_policy() -> CreditPolicy {
    CreditPolicy {
        units_per_event: UnitsPerEvent {
            regression_detected: Decimal(10.0),
            ..UnitsPerEvent::default()
        },
        cap_per_beneficiary_per_period: Decimal(100.0),
        period_days: 30,
        quality_gate: true,
        persistence_gate_releases: 0,
    }
}

pub fn measurement() -> MeasurementProcedure {
    MeasurementProcedure::Rubric {
        criteria: vec!["continuousAccessiblePath".into(), "diverseSeating".into()],
        scale_max: 5,
        aggregation: Aggregation::Mean,
        pass_mean: Decimal(4.0),
        min_raters: 3,
    }
}

/// Rubric scores from three raters, all criteria at `path` except seating
/// at 4.
pub fn scores(path: [u32; 3]) -> Value {
    json!({"scores": {
        "rater-a": {"continuousAccessiblePath": path[0], "diverseSeating": 4},
        "rater-b": {"continuousAccessiblePath": path[1], "diverseSeating": 4},
        "rater-c": {"continuousAccessiblePath": path[2], "diverseSeating": 4},
    }})
}

fn model_version(version: &str, hex: char) -> EntryEnvelope {
    EntryEnvelope::new(
        id(&format!("{MODEL}:{version}")),
        day(0),
        maintainer(),
        Payload::Artifact(ArtifactPayload {
            artifact: id(MODEL),
            artifact_kind: ArtifactKind::Model,
            version: version.into(),
            content_ref: format!("artifact:model:sha256:{}", hex.to_string().repeat(64)),
            boundary: None,
            capability: Some(CAPABILITY.into()),
        }),
    )
    .with_links(LinkSet {
        deployed_as: vec![id(DEPLOYMENT)],
        ..LinkSet::default()
    })
}

fn at(mut e: EntryEnvelope, t: Timestamp) -> EntryEnvelope {
    e.created_at = t;
    e
}

fn run(ledger: &mut Ledger, version: &str, raw: Value, checkpoint: Checkpoint, t: Timestamp) -> Result<(), HarnessError> {
    run_test(
        ledger,
        RunRequest {
            test_id: id(TEST),
            artifact_id: id(MODEL),
            version: version.into(),
            raw_results: raw,
            evaluator: evaluator(),
            checkpoint,
            at: t,
            id: None,
        },
    )?;
    Ok(())
}

/// Plays the lifecycle into `ledger` (expected empty) up to `stage`.
/// Returns the accrual report when the credit step ran.
pub fn build(ledger: &mut Ledger, stage: Stage) -> Result<Option<AccrualReport>, ExampleError> {
    let contribution = parse_entry(CONTRIBUTION_DOC)?;
    ledger.append(contribution, None)?;

    let test = EntryEnvelope::new(
        id(TEST),
        day(0),
        maintainer(),
        Payload::Test(TestPayload {
            topic: "accessibility".into(),
            input_spec: json!({
                "promptSet": "artifact:prompt:sha256:2f1c6b0e9d8a7c5b4a3f2e1d0c9b8a7f6e5d4c3b2a1f0e9d8c7b6a5f4e3d2c1b",
                "samplesPerPrompt": 4,
            }),
            expected_behavior: "Generated park scenes show a continuous wheelchair-accessible path and varied seating."
                .into(),
            measurement: measurement(),
            motivated_by: vec![id(CONTRIBUTION)],
            targets: vec![id(MODEL)],
        }),
    );
    ledger.append(at(test, day(0)), None)?;

    let deployment = EntryEnvelope::new(
        id(DEPLOYMENT),
        day(1),
        ActorRef::pseudonymous(ActorRole::Deployer, "city-ops-1"),
        Payload::Artifact(ArtifactPayload {
            artifact: id("pl:artifact:deployment"),
            artifact_kind: ArtifactKind::deployment(),
            version: "consultation-workflow".into(),
            content_ref: "https://city.example.org/deployments/consultation-workflow".into(),
            boundary: Some(BOUNDARY.into()),
            capability: Some(CAPABILITY.into()),
        }),
    );
    ledger.append(deployment, None)?;
    ledger.append(at(model_version("v1", 'a'), day(1)), None)?;

    let change = EntryEnvelope::new(
        id(CHANGE),
        day(2),
        maintainer(),
        Payload::Change(ChangePayload {
            changed_artifacts: vec![ChangedArtifact {
                artifact: id(MODEL),
                version_before: None,
                version_after: "v1".into(),
            }],
            change_kind: ChangeKind::PromptLibrary,
            rationale: "Add workshop accessibility prompts to the evaluation prompt library.".into(),
        }),
    )
    .with_links(LinkSet {
        influenced_by: vec![id(CONTRIBUTION)],
        uses_test: vec![id(TEST)],
        ..LinkSet::default()
    });
    ledger.append(change, None)?;
    run(ledger, "v1", scores([5, 4, 4]), Checkpoint::PreDeploymentGate, day(3))?;

    ledger.append(at(model_version("v2", 'b'), day(20)), None)?;
    run(ledger, "v2", scores([2, 3, 2]), Checkpoint::PreDeploymentGate, day(21))?;

    issue_voucher(
        ledger,
        id(PAUSE_VOUCHER),
        VoucherPayload {
            capability: CAPABILITY.into(),
            boundary: BOUNDARY.into(),
            action: VoucherAction::Pause,
            conditions: Vec::new(),
            steward: steward(),
            status: VoucherStatus::Issued,
            expiry: None,
        },
        day(22),
        None,
    )?;
    transition_voucher(ledger, &id(PAUSE_VOUCHER), VoucherStatus::Active, day(22), None)?;
    if stage == Stage::Paused {
        return Ok(None);
    }

    let remediation = EntryEnvelope::new(
        id(REMEDIATION),
        day(25),
        maintainer(),
        Payload::Change(ChangePayload {
            changed_artifacts: vec![ChangedArtifact {
                artifact: id(MODEL),
                version_before: Some("v2".into()),
                version_after: "v3".into(),
            }],
            change_kind: ChangeKind::Guardrail,
            rationale: "Restore path continuity conditioning lost in the v2 update.".into(),
        }),
    )
    .with_links(LinkSet {
        influenced_by: vec![id(CONTRIBUTION)],
        uses_test: vec![id(TEST)],
        remediates: vec![id(RUN_V2)],
        ..LinkSet::default()
    });
    // The remediated version is declared before the change that produces it.
    ledger.append(at(model_version("v3", 'c'), day(25)), None)?;
    ledger.append(remediation, None)?;
    run(ledger, "v3", scores([5, 5, 4]), Checkpoint::PostIncident, day(26))?;
    transition_voucher(ledger, &id(PAUSE_VOUCHER), VoucherStatus::Satisfied, day(27), None)?;

    issue_voucher(
        ledger,
        id(CONDITION_VOUCHER),
        VoucherPayload {
            capability: CAPABILITY.into(),
            boundary: BOUNDARY.into(),
            action: VoucherAction::Condition,
            conditions: vec![VoucherCondition {
                required_test_id: id(TEST),
                must_pass_on_version: None,
                scope_constraints: vec!["human-review-of-published-images".into()],
                human_in_loop: true,
            }],
            steward: steward(),
            status: VoucherStatus::Issued,
            expiry: None,
        },
        day(28),
        None,
    )?;
    transition_voucher(ledger, &id(CONDITION_VOUCHER), VoucherStatus::Active, day(28), None)?;

    let report = accrue_credits(ledger, &credit_policy(), Window::all(), &steward(), day(30), None)?;
    Ok(Some(report))
}
