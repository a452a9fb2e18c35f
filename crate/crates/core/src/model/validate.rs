use std::fmt;

use serde::Serialize;

use super::{
    ActorRef, ActorRole, CompensationModel, EntryEnvelope, LedgerId, Payload, Retention,
};
use crate::canon::is_digest;
use crate::harness::MeasurementProcedure;

/// Identifiers of the structural rules checked by [`validate_structure`].
pub mod rules {
    pub const ID_KIND: &str = "id.kind";
    pub const ACTOR_IDENTITY: &str = "actor.identity";
    pub const CONSENT_REQUIRED: &str = "consent.required";
    pub const CONSENT_RETENTION: &str = "consent.retention";
    pub const COMPENSATION_REQUIRED: &str = "compensation.required";
    pub const COMPENSATION_AMOUNT: &str = "compensation.amount";
    pub const COMPENSATION_CURRENCY: &str = "compensation.currency";
    pub const ARTIFACT_REF: &str = "contribution.artifactRef";
    pub const METADATA_SENSITIVE: &str = "contribution.metadata.sensitive";
    pub const METADATA_CONSENT: &str = "contribution.metadata.consent";
    pub const CONTENT_REF: &str = "artifact.contentRef";
    pub const DEPLOYMENT_BOUNDARY: &str = "artifact.deployment.boundary";
    pub const MEASUREMENT: &str = "test.measurement";
    pub const RUN_LINKS: &str = "run.links";
    pub const VOUCHER_STEWARD: &str = "voucher.steward";
    pub const CREDIT_UNITS: &str = "credit.units";
    pub const CREDIT_TRIGGER: &str = "credit.trigger";
    pub const CREDIT_POLICY_REF: &str = "credit.policyRef";
    pub const TOMBSTONE_ROLE: &str = "tombstone.authorization";
    pub const TOMBSTONE_HASH: &str = "tombstone.retainedHash";
    pub const INTEGRITY_FORMAT: &str = "integrity.format";
    pub const EVIDENCE_REF: &str = "links.evidence";
    pub const EXTENSION_NAME: &str = "extensions.name";
}

/// Scope tag that must accompany any representational metadata.
pub const IDENTITY_MARKERS_TAG: &str = "identity-markers";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.path, self.rule, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, rule: &'static str, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            rule,
            message: message.into(),
        });
    }

    pub fn rules(&self) -> Vec<&'static str> {
        self.violations.iter().map(|v| v.rule).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// `artifact:<kind>:sha256:<64 hex>` or any absolute URI.
pub fn is_content_reference(s: &str) -> bool {
    if let Some(rest) = s.strip_prefix("artifact:") {
        if let Some((kind, digest)) = rest.split_once(':') {
            if !kind.is_empty() && is_digest(digest) {
                return true;
            }
        }
    }
    is_absolute_uri(s)
}

pub fn is_absolute_uri(s: &str) -> bool {
    !s.chars().any(char::is_whitespace) && url::Url::parse(s).is_ok()
}

fn check_actor(report: &mut ValidationReport, path: &str, actor: &ActorRef) {
    let pseudonym_ok = actor.pseudonym.as_deref().is_some_and(|p| !p.trim().is_empty());
    if !pseudonym_ok && actor.steward_org.is_none() {
        report.push(
            format!("{path}.pseudonym"),
            rules::ACTOR_IDENTITY,
            "actor needs a pseudonym or a steward organisation",
        );
    }
}

fn valid_currency(c: &str) -> bool {
    c.len() == 3 && c.bytes().all(|b| b.is_ascii_uppercase())
}

/// Checks every structural invariant of a single envelope. Pure: the same
/// envelope always yields the same report.
pub fn validate_structure(entry: &EntryEnvelope) -> ValidationReport {
    let mut r = ValidationReport::default();
    let ty = entry.entry_type();

    if entry.id.entry_type() != Some(ty) {
        r.push("id", rules::ID_KIND, format!("id kind does not route to {ty}"));
    }
    check_actor(&mut r, "actor", &entry.actor);

    for name in entry.extensions.keys() {
        if super::document::is_known_field(name) || name == super::document::PREV_FIELD {
            r.push(
                format!("extensions.{name}"),
                rules::EXTENSION_NAME,
                "extension uses a reserved field name",
            );
        }
    }

    if let Some(c) = &entry.consent {
        if let Some(ret) = &c.retention {
            if Retention::parse(ret).is_none() {
                r.push(
                    "consent.retention",
                    rules::CONSENT_RETENTION,
                    format!("`{ret}` is not a positive <n>y|<n>m|<n>d duration"),
                );
            }
        }
    }
    if let Some(c) = &entry.compensation {
        if let Some(a) = c.amount {
            if !a.is_finite() || a.value() < 0.0 {
                r.push("compensation.amount", rules::COMPENSATION_AMOUNT, "amount must be a nonnegative number");
            }
        }
        if matches!(c.model, CompensationModel::Honorarium | CompensationModel::Hourly) {
            if !c.amount.is_some_and(|a| a.value() > 0.0) {
                r.push(
                    "compensation.amount",
                    rules::COMPENSATION_AMOUNT,
                    format!("{} requires amount > 0", c.model),
                );
            }
            if c.currency.is_none() {
                r.push(
                    "compensation.currency",
                    rules::COMPENSATION_CURRENCY,
                    format!("{} requires a currency", c.model),
                );
            }
        }
        if let Some(cur) = &c.currency {
            if !valid_currency(cur) {
                r.push(
                    "compensation.currency",
                    rules::COMPENSATION_CURRENCY,
                    format!("`{cur}` is not an ISO-4217 code"),
                );
            }
        }
    }

    for (i, ev) in entry.links.evidence.iter().enumerate() {
        if LedgerId::parse(ev).is_err() && !is_absolute_uri(ev) {
            r.push(
                format!("links.evidence[{i}]"),
                rules::EVIDENCE_REF,
                "evidence must be a ledger id or an absolute URI",
            );
        }
    }

    if let Some(integrity) = &entry.integrity {
        if !is_digest(&integrity.hash) {
            r.push("integrity.hash", rules::INTEGRITY_FORMAT, "expected sha256:<64 lowercase hex>");
        }
        if let Some(prev) = &integrity.prev_hash {
            if !is_digest(prev) {
                r.push("integrity.prevHash", rules::INTEGRITY_FORMAT, "expected sha256:<64 lowercase hex>");
            }
        }
    }

    match &entry.payload {
        Payload::Contribution(p) => {
            if entry.consent.is_none() {
                r.push("consent", rules::CONSENT_REQUIRED, "contributions require a consent block");
            }
            if entry.compensation.is_none() {
                r.push(
                    "compensation",
                    rules::COMPENSATION_REQUIRED,
                    "contributions require a compensation block",
                );
            }
            if !is_content_reference(&p.artifact_ref) {
                r.push(
                    "contribution.artifactRef",
                    rules::ARTIFACT_REF,
                    "expected a content hash reference or an absolute URI",
                );
            }
            if let Some(meta) = &p.representational_metadata {
                if !meta.sensitive {
                    r.push(
                        "contribution.representationalMetadata.sensitive",
                        rules::METADATA_SENSITIVE,
                        "representational metadata is always sensitive",
                    );
                }
                let consented = entry
                    .consent
                    .as_ref()
                    .is_some_and(|c| c.scope_tags().any(|t| t == IDENTITY_MARKERS_TAG));
                if !consented {
                    r.push(
                        "contribution.representationalMetadata",
                        rules::METADATA_CONSENT,
                        format!("consent scope must include `{IDENTITY_MARKERS_TAG}`"),
                    );
                }
            }
        }
        Payload::Change(_) => {}
        Payload::Artifact(p) => {
            if !is_content_reference(&p.content_ref) {
                r.push(
                    "artifact.contentRef",
                    rules::CONTENT_REF,
                    "expected a content hash reference or an absolute URI",
                );
            }
            if p.artifact_kind.is_deployment() && p.boundary.as_deref().is_none_or(str::is_empty) {
                r.push(
                    "artifact.boundary",
                    rules::DEPLOYMENT_BOUNDARY,
                    "deployments must name their boundary",
                );
            }
        }
        Payload::Test(t) => match &t.measurement {
            MeasurementProcedure::Threshold { bound, .. } => {
                if !bound.is_finite() {
                    r.push("test.measurement.bound", rules::MEASUREMENT, "threshold bound must be finite");
                }
            }
            MeasurementProcedure::Rubric {
                criteria,
                scale_max,
                pass_mean,
                min_raters,
                ..
            } => {
                if criteria.is_empty() {
                    r.push("test.measurement.criteria", rules::MEASUREMENT, "rubric needs at least one criterion");
                }
                if *scale_max == 0 {
                    r.push("test.measurement.scaleMax", rules::MEASUREMENT, "scaleMax must be positive");
                }
                if *min_raters == 0 {
                    r.push("test.measurement.minRaters", rules::MEASUREMENT, "minRaters must be positive");
                }
                if !pass_mean.is_finite() || pass_mean.value() > f64::from(*scale_max) {
                    r.push("test.measurement.passMean", rules::MEASUREMENT, "passMean must not exceed scaleMax");
                }
            }
            MeasurementProcedure::ExternalRecordOnly {} => {}
        },
        Payload::EvaluationRun(run) => {
            if !entry.links.uses_test.contains(&run.test_id) {
                r.push(
                    "links.usesTest",
                    rules::RUN_LINKS,
                    format!("run must link usesTest {}", run.test_id),
                );
            }
            if entry.links.evaluates.is_empty() {
                r.push("links.evaluates", rules::RUN_LINKS, "run must link the evaluated artifact version");
            }
            check_actor(&mut r, "evaluationRun.evaluator", &run.evaluator);
        }
        Payload::Voucher(v) => {
            if v.steward.role != ActorRole::CommunitySteward {
                r.push("voucher.steward.role", rules::VOUCHER_STEWARD, "vouchers are issued by a community steward");
            }
            check_actor(&mut r, "voucher.steward", &v.steward);
        }
        Payload::Credit(c) => {
            if !c.units.is_finite() || c.units.value() < 0.0 {
                r.push("credit.units", rules::CREDIT_UNITS, "units must be a nonnegative number");
            }
            match c.triggering_event.trigger_id() {
                Some(t) if entry.links.credits_for.contains(t) => {}
                Some(t) => r.push(
                    "links.creditsFor",
                    rules::CREDIT_TRIGGER,
                    format!("creditsFor must reference the triggering entry {t}"),
                ),
                None => r.push(
                    "credit.triggeringEvent",
                    rules::CREDIT_TRIGGER,
                    "exactly one of evaluationRunId or changeId is required",
                ),
            }
            if !is_digest(&c.policy_ref) {
                r.push("credit.policyRef", rules::CREDIT_POLICY_REF, "policyRef must be a sha256 digest");
            }
        }
        Payload::Tombstone(t) => {
            if !matches!(t.authorization.role, ActorRole::CommunitySteward | ActorRole::Auditor) {
                r.push(
                    "tombstone.authorization.role",
                    rules::TOMBSTONE_ROLE,
                    "redaction requires a community steward or auditor",
                );
            }
            if !is_digest(&t.retained_hash) {
                r.push("tombstone.retainedHash", rules::TOMBSTONE_HASH, "retainedHash must be a sha256 digest");
            }
        }
    }
    r
}
