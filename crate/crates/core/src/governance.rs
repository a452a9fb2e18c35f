//! Capability vouchers, boundary-scoped gate checks and participation
//! credits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canon::{compute_hash, render, CanonError};
use crate::harness::{detect_regressions, latest_runs, SuiteVerdict};
use crate::integrity::Signer;
use crate::model::{
    ActorRef, ActorRole, Checkpoint, ContributionKind, CreditEventKind, Decimal, Decision,
    EntryEnvelope, EntryType, LedgerId, LinkSet, Payload, Timestamp, VoucherAction, VoucherStatus,
};
use crate::store::{AppendError, Ledger, LedgerState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct VoucherCondition {
    pub required_test_id: LedgerId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub must_pass_on_version: Option<String>,
    /// Recorded verbatim; enforcement happens outside the ledger.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scope_constraints: Vec<String>,
    #[serde(default)]
    pub human_in_loop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct VoucherPayload {
    pub capability: String,
    pub boundary: String,
    pub action: VoucherAction,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<VoucherCondition>,
    pub steward: ActorRef,
    pub status: VoucherStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TriggeringEvent {
    pub kind: CreditEventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation_run_id: Option<LedgerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_id: Option<LedgerId>,
}

impl TriggeringEvent {
    /// The triggering run or change, when exactly one is given.
    pub fn trigger_id(&self) -> Option<&LedgerId> {
        match (&self.evaluation_run_id, &self.change_id) {
            (Some(r), None) => Some(r),
            (None, Some(c)) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreditPayload {
    /// Pseudonym or steward organisation id.
    pub beneficiary: String,
    pub triggering_event: TriggeringEvent,
    pub units: Decimal,
    /// Digest of the canonical credit policy document.
    pub policy_ref: String,
}

#[derive(Debug, thiserror::Error)]
pub enum GovernanceError {
    #[error("role {0} may not issue vouchers")]
    UnauthorizedRole(ActorRole),
    #[error("unknown test {0}")]
    UnknownTest(LedgerId),
    #[error("unknown voucher {0}")]
    UnknownVoucher(LedgerId),
    #[error("illegal voucher transition {from} -> {to} for {lineage}")]
    IllegalTransition {
        lineage: LedgerId,
        from: VoucherStatus,
        to: VoucherStatus,
    },
    #[error("invalid credit policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Append(AppendError),
}

impl From<AppendError> for GovernanceError {
    fn from(e: AppendError) -> Self {
        match e {
            AppendError::IllegalTransition { lineage, from, to } => {
                GovernanceError::IllegalTransition { lineage, from, to }
            }
            other => GovernanceError::Append(other),
        }
    }
}

/// Builds (without appending) a new voucher in status `issued`.
pub fn prepare_voucher(
    state: &LedgerState,
    id: LedgerId,
    payload: VoucherPayload,
    at: Timestamp,
) -> Result<EntryEnvelope, GovernanceError> {
    if payload.steward.role != ActorRole::CommunitySteward {
        return Err(GovernanceError::UnauthorizedRole(payload.steward.role.clone()));
    }
    if payload.status != VoucherStatus::Issued {
        return Err(GovernanceError::IllegalTransition {
            lineage: id.lineage(),
            from: VoucherStatus::Issued,
            to: payload.status,
        });
    }
    for c in &payload.conditions {
        if state.get(&c.required_test_id).and_then(|e| e.test()).is_none() {
            return Err(GovernanceError::UnknownTest(c.required_test_id.clone()));
        }
    }
    let links = LinkSet {
        uses_test: payload.conditions.iter().map(|c| c.required_test_id.clone()).collect(),
        ..LinkSet::default()
    };
    Ok(EntryEnvelope::new(id, at, payload.steward.clone(), Payload::Voucher(payload)).with_links(links))
}

pub fn issue_voucher<'l>(
    ledger: &'l mut Ledger,
    id: LedgerId,
    payload: VoucherPayload,
    at: Timestamp,
    signer: Option<&dyn Signer>,
) -> Result<&'l EntryEnvelope, GovernanceError> {
    let entry = prepare_voucher(ledger.state(), id, payload, at)?;
    Ok(ledger.append(entry, signer)?.1)
}

/// Builds the next revision of a voucher lineage with status `to`.
pub fn prepare_transition(
    state: &LedgerState,
    lineage: &LedgerId,
    to: VoucherStatus,
    at: Timestamp,
) -> Result<EntryEnvelope, GovernanceError> {
    let lineage = lineage.lineage();
    let head = state
        .voucher_head(&lineage)
        .ok_or_else(|| GovernanceError::UnknownVoucher(lineage.clone()))?;
    let prev = head.voucher().expect("voucher head");
    if !prev.status.can_transition_to(to) {
        return Err(GovernanceError::IllegalTransition {
            lineage,
            from: prev.status,
            to,
        });
    }
    let k = head.id.revision().unwrap_or(0) + 1;
    let mut payload = prev.clone();
    payload.status = to;
    let links = head.links.clone();
    Ok(EntryEnvelope::new(lineage.with_revision(k), at, payload.steward.clone(), Payload::Voucher(payload))
        .with_links(links))
}

pub fn transition_voucher<'l>(
    ledger: &'l mut Ledger,
    lineage: &LedgerId,
    to: VoucherStatus,
    at: Timestamp,
    signer: Option<&dyn Signer>,
) -> Result<&'l EntryEnvelope, GovernanceError> {
    let entry = prepare_transition(ledger.state(), lineage, to, at)?;
    Ok(ledger.append(entry, signer)?.1)
}

/// Current revision of every voucher lineage, in order of first issue.
pub fn voucher_heads(entries: &[EntryEnvelope]) -> Vec<&EntryEnvelope> {
    let mut order: Vec<LedgerId> = Vec::new();
    let mut heads: BTreeMap<LedgerId, &EntryEnvelope> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.voucher().is_some()) {
        let lineage = e.id.lineage();
        let newer = heads
            .get(&lineage)
            .is_none_or(|h| e.id.revision().unwrap_or(0) >= h.id.revision().unwrap_or(0));
        if !heads.contains_key(&lineage) {
            order.push(lineage.clone());
        }
        if newer {
            heads.insert(lineage, e);
        }
    }
    order.iter().map(|l| heads[l]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GateReasonKind {
    #[serde(rename = "pausedByVoucher")]
    PausedByVoucher,
    #[serde(rename = "conditionUnmet")]
    ConditionUnmet,
    #[serde(rename = "inconclusiveTest")]
    InconclusiveTest,
    #[serde(rename = "noApplicableVoucher-defaultAllow")]
    DefaultAllow,
}

impl fmt::Display for GateReasonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateReasonKind::PausedByVoucher => "pausedByVoucher",
            GateReasonKind::ConditionUnmet => "conditionUnmet",
            GateReasonKind::InconclusiveTest => "inconclusiveTest",
            GateReasonKind::DefaultAllow => "noApplicableVoucher-defaultAllow",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GateReason {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voucher_id: Option<LedgerId>,
    pub reason_kind: GateReasonKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_id: Option<LedgerId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GateDecision {
    pub allowed: bool,
    pub reasons: Vec<GateReason>,
    /// Active vouchers past their expiry, which were not applied.
    pub expired_ignored: Vec<LedgerId>,
    pub evaluated_at: Timestamp,
}

impl GateDecision {
    pub fn exit_code(&self) -> i32 {
        if self.allowed {
            0
        } else {
            3
        }
    }
}

/// Decides whether `capability` may run on `artifact@version` inside
/// `boundary` at time `now`. Pure over the given snapshot.
pub fn gate_check(
    entries: &[EntryEnvelope],
    capability: &str,
    artifact: &LedgerId,
    version: &str,
    boundary: &str,
    now: Timestamp,
) -> GateDecision {
    let runs = latest_runs(entries);
    let mut d = GateDecision {
        allowed: true,
        reasons: Vec::new(),
        expired_ignored: Vec::new(),
        evaluated_at: now,
    };
    let mut applicable = 0;
    for head in voucher_heads(entries) {
        let v = head.voucher().expect("voucher");
        if v.capability != capability || v.boundary != boundary || v.status != VoucherStatus::Active {
            continue;
        }
        if v.expiry.is_some_and(|x| now > x) {
            d.expired_ignored.push(head.id.clone());
            continue;
        }
        applicable += 1;
        match v.action {
            VoucherAction::Pause => d.reasons.push(GateReason {
                voucher_id: Some(head.id.clone()),
                reason_kind: GateReasonKind::PausedByVoucher,
                test_id: None,
            }),
            VoucherAction::Condition => {
                for c in &v.conditions {
                    let on = c.must_pass_on_version.as_deref().unwrap_or(version);
                    let key = (c.required_test_id.clone(), artifact.clone(), on.to_string());
                    let kind = match runs.get(&key).and_then(|r| r.run()).map(|r| r.decision) {
                        Some(Decision::Pass) => continue,
                        Some(Decision::Inconclusive) => GateReasonKind::InconclusiveTest,
                        Some(Decision::Fail) | None => GateReasonKind::ConditionUnmet,
                    };
                    d.reasons.push(GateReason {
                        voucher_id: Some(head.id.clone()),
                        reason_kind: kind,
                        test_id: Some(c.required_test_id.clone()),
                    });
                }
            }
            VoucherAction::Authorize => {}
        }
    }
    d.allowed = d.reasons.is_empty();
    if applicable == 0 {
        d.reasons.push(GateReason {
            voucher_id: None,
            reason_kind: GateReasonKind::DefaultAllow,
            test_id: None,
        });
    }
    d
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct UnitsPerEvent {
    #[serde(default)]
    pub regression_detected: Decimal,
    #[serde(default)]
    pub remediation_completed: Decimal,
    #[serde(default)]
    pub scheduled_run_dependency: Decimal,
}

impl UnitsPerEvent {
    pub fn get(&self, kind: CreditEventKind) -> Decimal {
        match kind {
            CreditEventKind::RegressionDetected => self.regression_detected,
            CreditEventKind::RemediationCompleted => self.remediation_completed,
            CreditEventKind::ScheduledRunDependency => self.scheduled_run_dependency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreditPolicy {
    pub units_per_event: UnitsPerEvent,
    pub cap_per_beneficiary_per_period: Decimal,
    pub period_days: u32,
    /// Count an event only if its test flips the suite verdict.
    pub quality_gate: bool,
    /// Minimum number of evaluated releases a test must appear in.
    pub persistence_gate_releases: u32,
}

impl CreditPolicy {
    pub fn validate(&self) -> Result<(), GovernanceError> {
        let bad = |m: &str| Err(GovernanceError::InvalidPolicy(m.to_string()));
        let units = CreditEventKind::ALL.iter().map(|k| self.units_per_event.get(*k));
        let mut largest = 0.0f64;
        for u in units {
            if !u.is_finite() || u.value() < 0.0 {
                return bad("units must be nonnegative");
            }
            largest = largest.max(u.value());
        }
        let cap = self.cap_per_beneficiary_per_period;
        if !cap.is_finite() || cap.value() < largest {
            return bad("cap must be at least the largest single event unit");
        }
        if self.period_days == 0 {
            return bad("periodDays must be positive");
        }
        Ok(())
    }

    /// Digest of the canonical policy document, cited by every credit.
    pub fn policy_ref(&self) -> Result<String, CanonError> {
        let v = serde_json::to_value(self).expect("policy serializes");
        Ok(compute_hash(&render(&v)?))
    }

    fn period_of(&self, t: Timestamp) -> i64 {
        t.unix().div_euclid(i64::from(self.period_days) * 86_400)
    }
}

/// Half-open time window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn all() -> Window {
        Window {
            start: Timestamp::from_unix(0),
            end: Timestamp::from_unix(253_402_300_799),
        }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SuppressionReason {
    CapReached,
    QualityGate,
    PersistenceGate,
    AlreadyCredited,
    NoBeneficiary,
}

impl fmt::Display for SuppressionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuppressionReason::CapReached => "capReached",
            SuppressionReason::QualityGate => "qualityGate",
            SuppressionReason::PersistenceGate => "persistenceGate",
            SuppressionReason::AlreadyCredited => "alreadyCredited",
            SuppressionReason::NoBeneficiary => "noBeneficiary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SuppressedEvent {
    pub kind: CreditEventKind,
    pub trigger_id: LedgerId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beneficiary: Option<String>,
    pub reason: SuppressionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AccrualReport {
    pub policy_ref: String,
    pub credited: Vec<LedgerId>,
    pub units: Decimal,
    pub suppressed: Vec<SuppressedEvent>,
}

#[derive(Debug, Clone)]
pub struct CreditPlan {
    pub entries: Vec<EntryEnvelope>,
    pub report: AccrualReport,
}

/// A measurable event that may earn credit.
#[derive(Debug, Clone)]
struct CreditEvent {
    kind: CreditEventKind,
    trigger: LedgerId,
    at: Timestamp,
    beneficiaries: Vec<String>,
    /// Test whose contribution is being credited (run-triggered events).
    test: Option<LedgerId>,
    /// Where the test's effect on the suite is judged.
    release: Option<(LedgerId, String)>,
}

fn beneficiaries_of(state: &LedgerState, contributions: &[LedgerId]) -> Vec<String> {
    let set: BTreeSet<String> = contributions
        .iter()
        .filter_map(|c| state.get(c))
        .filter(|e| e.contribution().is_some())
        .filter_map(|e| e.actor.beneficiary())
        .collect();
    set.into_iter().collect()
}

fn collect_events(state: &LedgerState) -> Vec<CreditEvent> {
    let entries = state.entries();
    let motivated = |test: &LedgerId| -> Vec<LedgerId> {
        state
            .get(test)
            .and_then(|e| e.test())
            .map(|t| t.motivated_by.clone())
            .unwrap_or_default()
    };
    let mut out = Vec::new();
    for r in detect_regressions(entries) {
        let Some(run) = state.get(&r.failing_run_id) else { continue };
        out.push(CreditEvent {
            kind: CreditEventKind::RegressionDetected,
            trigger: r.failing_run_id.clone(),
            at: run.created_at,
            beneficiaries: beneficiaries_of(state, &motivated(&r.test_id)),
            test: Some(r.test_id.clone()),
            release: Some((r.artifact_id.clone(), r.to_version.clone())),
        });
    }
    for e in entries {
        if let Some(r) = e.run() {
            let m = motivated(&r.test_id);
            if r.checkpoint == Checkpoint::ScheduledAudit && !m.is_empty() {
                out.push(CreditEvent {
                    kind: CreditEventKind::ScheduledRunDependency,
                    trigger: e.id.clone(),
                    at: e.created_at,
                    beneficiaries: beneficiaries_of(state, &m),
                    test: Some(r.test_id.clone()),
                    release: Some((r.artifact_id.clone(), r.version.clone())),
                });
            }
        }
        if e.change().is_some() && !e.links.remediates.is_empty() {
            let incidents: Vec<LedgerId> = e
                .links
                .influenced_by
                .iter()
                .chain(&e.links.remediates)
                .filter(|id| {
                    state
                        .get(id)
                        .and_then(|c| c.contribution())
                        .is_some_and(|c| c.kind == ContributionKind::IncidentReport)
                })
                .cloned()
                .collect();
            if !incidents.is_empty() {
                out.push(CreditEvent {
                    kind: CreditEventKind::RemediationCompleted,
                    trigger: e.id.clone(),
                    at: e.created_at,
                    beneficiaries: beneficiaries_of(state, &incidents),
                    test: None,
                    release: None,
                });
            }
        }
    }
    out.sort_by(|a, b| (a.at, a.kind, &a.trigger).cmp(&(b.at, b.kind, &b.trigger)));
    out
}

/// Whether dropping `test` from the recorded suite at a release changes
/// the suite verdict.
fn flips_suite(entries: &[EntryEnvelope], test: &LedgerId, artifact: &LedgerId, version: &str) -> bool {
    let suite: Vec<(LedgerId, Decision)> = latest_runs(entries)
        .into_iter()
        .filter(|((_, a, v), _)| a == artifact && v == version)
        .map(|((t, _, _), e)| (t, e.run().expect("run").decision))
        .collect();
    let with = SuiteVerdict::fold(suite.iter().map(|(_, d)| *d));
    let without = SuiteVerdict::fold(suite.iter().filter(|(t, _)| t != test).map(|(_, d)| *d));
    with != without
}

fn releases_with_runs(entries: &[EntryEnvelope], test: &LedgerId) -> usize {
    entries
        .iter()
        .filter_map(|e| e.run())
        .filter(|r| &r.test_id == test)
        .map(|r| (&r.artifact_id, &r.version))
        .collect::<HashSet<_>>()
        .len()
}

/// Plans the credit entries an accrual over `window` would append.
pub fn plan_credits(
    state: &LedgerState,
    policy: &CreditPolicy,
    window: Window,
    actor: &ActorRef,
    at: Timestamp,
) -> Result<CreditPlan, GovernanceError> {
    policy.validate()?;
    let policy_ref = policy
        .policy_ref()
        .map_err(|e| GovernanceError::InvalidPolicy(e.to_string()))?;
    let entries = state.entries();

    // Units already granted per (beneficiary, period) and the set of
    // already-credited (kind, trigger, beneficiary) keys.
    let mut used: BTreeMap<(String, i64), f64> = BTreeMap::new();
    let mut done: HashSet<(CreditEventKind, LedgerId, String)> = HashSet::new();
    for e in entries {
        let Some(c) = e.credit() else { continue };
        let Some(t) = c.triggering_event.trigger_id() else { continue };
        let when = state.get(t).map_or(e.created_at, |x| x.created_at);
        *used.entry((c.beneficiary.clone(), policy.period_of(when))).or_default() += c.units.value();
        done.insert((c.triggering_event.kind, t.clone(), c.beneficiary.clone()));
    }

    let mut report = AccrualReport {
        policy_ref: policy_ref.clone(),
        credited: Vec::new(),
        units: Decimal(0.0),
        suppressed: Vec::new(),
    };
    let mut planned = Vec::new();
    let mut taken: HashSet<LedgerId> = HashSet::new();
    let mut next_n = entries.iter().filter(|e| e.entry_type() == EntryType::Credit).count() + 1;
    let mut total = 0.0;

    for ev in collect_events(state) {
        let unit = policy.units_per_event.get(ev.kind);
        if !window.contains(ev.at) || unit.value() == 0.0 {
            continue;
        }
        let suppress = |reason, beneficiary: Option<&String>| SuppressedEvent {
            kind: ev.kind,
            trigger_id: ev.trigger.clone(),
            beneficiary: beneficiary.cloned(),
            reason,
        };
        if ev.beneficiaries.is_empty() {
            report.suppressed.push(suppress(SuppressionReason::NoBeneficiary, None));
            continue;
        }
        if let (Some(test), Some((artifact, version))) = (&ev.test, &ev.release) {
            if policy.quality_gate && !flips_suite(entries, test, artifact, version) {
                report.suppressed.push(suppress(SuppressionReason::QualityGate, None));
                continue;
            }
            if releases_with_runs(entries, test) < policy.persistence_gate_releases as usize {
                report.suppressed.push(suppress(SuppressionReason::PersistenceGate, None));
                continue;
            }
        }
        let share = Decimal(unit.value() / ev.beneficiaries.len() as f64).round_cents();
        let period = policy.period_of(ev.at);
        for b in &ev.beneficiaries {
            if done.contains(&(ev.kind, ev.trigger.clone(), b.clone())) {
                report.suppressed.push(suppress(SuppressionReason::AlreadyCredited, Some(b)));
                continue;
            }
            let u = used.entry((b.clone(), period)).or_default();
            if *u + share.value() > policy.cap_per_beneficiary_per_period.value() + 1e-9 {
                report.suppressed.push(suppress(SuppressionReason::CapReached, Some(b)));
                continue;
            }
            *u += share.value();
            total += share.value();
            let id = loop {
                let id = LedgerId::parse(&format!("pl:credit:accrual:{next_n:04}")).expect("well formed");
                next_n += 1;
                if state.get(&id).is_none() && !taken.contains(&id) {
                    break id;
                }
            };
            taken.insert(id.clone());
            let (evaluation_run_id, change_id) = match ev.kind {
                CreditEventKind::RemediationCompleted => (None, Some(ev.trigger.clone())),
                _ => (Some(ev.trigger.clone()), None),
            };
            let entry = EntryEnvelope::new(
                id.clone(),
                at,
                actor.clone(),
                Payload::Credit(CreditPayload {
                    beneficiary: b.clone(),
                    triggering_event: TriggeringEvent {
                        kind: ev.kind,
                        evaluation_run_id,
                        change_id,
                    },
                    units: share,
                    policy_ref: policy_ref.clone(),
                }),
            )
            .with_links(LinkSet {
                credits_for: vec![ev.trigger.clone()],
                ..LinkSet::default()
            });
            report.credited.push(id);
            planned.push(entry);
        }
    }
    report.units = Decimal(total).round_cents();
    Ok(CreditPlan {
        entries: planned,
        report,
    })
}

/// Appends the planned credits. Re-running over the same window appends
/// nothing new.
pub fn accrue_credits(
    ledger: &mut Ledger,
    policy: &CreditPolicy,
    window: Window,
    actor: &ActorRef,
    at: Timestamp,
    signer: Option<&dyn Signer>,
) -> Result<AccrualReport, GovernanceError> {
    let plan = plan_credits(ledger.state(), policy, window, actor, at)?;
    for e in plan.entries {
        ledger.append(e, signer)?;
    }
    Ok(plan.report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatementLine {
    pub credit_id: LedgerId,
    pub kind: CreditEventKind,
    pub trigger_id: LedgerId,
    pub units: Decimal,
    pub policy_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CreditStatement {
    pub beneficiary: String,
    pub lines: Vec<StatementLine>,
    pub units: Decimal,
    pub policy_refs: BTreeSet<String>,
}

/// Credits recorded for `beneficiary` with `createdAt` inside `window`.
pub fn credit_report(entries: &[EntryEnvelope], beneficiary: &str, window: Window) -> CreditStatement {
    let mut s = CreditStatement {
        beneficiary: beneficiary.to_string(),
        lines: Vec::new(),
        units: Decimal(0.0),
        policy_refs: BTreeSet::new(),
    };
    let mut total = 0.0;
    for e in entries {
        let Some(c) = e.credit() else { continue };
        if c.beneficiary != beneficiary || !window.contains(e.created_at) {
            continue;
        }
        let Some(t) = c.triggering_event.trigger_id() else { continue };
        total += c.units.value();
        s.policy_refs.insert(c.policy_ref.clone());
        s.lines.push(StatementLine {
            credit_id: e.id.clone(),
            kind: c.triggering_event.kind,
            trigger_id: t.clone(),
            units: c.units,
            policy_ref: c.policy_ref.clone(),
        });
    }
    s.units = Decimal(total).round_cents();
    s
}

/// Every beneficiary with at least one credit, sorted.
pub fn beneficiaries(entries: &[EntryEnvelope]) -> Vec<String> {
    let set: BTreeSet<String> = entries
        .iter()
        .filter_map(|e| e.credit())
        .map(|c| c.beneficiary.clone())
        .collect();
    set.into_iter().collect()
}
