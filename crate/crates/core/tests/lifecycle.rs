use pledger::example::{self, Stage};
use pledger::governance::{credit_report, gate_check, GateReasonKind, Window};
use pledger::harness::detect_regressions;
use pledger::integrity::verify_chain;
use pledger::model::{LedgerId, Timestamp};
use pledger::store::Ledger;

fn id(s: &str) -> LedgerId {
    LedgerId::parse(s).unwrap()
}

fn build(stage: Stage) -> (tempfile::TempDir, Ledger) {
    let dir = tempfile::tempdir().unwrap();
    let mut ledger = Ledger::open(dir.path().join("ledger.jsonl")).unwrap();
    example::build(&mut ledger, stage).unwrap();
    (dir, ledger)
}

fn now() -> Timestamp {
    example::day(40)
}

#[test]
fn paused_at_v2() {
    let (_d, ledger) = build(Stage::Paused);
    let g = gate_check(ledger.entries(), example::CAPABILITY, &id(example::MODEL), "v2", example::BOUNDARY, now());
    assert!(!g.allowed);
    assert_eq!(g.reasons.len(), 1);
    assert_eq!(g.reasons[0].reason_kind, GateReasonKind::PausedByVoucher);
    assert_eq!(g.exit_code(), 3);
}

#[test]
fn complete_lifecycle() {
    let (_d, ledger) = build(Stage::Complete);
    let entries = ledger.entries();
    assert!(verify_chain(entries).valid);

    let g = gate_check(entries, example::CAPABILITY, &id(example::MODEL), "v3", example::BOUNDARY, now());
    assert!(g.allowed, "{g:?}");
    assert!(g.reasons.is_empty());
    // The standing condition still blocks the failing version.
    let g2 = gate_check(entries, example::CAPABILITY, &id(example::MODEL), "v2", example::BOUNDARY, now());
    assert!(!g2.allowed);
    assert_eq!(g2.reasons[0].reason_kind, GateReasonKind::ConditionUnmet);

    let regressions = detect_regressions(entries);
    assert_eq!(regressions.len(), 1);
    assert_eq!((regressions[0].from_version.as_str(), regressions[0].to_version.as_str()), ("v1", "v2"));
    assert_eq!(regressions[0].failing_run_id, id(example::RUN_V2));

    let credits: Vec<_> = entries.iter().filter_map(|e| e.credit()).collect();
    assert_eq!(credits.len(), 1);
    assert_eq!(credits[0].units.value(), 10.0);
    assert_eq!(credits[0].beneficiary, "P12");
    let statement = credit_report(entries, "P12", Window::all());
    assert_eq!(statement.lines.len(), 1);
    assert_eq!(statement.lines[0].trigger_id, id(example::RUN_V2));
}
