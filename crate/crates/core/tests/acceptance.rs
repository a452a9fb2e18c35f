//! Acceptance checks. Prints one line per criterion and fails if any does.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use pledger::audit::{audit_corpus, build_export, check_export_conformance, parse_case_codings, Clause, CoverageLevel, Overall};
use pledger::canon::{canonicalize, compute_hash};
use pledger::example::{self, Stage};
use pledger::governance::{
    gate_check, plan_credits, prepare_transition, prepare_voucher, CreditPolicy, GateReasonKind, SuppressionReason,
    UnitsPerEvent, VoucherCondition, VoucherPayload, Window,
};
use pledger::graph::build_graph;
use pledger::harness::{detect_regressions, prepare_run, RunRequest};
use pledger::integrity::{seal, verify_chain};
use pledger::model::{
    parse_entry, serialize_entry, validate_structure, ActorRef, ActorRole, Checkpoint, CreditEventKind, Decimal,
    Decision, EdgeKind, EntryEnvelope, LedgerId, Payload, VoucherAction, VoucherStatus,
};
use pledger::query::{evaluate, parse_query};
use pledger::store::LedgerState;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use common::*;

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("worked example lifecycle replay", lifecycle_replay),
        ("regression query and enumerator equivalence", regression_query),
        ("tamper detection", tamper_detection),
        ("evidence coverage table", coverage_table),
        ("contribution entry round-trip", entry_round_trip),
        ("credit anti-gaming properties", credit_properties),
        ("release export conformance", export_conformance),
        ("gate monotonicity", gate_monotonicity),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(()) => println!("criterion {}: PASS  {name}", n + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {e}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn lifecycle_replay() -> Outcome {
    let start = Instant::now();
    let paused = example_entries(Stage::Paused);
    let model = id(example::MODEL);
    let now = example::day(40);
    let g = gate_check(&paused, example::CAPABILITY, &model, "v2", example::BOUNDARY, now);
    ensure!(!g.allowed, "v2 allowed while paused");
    ensure!(
        g.reasons.iter().any(|r| r.reason_kind == GateReasonKind::PausedByVoucher),
        "no pausedByVoucher reason: {:?}",
        g.reasons
    );

    let (_dir, ledger) = example_ledger(Stage::Complete);
    let entries = ledger.entries();
    ensure!(verify_chain(entries).valid, "fixture chain invalid");
    let g = gate_check(entries, example::CAPABILITY, &model, "v3", example::BOUNDARY, now);
    ensure!(g.allowed, "remediated v3 denied: {:?}", g.reasons);

    let regressions = detect_regressions(entries);
    ensure!(regressions.len() == 1, "{} regressions", regressions.len());
    let r = &regressions[0];
    ensure!(
        r.from_version == "v1" && r.to_version == "v2",
        "regression {}->{}",
        r.from_version,
        r.to_version
    );

    let credits: Vec<_> = entries.iter().filter_map(|e| e.credit()).collect();
    ensure!(credits.len() == 1, "{} credits", credits.len());
    ensure!(credits[0].units.value() == 10.0, "credit of {} units", credits[0].units);
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(())
}

/// Edge labels a random graph may carry, in relation-name form.
fn relation_name(kind: EdgeKind, rng: &mut StdRng) -> String {
    let camel = kind.as_str();
    if rng.gen_bool(0.5) {
        return camel.to_string();
    }
    let mut out = String::new();
    for c in camel.chars() {
        if c.is_ascii_uppercase() {
            out.push('_');
        }
        out.push(c.to_ascii_uppercase());
    }
    out
}

const LABELS: [&str; 8] = ["Contribution", "Test", "Artifact", "Change", "EvaluationRun", "Voucher", "Credit", "Deployment"];

struct OracleNode {
    id: String,
    type_name: String,
    deployment: bool,
}

fn oracle_label(n: &OracleNode, label: &str) -> bool {
    if label == "Deployment" {
        n.deployment
    } else {
        n.type_name == label
    }
}

/// Direction written as in the query text.
#[derive(Clone, Copy)]
enum Dir {
    Out,
    In,
    Either,
    Both,
}

fn regression_query() -> Outcome {
    let complete = example_entries(Stage::Complete);
    let q = parse_query(&fixture("regression.plq")).map_err(|e| e.to_string())?;
    let table = evaluate(&q, &build_graph(&complete));
    ensure!(table.rows.len() == 1, "{} rows", table.rows.len());
    let col = |name: &str| table.columns.iter().position(|c| c == name);
    let (Some(v), Some(d)) = (col("r.artifact_version"), col("d.id")) else {
        return Err(format!("columns {:?}", table.columns));
    };
    ensure!(table.rows[0][v] == "v2", "artifact_version {}", table.rows[0][v]);
    ensure!(table.rows[0][d] == example::DEPLOYMENT, "deployment {}", table.rows[0][d]);

    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    let mut mismatches = Vec::new();
    let mut queries = 0;
    for graph_no in 0..100 {
        let n = rng.gen_range(1..=10);
        let mut chosen: Vec<EntryEnvelope> = complete.choose_multiple(&mut rng, n).cloned().collect();
        for e in &mut chosen {
            e.links = Default::default();
            if let Payload::Test(t) = &mut e.payload {
                t.motivated_by.clear();
            }
        }
        let ids: Vec<LedgerId> = chosen.iter().map(|e| e.id.clone()).collect();
        let mut edges: HashSet<(String, EdgeKind, String)> = HashSet::new();
        for _ in 0..rng.gen_range(0..=2 * n) {
            let from = rng.gen_range(0..n);
            let to = ids[rng.gen_range(0..n)].clone();
            let kind = *EdgeKind::ALL.choose(&mut rng).unwrap();
            let l = &mut chosen[from].links;
            match kind {
                EdgeKind::InfluencedBy => l.influenced_by.push(to.clone()),
                EdgeKind::Influences => l.influences.push(to.clone()),
                EdgeKind::Motivates => l.motivates.push(to.clone()),
                EdgeKind::UsesTest => l.uses_test.push(to.clone()),
                EdgeKind::Evaluates => l.evaluates.push(to.clone()),
                EdgeKind::DeployedAs => l.deployed_as.push(to.clone()),
                EdgeKind::Remediates => l.remediates.push(to.clone()),
                EdgeKind::Evidence => l.evidence.push(to.to_string()),
                EdgeKind::Authorizes => l.authorizes.push(to.clone()),
                EdgeKind::CreditsFor => l.credits_for.push(to.clone()),
            }
            edges.insert((ids[from].to_string(), kind, to.to_string()));
        }
        for i in 0..n {
            if let Payload::Test(t) = &mut chosen[i].payload {
                if rng.gen_bool(0.5) {
                    let c = ids[rng.gen_range(0..n)].clone();
                    edges.insert((c.to_string(), EdgeKind::Motivates, ids[i].to_string()));
                    t.motivated_by.push(c);
                }
            }
        }
        let nodes: Vec<OracleNode> = chosen
            .iter()
            .map(|e| OracleNode {
                id: e.id.to_string(),
                type_name: e.entry_type().as_str().to_string(),
                deployment: e.artifact().is_some_and(|a| a.artifact_kind.is_deployment()),
            })
            .collect();
        let related = |a: &str, k: EdgeKind, b: &str| {
            let has = |x: &str, k: EdgeKind, y: &str| edges.contains(&(x.to_string(), k, y.to_string()));
            has(a, k, b)
                || (k == EdgeKind::Influences && has(b, EdgeKind::InfluencedBy, a))
                || (k == EdgeKind::InfluencedBy && has(b, EdgeKind::Influences, a))
        };
        let g = build_graph(&chosen);

        for _ in 0..10 {
            queries += 1;
            let vars = ["a", "b", "c"];
            let nv = rng.gen_range(1..=3);
            let ne = rng.gen_range(0..=2);
            let mut labels: Vec<Vec<&str>> = vec![Vec::new(); nv];
            let mut label_text = |v: usize, rng: &mut StdRng| {
                if rng.gen_bool(0.4) {
                    let l = *LABELS.choose(rng).unwrap();
                    labels[v].push(l);
                    format!("({}:{l})", vars[v])
                } else {
                    format!("({})", vars[v])
                }
            };
            let mut text = String::new();
            let mut constraints: Vec<(usize, EdgeKind, Dir, usize)> = Vec::new();
            let mut used = vec![false; nv];
            for _ in 0..ne {
                let (x, y) = (rng.gen_range(0..nv), rng.gen_range(0..nv));
                let kind = *EdgeKind::ALL.choose(&mut rng).unwrap();
                let dir = *[Dir::Out, Dir::In, Dir::Either, Dir::Both].choose(&mut rng).unwrap();
                let rel = relation_name(kind, &mut rng);
                let arrow = match dir {
                    Dir::Out => format!("-[:{rel}]->"),
                    Dir::In => format!("<-[:{rel}]-"),
                    Dir::Either => format!("-[:{rel}]-"),
                    Dir::Both => format!("<-[:{rel}]->"),
                };
                let left = label_text(x, &mut rng);
                let right = label_text(y, &mut rng);
                text.push_str(&format!("MATCH {left}{arrow}{right}\n"));
                used[x] = true;
                used[y] = true;
                constraints.push((x, kind, dir, y));
            }
            for v in 0..nv {
                if !used[v] {
                    let node = label_text(v, &mut rng);
                    text.push_str(&format!("MATCH {node}\n"));
                }
            }
            let mut preds: Vec<(usize, &str, String)> = Vec::new();
            for _ in 0..rng.gen_range(0..=2) {
                let v = rng.gen_range(0..nv);
                if rng.gen_bool(0.5) {
                    let val = if rng.gen_bool(0.8) {
                        nodes[rng.gen_range(0..n)].id.clone()
                    } else {
                        "pl:contrib:absent:001".to_string()
                    };
                    preds.push((v, "id", val));
                } else {
                    let t = LABELS[..7].choose(&mut rng).unwrap();
                    preds.push((v, "type", t.to_string()));
                }
            }
            if !preds.is_empty() {
                let parts: Vec<String> = preds
                    .iter()
                    .map(|(v, f, val)| format!("{}.{f} = \"{val}\"", vars[*v]))
                    .collect();
                text.push_str(&format!("WHERE {}\n", parts.join(" AND ")));
            }
            let returns: Vec<String> = (0..nv).map(|v| format!("{}.id", vars[v])).collect();
            text.push_str(&format!("RETURN {}", returns.join(", ")));

            let q = parse_query(&text).map_err(|e| format!("{e}\n{text}"))?;
            let got = evaluate(&q, &g).rows;

            let mut want: Vec<Vec<String>> = Vec::new();
            let total = n.pow(nv as u32);
            for mut code in 0..total {
                let assign: Vec<&OracleNode> = (0..nv)
                    .map(|_| {
                        let node = &nodes[code % n];
                        code /= n;
                        node
                    })
                    .collect();
                let ok_labels = (0..nv).all(|v| labels[v].iter().all(|l| oracle_label(assign[v], l)));
                let ok_preds = preds.iter().all(|(v, f, val)| match *f {
                    "id" => assign[*v].id == *val,
                    _ => assign[*v].type_name == *val,
                });
                let ok_edges = constraints.iter().all(|(x, k, dir, y)| {
                    let (a, b) = (assign[*x].id.as_str(), assign[*y].id.as_str());
                    match dir {
                        Dir::Out => related(a, *k, b),
                        Dir::In => related(b, *k, a),
                        Dir::Either => related(a, *k, b) || related(b, *k, a),
                        Dir::Both => related(a, *k, b) && related(b, *k, a),
                    }
                });
                if ok_labels && ok_preds && ok_edges {
                    want.push(assign.iter().map(|a| a.id.clone()).collect());
                }
            }
            want.sort();
            let mut got_sorted = got.clone();
            got_sorted.sort();
            if got_sorted != want {
                mismatches.push(format!("graph {graph_no}: {text:?}: got {} rows, want {}", got.len(), want.len()));
            }
        }
    }
    ensure!(mismatches.is_empty(), "{} of {queries} queries differ; first: {}", mismatches.len(), mismatches[0]);
    Ok(())
}

/// 100 sealed contributions chained in order.
fn generated_chain() -> Vec<EntryEnvelope> {
    let mut out: Vec<EntryEnvelope> = Vec::new();
    for i in 0..100 {
        let mut e = contribution(&format!("pl:contrib:gen:{i:03}"), &format!("P{i}"), minute(i));
        if let Some(c) = e.contribution().cloned() {
            let mut c = c;
            c.summary = format!("generated contribution number {i}");
            e.payload = Payload::Contribution(c);
        }
        let prev = out.last().and_then(|p| p.integrity.as_ref()).map(|b| b.hash.clone());
        out.push(seal(e, prev.as_deref(), None).unwrap());
    }
    out
}

fn tamper_detection() -> Outcome {
    let start = Instant::now();
    let chain = generated_chain();
    let v = verify_chain(&chain);
    ensure!(v.valid, "unmutated chain invalid: {v:?}");
    let lines: Vec<String> = chain.iter().map(|e| serialize_entry(e).unwrap()).collect();
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    let mut misses = Vec::new();
    for _ in 0..1000 {
        let i = rng.gen_range(0..chain.len());
        let line = lines[i].as_bytes();
        let begin = lines[i].find("\"integrity\":").expect("sealed");
        let end = begin + lines[i][begin..].find('}').expect("closed") + 1;
        let mutated = loop {
            let p = rng.gen_range(0..line.len());
            if (begin..end).contains(&p) {
                continue;
            }
            let b: u8 = rng.gen();
            if b == line[p] {
                continue;
            }
            let mut bytes = line.to_vec();
            bytes[p] = b;
            let Ok(text) = String::from_utf8(bytes) else { continue };
            let Ok(e) = parse_entry(&text) else { continue };
            if e != chain[i] {
                break e;
            }
        };
        let mut entries = chain.clone();
        entries[i] = mutated;
        let v = verify_chain(&entries);
        if v.valid || v.first_broken_index != Some(i) {
            misses.push(format!("mutation at {i}: {v:?}"));
        }
    }
    ensure!(misses.is_empty(), "{} undetected or misplaced; first: {}", misses.len(), misses[0]);
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(())
}

fn coverage_table() -> Outcome {
    use CoverageLevel::{NotSpecified as N, Partial as P, Reported as R};
    let expected: [(&str, [CoverageLevel; 5]); 4] = [
        ("AIAI / Mid-Space / LIVS", [R, P, P, N, P]),
        ("EVADIA+", [P, P, P, N, N]),
        ("AI-EDI-Space / Street Review", [R, P, P, N, P]),
        ("WeDesign+", [R, P, P, R, P]),
    ];
    let doc: Value = serde_json::from_str(&fixture("case_coding.json")).map_err(|e| e.to_string())?;
    let m = audit_corpus(&parse_case_codings(&doc).map_err(|e| e.to_string())?);
    ensure!(m.rows.len() == 4, "{} rows", m.rows.len());
    let mut cells = 0;
    for (case, want) in expected {
        let row = m.rows.iter().find(|r| r.case == case).ok_or(format!("missing case {case}"))?;
        for (k, (got, want)) in row.cells.iter().zip(want).enumerate() {
            ensure!(*got == want, "{case} column {k}: {got:?} != {want:?}");
            cells += 1;
        }
    }
    ensure!(cells == 20, "{cells} cells compared");
    Ok(())
}

fn entry_round_trip() -> Outcome {
    let e = parse_entry(&fixture("reference_entry.json")).map_err(|e| e.to_string())?;
    let report = validate_structure(&e);
    ensure!(report.violations.is_empty(), "violations: {:?}", report.violations);
    let bytes = canonicalize(&e, None).map_err(|e| e.to_string())?;
    ensure!(bytes == fixture_bytes("reference_canonical.bin"), "canonical bytes differ");
    let digest = compute_hash(&bytes);
    ensure!(digest == fixture("reference_digest.txt").trim(), "digest {digest}");
    Ok(())
}

const MODEL: &str = "pl:artifact:model";

/// A random history: contributors, their tests, a useless test that only
/// fails alongside another, and runs across versions.
fn random_history(rng: &mut StdRng) -> Vec<EntryEnvelope> {
    let mut entries = Vec::new();
    let k = rng.gen_range(1..=4);
    let n_versions = rng.gen_range(2..=8);
    for j in 0..k {
        entries.push(contribution(&format!("pl:contrib:h:{j}"), &format!("P{j}"), minute(j as i64)));
    }
    entries.push(contribution("pl:contrib:h:useless", "PU", minute(10)));
    let n_tests = rng.gen_range(1..=4);
    for t in 0..n_tests {
        let by = format!("pl:contrib:h:{}", rng.gen_range(0..k));
        entries.push(threshold_test(&format!("pl:test:h:{t}"), &[&by], MODEL, minute(20 + t as i64)));
    }
    entries.push(threshold_test("pl:test:h:useless", &["pl:contrib:h:useless"], MODEL, minute(30)));
    for v in 0..n_versions {
        entries.push(model_version(MODEL, &format!("v{v}"), minute(40 + v as i64)));
    }
    let state = LedgerState::from_entries(entries.clone());
    let mut runs = Vec::new();
    let mut t = 100i64;
    let mut run_no = 0;
    let mut record = |test: &str, version: usize, d: Decision, rng: &mut StdRng, runs: &mut Vec<EntryEnvelope>| {
        t += rng.gen_range(1..=60 * 24 * 2);
        run_no += 1;
        let checkpoint = if rng.gen_bool(0.2) { Checkpoint::ScheduledAudit } else { Checkpoint::PreDeploymentGate };
        let e = prepare_run(
            &state,
            RunRequest {
                test_id: id(test),
                artifact_id: id(MODEL),
                version: format!("v{version}"),
                raw_results: raw_for(d),
                evaluator: ActorRef::pseudonymous(ActorRole::Evaluator, "eval"),
                checkpoint,
                at: minute(t),
                id: Some(id(&format!("pl:run:h:{run_no:04}"))),
            },
        )
        .expect("valid run");
        runs.push(e);
    };
    for v in 0..n_versions {
        let mut any_fail = false;
        for test in 0..n_tests {
            if rng.gen_bool(0.15) {
                continue;
            }
            let d = *[Decision::Pass, Decision::Pass, Decision::Fail, Decision::Inconclusive].choose(rng).unwrap();
            any_fail |= d == Decision::Fail;
            record(&format!("pl:test:h:{test}"), v, d, rng, &mut runs);
        }
        // Fails only where some other test fails, so removing it never
        // changes the suite verdict.
        let d = if any_fail && rng.gen_bool(0.7) { Decision::Fail } else { Decision::Pass };
        record("pl:test:h:useless", v, d, rng, &mut runs);
    }
    entries.extend(runs);
    entries
}

fn random_policy(rng: &mut StdRng) -> CreditPolicy {
    let regression = rng.gen_range(1..=20u32);
    let scheduled = rng.gen_range(0..=5u32);
    CreditPolicy {
        units_per_event: UnitsPerEvent {
            regression_detected: Decimal(f64::from(regression)),
            scheduled_run_dependency: Decimal(f64::from(scheduled)),
            ..UnitsPerEvent::default()
        },
        cap_per_beneficiary_per_period: Decimal(f64::from(regression.max(scheduled) * rng.gen_range(1..=3))),
        period_days: rng.gen_range(3..=60),
        quality_gate: true,
        persistence_gate_releases: rng.gen_range(0..=2),
    }
}

fn credit_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0006);
    let auditor = ActorRef::pseudonymous(ActorRole::Auditor, "accrual");
    let mut credited_total = 0usize;
    let mut useless_gated = 0usize;
    let mut capped = 0usize;
    for h in 0..1000 {
        let entries = random_history(&mut rng);
        let policy = random_policy(&mut rng);
        let state = LedgerState::from_entries(entries.clone());
        let plan = plan_credits(&state, &policy, Window::all(), &auditor, minute(1_000_000)).map_err(|e| e.to_string())?;
        credited_total += plan.entries.len();
        for sup in &plan.report.suppressed {
            match sup.reason {
                SuppressionReason::CapReached => capped += 1,
                SuppressionReason::QualityGate => {
                    let test = state.get(&sup.trigger_id).and_then(|e| e.run()).map(|r| r.test_id.as_str());
                    useless_gated += usize::from(test == Some("pl:test:h:useless"));
                }
                _ => {}
            }
        }

        let mut per_period: BTreeMap<(String, i64), f64> = BTreeMap::new();
        for e in &plan.entries {
            let c = e.credit().ok_or("planned a non-credit entry")?;
            ensure!(c.beneficiary != "PU", "history {h}: the useless test's contributor was credited");
            let unit = match c.triggering_event.kind {
                CreditEventKind::RegressionDetected => policy.units_per_event.regression_detected,
                CreditEventKind::ScheduledRunDependency => policy.units_per_event.scheduled_run_dependency,
                other => return Err(format!("history {h}: unexpected {other:?} credit")),
            };
            ensure!(c.units.value() <= unit.value() + 1e-9, "history {h}: credit above the event's units");
            let trigger = c.triggering_event.trigger_id().ok_or("no trigger")?;
            let at = state.get(trigger).ok_or("unknown trigger")?.created_at;
            let period = at.unix().div_euclid(i64::from(policy.period_days) * 86_400);
            *per_period.entry((c.beneficiary.clone(), period)).or_default() += c.units.value();
        }
        for ((b, p), units) in &per_period {
            ensure!(
                *units <= policy.cap_per_beneficiary_per_period.value() + 1e-9,
                "history {h}: {b} received {units} in period {p}"
            );
        }

        let mut applied = entries;
        applied.extend(plan.entries);
        let again = plan_credits(&LedgerState::from_entries(applied), &policy, Window::all(), &auditor, minute(2_000_000))
            .map_err(|e| e.to_string())?;
        ensure!(again.entries.is_empty(), "history {h}: re-run planned {} more credits", again.entries.len());
    }
    ensure!(credited_total > 0, "no history produced any credit");
    ensure!(useless_gated > 0, "the useless test never regressed");
    ensure!(capped > 0, "the cap never bound");

    // Twenty regressions for one contributor against a cap of 100.
    let mut entries = vec![contribution("pl:contrib:h:0", "P0", minute(0))];
    for t in 0..20 {
        entries.push(threshold_test(&format!("pl:test:h:{t}"), &["pl:contrib:h:0"], MODEL, minute(1)));
    }
    entries.push(model_version(MODEL, "v1", minute(2)));
    entries.push(model_version(MODEL, "v2", minute(3)));
    let state = LedgerState::from_entries(entries.clone());
    for t in 0..20 {
        for (v, d) in [(1, Decision::Pass), (2, Decision::Fail)] {
            let run = prepare_run(
                &state,
                RunRequest {
                    test_id: id(&format!("pl:test:h:{t}")),
                    artifact_id: id(MODEL),
                    version: format!("v{v}"),
                    raw_results: raw_for(d),
                    evaluator: ActorRef::pseudonymous(ActorRole::Evaluator, "eval"),
                    checkpoint: Checkpoint::PreDeploymentGate,
                    at: minute(10 + 2 * t + v),
                    id: Some(id(&format!("pl:run:h:{t}-{v}"))),
                },
            )
            .map_err(|e| e.to_string())?;
            entries.push(run);
        }
    }
    let policy = CreditPolicy {
        units_per_event: UnitsPerEvent {
            regression_detected: Decimal(10.0),
            ..UnitsPerEvent::default()
        },
        cap_per_beneficiary_per_period: Decimal(100.0),
        period_days: 30,
        quality_gate: false,
        persistence_gate_releases: 0,
    };
    let plan = plan_credits(&LedgerState::from_entries(entries), &policy, Window::all(), &auditor, minute(100))
        .map_err(|e| e.to_string())?;
    ensure!(plan.report.units.value() == 100.0, "credited {} units", plan.report.units);
    let capped = plan.report.suppressed.iter().filter(|s| s.reason == SuppressionReason::CapReached).count();
    ensure!(capped == 10, "{capped} events hit the cap");
    Ok(())
}

fn export_conformance() -> Outcome {
    let entries = example_entries(Stage::Complete);
    let export = build_export(&entries, &id(example::MODEL), "v3", example::day(40)).map_err(|e| e.to_string())?;
    let report = check_export_conformance(&export).map_err(|e| e.to_string())?;
    ensure!(report.overall == Overall::Conformant, "unmutated export: {report:?}");

    let mutations: [(Clause, Box<dyn Fn(&mut Value)>); 4] = [
        (
            Clause::EvidenceFields,
            Box::new(|d: &mut Value| {
                for e in d["entries"].as_array_mut().unwrap() {
                    if e["type"] == "Contribution" {
                        e.as_object_mut().unwrap().remove("consent");
                    }
                }
            }),
        ),
        (
            Clause::TraceabilityLinks,
            Box::new(|d: &mut Value| {
                for e in d["entries"].as_array_mut().unwrap() {
                    if e["id"] == example::CHANGE {
                        e["links"].as_object_mut().unwrap().remove("influencedBy");
                    }
                }
            }),
        ),
        (
            Clause::TestsAndRuns,
            Box::new(|d: &mut Value| {
                d["entries"].as_array_mut().unwrap().retain(|e| e["type"] != "EvaluationRun");
            }),
        ),
        (
            Clause::ActiveVouchers,
            Box::new(|d: &mut Value| {
                d["vouchers"]
                    .as_array_mut()
                    .unwrap()
                    .retain(|v| v["voucherId"] != example::CONDITION_VOUCHER);
            }),
        ),
    ];
    for (clause, mutate) in mutations {
        let mut doc = export.clone();
        mutate(&mut doc);
        ensure!(doc != export, "{clause:?} mutation changed nothing");
        let r = check_export_conformance(&doc).map_err(|e| e.to_string())?;
        ensure!(r.overall == Overall::MaterialNonConformance, "{clause:?} mutation still conformant");
        for c in Clause::ALL {
            let pass = r.clause(c).pass;
            ensure!(pass == (c != clause), "{clause:?} mutation: clause {c:?} pass={pass}");
        }
    }
    Ok(())
}

const CAP: &str = "cap";
const BOUNDARY: &str = "boundary";

fn gate_base(rng: &mut StdRng) -> Vec<EntryEnvelope> {
    let mut entries = vec![
        model_version(MODEL, "v1", minute(0)),
        model_version(MODEL, "v2", minute(1)),
        threshold_test("pl:test:g:0", &[], MODEL, minute(2)),
        threshold_test("pl:test:g:1", &[], MODEL, minute(3)),
    ];
    let state = LedgerState::from_entries(entries.clone());
    for r in 0..rng.gen_range(0..=6) {
        let d = *[Decision::Pass, Decision::Fail, Decision::Inconclusive].choose(rng).unwrap();
        entries.push(
            prepare_run(
                &state,
                RunRequest {
                    test_id: id(&format!("pl:test:g:{}", rng.gen_range(0..2))),
                    artifact_id: id(MODEL),
                    version: format!("v{}", rng.gen_range(1..=2)),
                    raw_results: raw_for(d),
                    evaluator: ActorRef::pseudonymous(ActorRole::Evaluator, "eval"),
                    checkpoint: Checkpoint::PreDeploymentGate,
                    at: minute(10 + r),
                    id: Some(id(&format!("pl:run:g:{r}"))),
                },
            )
            .expect("valid run"),
        );
    }
    entries
}

fn random_voucher(rng: &mut StdRng, action: VoucherAction) -> VoucherPayload {
    let conditions = if action == VoucherAction::Condition {
        (0..rng.gen_range(1..=2))
            .map(|_| VoucherCondition {
                required_test_id: id(&format!("pl:test:g:{}", rng.gen_range(0..2))),
                must_pass_on_version: [None, Some("v1".to_string()), Some("v2".to_string())].choose(rng).unwrap().clone(),
                scope_constraints: Vec::new(),
                human_in_loop: rng.gen_bool(0.5),
            })
            .collect()
    } else {
        Vec::new()
    };
    VoucherPayload {
        capability: if rng.gen_bool(0.85) { CAP.into() } else { "other".into() },
        boundary: if rng.gen_bool(0.85) { BOUNDARY.into() } else { "elsewhere".into() },
        action,
        conditions,
        steward: steward(),
        status: VoucherStatus::Issued,
        expiry: rng.gen_bool(0.25).then(|| minute(rng.gen_range(0..200))),
    }
}

/// Appends a voucher and walks it through a random legal path.
fn add_voucher(entries: &mut Vec<EntryEnvelope>, lineage: &str, payload: VoucherPayload, path: &[VoucherStatus], t: i64) {
    let state = LedgerState::from_entries(entries.clone());
    entries.push(prepare_voucher(&state, id(lineage), payload, minute(t)).expect("voucher"));
    for (i, to) in path.iter().enumerate() {
        let state = LedgerState::from_entries(entries.clone());
        entries.push(prepare_transition(&state, &id(lineage), *to, minute(t + 1 + i as i64)).expect("legal transition"));
    }
}

fn random_path(rng: &mut StdRng) -> Vec<VoucherStatus> {
    use VoucherStatus::*;
    match rng.gen_range(0..6) {
        0 => vec![],
        1 | 2 | 3 => vec![Active],
        4 => vec![Active, *[Satisfied, Revoked, Expired].choose(rng).unwrap()],
        _ => vec![Active, Revoked],
    }
}

fn gate_monotonicity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0008);
    let model = id(MODEL);
    let mut violations = Vec::new();
    let (mut denied, mut released) = (0, 0);
    for s in 0..10_000 {
        let mut entries = gate_base(&mut rng);
        for v in 0..rng.gen_range(0..=4) {
            let action = if rng.gen_bool(0.4) { VoucherAction::Pause } else { VoucherAction::Condition };
            let payload = random_voucher(&mut rng, action);
            let path = random_path(&mut rng);
            add_voucher(&mut entries, &format!("pl:voucher:g:{v}"), payload, &path, 300 + 10 * v);
        }
        let version = format!("v{}", rng.gen_range(1..=2));
        let now = minute(rng.gen_range(0..400));
        let before = gate_check(&entries, CAP, &model, &version, BOUNDARY, now);

        // Purity and explanation.
        let again = gate_check(&entries.clone(), CAP, &model, &version, BOUNDARY, now);
        if again != before {
            violations.push(format!("scenario {s}: repeated check differs"));
        }
        denied += usize::from(!before.allowed);
        if !before.allowed && before.reasons.is_empty() {
            violations.push(format!("scenario {s}: denial without reasons"));
        }

        // Adding a pause never turns a denial into an allow.
        let mut paused = entries.clone();
        let payload = random_voucher(&mut rng, VoucherAction::Pause);
        let path = random_path(&mut rng);
        add_voucher(&mut paused, "pl:voucher:g:added", payload, &path, 600);
        let after = gate_check(&paused, CAP, &model, &version, BOUNDARY, now);
        if !before.allowed && after.allowed {
            violations.push(format!("scenario {s}: added pause allowed a denied release"));
        }

        // Satisfying or revoking an active voucher never denies an allowed one.
        let state = LedgerState::from_entries(entries.clone());
        for head in pledger::governance::voucher_heads(&entries) {
            if head.voucher().map(|v| v.status) != Some(VoucherStatus::Active) {
                continue;
            }
            released += 1;
            for to in [VoucherStatus::Satisfied, VoucherStatus::Revoked] {
                let mut next = entries.clone();
                next.push(prepare_transition(&state, &head.id.lineage(), to, minute(700)).expect("legal"));
                let after = gate_check(&next, CAP, &model, &version, BOUNDARY, now);
                if before.allowed && !after.allowed {
                    violations.push(format!("scenario {s}: {to} of {} denied an allowed release", head.id));
                }
            }
        }
    }
    ensure!(violations.is_empty(), "{} violations; first: {}", violations.len(), violations[0]);
    ensure!(denied > 0 && released > 0, "degenerate scenarios: {denied} denials, {released} active vouchers");
    Ok(())
}
