mod common;

use std::fs;
use std::path::{Path, PathBuf};

use pledger::cli::run_with;
use pledger::example;
use serde_json::Value;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn pledger(ledger: &Path, args: &[&str]) -> Run {
    let mut argv = vec!["pledger".to_string(), "--ledger".into(), ledger.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn demo(stage: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("ledger.jsonl");
    let r = pledger(&ledger, &["demo", "--stage", stage]);
    assert_eq!(r.code, 0, "{}", r.err);
    (dir, ledger)
}

const GATE: [&str; 8] = [
    "gate",
    "check",
    "--capability",
    example::CAPABILITY,
    "--boundary",
    example::BOUNDARY,
    "--now",
    "2025-07-01T00:00:00Z",
];

#[test]
fn verify_reports_entry_count() {
    let (_d, ledger) = demo("complete");
    let r = pledger(&ledger, &["verify"]);
    assert_eq!(r.code, 0);
    assert!(r.out.starts_with("chain valid, 17 entries"), "{}", r.out);
}

#[test]
fn gate_denies_paused_version() {
    let (_d, ledger) = demo("paused");
    let mut args = GATE.to_vec();
    args.extend(["--version", "v2"]);
    let r = pledger(&ledger, &args);
    assert_eq!(r.code, 3, "{}{}", r.out, r.err);
    assert!(r.out.contains("pausedByVoucher"));
    assert!(r.out.contains(example::PAUSE_VOUCHER));
}

#[test]
fn gate_allows_remediated_version() {
    let (_d, ledger) = demo("complete");
    let mut args = GATE.to_vec();
    args.extend(["--version", "v3"]);
    assert_eq!(pledger(&ledger, &args).code, 0);
}

#[test]
fn regression_query_file_returns_one_row() {
    let (_d, ledger) = demo("complete");
    let plq = common::fixture_path("regression.plq");
    let r = pledger(&ledger, &["query", "--file", plq.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out.lines().count(), 2, "{}", r.out);
    assert!(r.out.contains("v2") && r.out.contains(example::DEPLOYMENT));
}

#[test]
fn machine_formats_carry_the_same_rows() {
    let (_d, ledger) = demo("complete");
    let plq = common::fixture_path("regression.plq");
    let plq = plq.to_str().unwrap();
    let text = pledger(&ledger, &["query", "--file", plq]).out;
    let csv = pledger(&ledger, &["--format", "csv", "query", "--file", plq]).out;
    let doc: Value = serde_json::from_str(&pledger(&ledger, &["--format", "doc", "query", "--file", plq]).out).unwrap();

    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<Vec<String>> = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    assert_eq!(rows.len(), 1);
    let text_cells: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(text_cells, rows[0].iter().map(String::as_str).collect::<Vec<_>>());
    for (col, cell) in header.iter().zip(&rows[0]) {
        assert_eq!(doc["rows"][0][col], Value::String(cell.clone()));
    }
}

#[test]
fn unsupported_format_is_a_usage_error() {
    let (_d, ledger) = demo("complete");
    assert_eq!(pledger(&ledger, &["--format", "csv", "head"]).code, 64);
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("l.jsonl");
    assert_eq!(pledger(&ledger, &["frobnicate"]).code, 64);
    assert_eq!(pledger(&ledger, &["gate", "check"]).code, 64);
    let mut out = Vec::new();
    let code = run_with(vec!["pledger".into(), "head".into()], &mut out, &mut Vec::new());
    assert!(code == 64 || std::env::var("PLEDGER_LEDGER").is_ok());
    assert_eq!(pledger(&ledger, &["--help"]).code, 0);
}

#[test]
fn tampered_ledger_fails_verification() {
    let (_d, ledger) = demo("complete");
    let text = fs::read_to_string(&ledger).unwrap();
    fs::write(&ledger, text.replacen("diverse seating", "diverse seatinG", 1)).unwrap();
    let r = pledger(&ledger, &["verify"]);
    assert_eq!(r.code, 4);
    assert!(r.out.contains("chain broken at index 0"), "{}", r.out);
}

#[test]
fn read_commands_leave_the_ledger_untouched() {
    let (d, ledger) = demo("complete");
    let before = fs::read(&ledger).unwrap();
    let export = d.path().join("export.json");
    let plq = common::fixture_path("regression.plq");
    for args in [
        vec!["verify"],
        vec!["head"],
        vec!["query", "--file", plq.to_str().unwrap()],
        vec!["harness", "regressions"],
        vec!["voucher", "list"],
        vec!["credit", "report"],
        vec!["audit", "evidence"],
        vec!["audit", "linkage"],
        vec!["audit", "consent"],
        vec!["audit", "conformance", "--release", "pl:artifact:t2i@v3"],
        vec!["export", "--release", "pl:artifact:t2i@v3", "--out", export.to_str().unwrap()],
        vec!["trace", "--from", example::CONTRIBUTION],
        vec!["graph", "export"],
    ] {
        let r = pledger(&ledger, &args);
        assert_eq!(r.code, 0, "{args:?}: {}{}", r.out, r.err);
    }
    assert_eq!(fs::read(&ledger).unwrap(), before);
    let r = pledger(&ledger, &["audit", "conformance", "--export", export.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.out);
    assert!(r.out.contains("overall: conformant"));
}

#[test]
fn harness_run_exit_codes_follow_the_suite() {
    let (d, ledger) = demo("complete");
    let results = d.path().join("results");
    fs::create_dir(&results).unwrap();
    let file = results.join("pl_test_accessibility_001.result");
    let run = |version: &str| {
        pledger(
            &ledger,
            &[
                "harness",
                "run",
                "--artifact",
                example::MODEL,
                "--version",
                version,
                "--results",
                results.to_str().unwrap(),
                "--at",
                "2025-06-20T00:00:00Z",
            ],
        )
    };
    fs::write(&file, example::scores([5, 5, 5]).to_string()).unwrap();
    assert_eq!(run("v3").code, 0);
    fs::write(&file, example::scores([1, 1, 1]).to_string()).unwrap();
    let r = run("v3");
    assert_eq!(r.code, 1, "{}{}", r.out, r.err);
    assert!(r.out.contains("anyFail"));
    fs::remove_file(&file).unwrap();
    assert_eq!(run("v3").code, 2);
    assert_eq!(run("v9").code, 5);
}

#[test]
fn validate_flags_structural_problems() {
    let dir = tempfile::tempdir().unwrap();
    let good = common::fixture_path("reference_entry.json");
    let r = pledger(&dir.path().join("l"), &["validate", "--file", good.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.out);
    let mut doc: Value = serde_json::from_str(&common::fixture("reference_entry.json")).unwrap();
    doc["compensation"]["currency"] = Value::String("dollars".into());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, doc.to_string()).unwrap();
    let r = pledger(&dir.path().join("l"), &["validate", "--file", bad.to_str().unwrap()]);
    assert_eq!(r.code, 5, "{}", r.out);
}

#[test]
fn append_signs_and_verify_checks_keys() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("l.jsonl");
    let key = dir.path().join("k");
    let wrong = dir.path().join("w");
    fs::write(&key, "secret\n").unwrap();
    fs::write(&wrong, "other").unwrap();
    let entry = common::fixture_path("reference_entry.json");
    let r = pledger(
        &ledger,
        &["append", "--file", entry.to_str().unwrap(), "--key-file", key.to_str().unwrap(), "--key-ref", "k1"],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains(common::fixture("reference_digest.txt").trim()));

    let good = format!("k1={}", key.display());
    let r = pledger(&ledger, &["verify", "--key", &good]);
    assert_eq!(r.code, 0, "{}", r.out);
    assert!(r.out.contains("1 valid"));
    let bad = format!("k1={}", wrong.display());
    assert_eq!(pledger(&ledger, &["verify", "--key", &bad]).code, 4);
    // Without the key the signature is unverifiable, not invalid.
    let r = pledger(&ledger, &["verify"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("1 unverifiable"));

    let r = pledger(&ledger, &["append", "--file", entry.to_str().unwrap()]);
    assert_eq!(r.code, 5, "duplicate id must be rejected");
}

#[test]
fn evidence_matrix_from_coding_file() {
    let dir = tempfile::tempdir().unwrap();
    let coding = common::fixture_path("case_coding.json");
    let r = pledger(&dir.path().join("l"), &["--format", "csv", "audit", "evidence", "--coding", coding.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    let last = r.out.lines().last().unwrap();
    assert_eq!(last, "WeDesign+,Reported,Partial,Partial,Reported,Partial");
}

#[test]
fn voucher_lifecycle_through_the_cli() {
    let (d, ledger) = demo("complete");
    let payload = d.path().join("v.json");
    fs::write(
        &payload,
        serde_json::json!({
            "capability": example::CAPABILITY,
            "boundary": example::BOUNDARY,
            "action": "pause",
            "steward": {"role": "communitySteward", "pseudonym": "steward-9"},
            "status": "issued"
        })
        .to_string(),
    )
    .unwrap();
    let id = "pl:voucher:wedesign:second-pause";
    let at = ["--at", "2025-06-15T00:00:00Z"];
    let mut args = vec!["voucher", "issue", "--id", id, "--file", payload.to_str().unwrap()];
    args.extend(at);
    assert_eq!(pledger(&ledger, &args).code, 0);
    let mut args = vec!["voucher", "transition", "--id", id, "--to", "active"];
    args.extend(at);
    assert_eq!(pledger(&ledger, &args).code, 0);
    let mut gate = GATE.to_vec();
    gate.extend(["--version", "v3"]);
    assert_eq!(pledger(&ledger, &gate).code, 3);
    let mut args = vec!["voucher", "transition", "--id", id, "--to", "revoked"];
    args.extend(at);
    assert_eq!(pledger(&ledger, &args).code, 0);
    assert_eq!(pledger(&ledger, &gate).code, 0);
    let mut args = vec!["voucher", "transition", "--id", id, "--to", "active"];
    args.extend(at);
    assert_eq!(pledger(&ledger, &args).code, 5, "revoked is terminal");
}
