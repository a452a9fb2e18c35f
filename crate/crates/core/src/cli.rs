//! Command-line front end. Every command is non-interactive; inputs come
//! from flags and files.
//!
//! Exit codes: 0 ok/allow/all pass, 1 a test failed, 2 inconclusive,
//! 3 gate deny, 4 verification failure, 5 validation or conformance
//! failure, 64 usage error, 74 I/O or lock failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::audit::{
    audit_contribution, audit_corpus, audit_ledger, build_export, check_export_conformance,
    flag_consent_violations, parse_case_codings, EvidenceColumn, Overall,
};
use crate::example::{self, Stage};
use crate::governance::{
    accrue_credits, beneficiaries, credit_report, gate_check, issue_voucher, transition_voucher,
    voucher_heads, CreditPolicy, VoucherPayload, Window,
};
use crate::graph::{build_graph, linkage_with, trace_influence, LinkageOptions};
use crate::harness::{detect_regressions, run_suite, triage_incident, ResultsBundle, TestDraft};
use crate::integrity::{
    verify_chain, verify_signatures, KeyedDigestScheme, SignatureRecord, SignatureVerdict,
    SignatureVerifier, Signer, VerifierRegistry,
};
use crate::model::{
    parse_entry, validate_structure, ActorRef, ActorRole, Checkpoint, EntryEnvelope, EntryType,
    LedgerId, Timestamp, TombstoneReason, VoucherStatus,
};
use crate::query::{evaluate, parse_query, run_saved_query, saved_queries, ResultTable};
use crate::store::{read_all, read_head, AppendError, Ledger, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_DENY: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;
pub const EXIT_INVALID: i32 = 5;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Parser, Debug)]
#[command(name = "pledger", version, about = "Participation ledger: record, verify, query, gate and audit")]
pub struct Cli {
    /// Ledger file (JSON lines).
    #[arg(long, global = true, env = "PLEDGER_LEDGER")]
    pub ledger: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    /// JSON document.
    Doc,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Append entries from a file of JSON documents (one per line, or a single document).
    Append {
        /// Input file, `-` for stdin.
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        key: SigningKey,
    },
    /// Check structure of entry documents without appending.
    Validate {
        #[arg(long)]
        file: PathBuf,
    },
    /// Verify the hash chain and any signatures.
    Verify {
        /// Verification key as `<keyRef>=<key file>`; repeatable.
        #[arg(long = "key")]
        keys: Vec<String>,
    },
    /// Print the head digest.
    Head,
    /// Run a pattern query.
    Query {
        /// Query text.
        text: Option<String>,
        /// Read the query from a file.
        #[arg(long, conflicts_with = "text")]
        file: Option<PathBuf>,
        /// Run a saved query by name.
        #[arg(long, conflicts_with_all = ["text", "file"])]
        saved: Option<String>,
        /// Saved-query parameter `name=value`; repeatable.
        #[arg(long = "param")]
        params: Vec<String>,
        /// List saved queries.
        #[arg(long, conflicts_with_all = ["text", "file", "saved"])]
        list: bool,
    },
    /// Test harness.
    #[command(subcommand)]
    Harness(HarnessCmd),
    /// Release gates.
    #[command(subcommand)]
    Gate(GateCmd),
    /// Capability vouchers.
    #[command(subcommand)]
    Voucher(VoucherCmd),
    /// Participation credits.
    #[command(subcommand)]
    Credit(CreditCmd),
    /// Evidence and conformance audits.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Emit the release export document.
    Export {
        /// `<artifactId>@<version>`.
        #[arg(long)]
        release: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        now: Option<String>,
    },
    /// Restrict access to an entry's payload with a tombstone.
    Redact {
        #[arg(long)]
        target: String,
        #[arg(long, value_parser = parse_term::<TombstoneReason>)]
        reason: TombstoneReason,
        #[command(flatten)]
        actor: ActorArgs,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        at: Option<String>,
        #[command(flatten)]
        key: SigningKey,
    },
    /// Influence paths from an entry to deployments.
    Trace {
        #[arg(long)]
        from: String,
    },
    /// Graph utilities.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Write the worked example into an empty ledger.
    Demo {
        #[arg(long, value_enum, default_value_t = DemoStage::Complete)]
        stage: DemoStage,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoStage {
    Paused,
    Complete,
}

#[derive(Subcommand, Debug)]
pub enum HarnessCmd {
    /// Run every test targeting an artifact version.
    Run {
        #[arg(long)]
        artifact: String,
        #[arg(long)]
        version: String,
        #[arg(long, value_parser = parse_term::<Checkpoint>, default_value = "preDeploymentGate")]
        checkpoint: Checkpoint,
        /// Directory of `<test id with : as _>.result` documents.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "harness")]
        evaluator: String,
        #[arg(long)]
        at: Option<String>,
    },
    /// List pass-to-fail transitions between versions.
    Regressions,
    /// Record a test derived from an incident report.
    Triage {
        #[arg(long)]
        incident: String,
        /// Test draft document.
        #[arg(long)]
        draft: PathBuf,
        #[command(flatten)]
        actor: ActorArgs,
        #[arg(long)]
        at: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum GateCmd {
    /// Decide whether a capability may run on a version.
    Check {
        #[arg(long)]
        capability: String,
        #[arg(long)]
        boundary: String,
        #[arg(long)]
        version: String,
        /// Defaults to the only artifact declaring `version` with this capability.
        #[arg(long)]
        artifact: Option<String>,
        #[arg(long)]
        now: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum VoucherCmd {
    /// Issue a voucher from a payload document.
    Issue {
        #[arg(long)]
        id: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        at: Option<String>,
        #[command(flatten)]
        key: SigningKey,
    },
    /// Move a voucher lineage to a new status.
    Transition {
        #[arg(long)]
        id: String,
        #[arg(long, value_parser = parse_term::<VoucherStatus>)]
        to: VoucherStatus,
        #[arg(long)]
        at: Option<String>,
        #[command(flatten)]
        key: SigningKey,
    },
    /// Current revision of every voucher.
    List,
}

#[derive(Subcommand, Debug)]
pub enum CreditCmd {
    /// Accrue credits for events in a window under a policy document.
    Accrue {
        #[arg(long)]
        policy: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        actor: ActorArgs,
        #[arg(long)]
        at: Option<String>,
    },
    /// Credit statement for one beneficiary, or totals for all.
    Report {
        #[arg(long)]
        beneficiary: Option<String>,
        #[command(flatten)]
        window: WindowArgs,
    },
}

#[derive(Subcommand, Debug)]
pub enum AuditCmd {
    /// Evidence coverage matrix, from case codings or from the ledger.
    Evidence {
        /// Case coding document; without it, contributions are grouped by id.
        #[arg(long)]
        coding: Option<PathBuf>,
    },
    /// Coverage of a single contribution.
    Contribution {
        #[arg(long)]
        id: String,
    },
    /// Linkage completeness of changes.
    Linkage {
        #[arg(long)]
        count_evidence: bool,
    },
    /// Check a release export against the procurement clauses.
    Conformance {
        #[arg(long, conflicts_with = "release")]
        export: Option<PathBuf>,
        /// Build the export from the ledger instead.
        #[arg(long)]
        release: Option<String>,
    },
    /// Changes that use contributions against their consent.
    Consent,
}

#[derive(Subcommand, Debug)]
pub enum GraphCmd {
    /// Edge list: `from`, `kind`, `to`.
    Export,
    /// Links whose target is not in the ledger.
    Dangling,
}

#[derive(Args, Debug)]
pub struct SigningKey {
    /// Shared key file for the keyed-sha256 scheme.
    #[arg(long, requires = "key_ref")]
    pub key_file: Option<PathBuf>,
    #[arg(long, requires = "key_file")]
    pub key_ref: Option<String>,
}

#[derive(Args, Debug)]
pub struct ActorArgs {
    #[arg(long, value_parser = parse_term::<ActorRole>)]
    pub role: Option<ActorRole>,
    #[arg(long)]
    pub pseudonym: Option<String>,
    #[arg(long)]
    pub steward_org: Option<String>,
}

#[derive(Args, Debug)]
pub struct WindowArgs {
    /// Inclusive start.
    #[arg(long)]
    pub from: Option<String>,
    /// Exclusive end.
    #[arg(long)]
    pub to: Option<String>,
}

fn parse_term<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

/// Result of one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub text: String,
    pub doc: Option<Value>,
    pub table: Option<ResultTable>,
}

impl Outcome {
    fn new(code: i32, text: impl Into<String>) -> Self {
        Outcome {
            code,
            text: text.into(),
            ..Outcome::default()
        }
    }

    fn doc(mut self, v: impl Serialize) -> Self {
        self.doc = Some(serde_json::to_value(v).expect("outputs serialize"));
        self
    }

    fn table(mut self, t: ResultTable) -> Self {
        self.table = Some(t);
        self
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(m: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: m.into(),
        }
    }

    fn invalid(m: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: m.into(),
        }
    }

    fn io(m: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: m.into(),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::CorruptLine { .. } => CliError {
                code: EXIT_VERIFY,
                message: e.to_string(),
            },
            _ => CliError::io(e.to_string()),
        }
    }
}

impl From<AppendError> for CliError {
    fn from(e: AppendError) -> Self {
        match e {
            AppendError::StorageFailure(_) => CliError::io(e.to_string()),
            _ => CliError::invalid(e.to_string()),
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::invalid(e.to_string())
            }
        }
    )*};
}
invalid_from!(
    crate::harness::HarnessError,
    crate::governance::GovernanceError,
    crate::audit::AuditError,
    crate::query::QueryError,
    crate::graph::GraphError,
    crate::model::ParseError,
    crate::example::ExampleError
);

type CmdResult = Result<Outcome, CliError>;

/// Runs the CLI on `args` (including the program name), writing to the
/// given streams. Returns the exit code.
pub fn run_with(args: Vec<String>, out: &mut dyn io::Write, err: &mut dyn io::Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    let format = cli.format;
    match dispatch(cli) {
        Ok(o) => {
            let body = match format {
                Format::Text => Some(o.text),
                Format::Csv => o.table.as_ref().map(ResultTable::to_csv),
                Format::Doc => o
                    .doc
                    .as_ref()
                    .map(|d| serde_json::to_string_pretty(d).expect("json") + "\n"),
            };
            match body {
                Some(b) => {
                    let _ = write!(out, "{b}");
                    if format == Format::Text && !b.is_empty() && !b.ends_with('\n') {
                        let _ = writeln!(out);
                    }
                    o.code
                }
                None => {
                    let _ = writeln!(err, "error: this command has no {format:?} output");
                    EXIT_USAGE
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let args = std::env::args().collect();
    run_with(args, &mut io::stdout().lock(), &mut io::stderr().lock())
}

fn ledger_path(p: &Option<PathBuf>) -> Result<&Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::usage("no ledger given (use --ledger or PLEDGER_LEDGER)"))
}

fn snapshot(p: &Option<PathBuf>) -> Result<Vec<EntryEnvelope>, CliError> {
    let path = ledger_path(p)?;
    if !path.exists() {
        return Err(CliError::io(format!("{}: no such ledger", path.display())));
    }
    Ok(read_all(path)?)
}

fn open(p: &Option<PathBuf>) -> Result<Ledger, CliError> {
    Ok(Ledger::open(ledger_path(p)?)?)
}

fn id(s: &str) -> Result<LedgerId, CliError> {
    LedgerId::parse(s).map_err(|e| CliError::usage(e.to_string()))
}

fn time(s: &Option<String>) -> Result<Timestamp, CliError> {
    match s {
        Some(s) => Timestamp::parse(s).map_err(|e| CliError::usage(e.to_string())),
        None => Ok(Timestamp::now()),
    }
}

fn window(w: &WindowArgs) -> Result<Window, CliError> {
    let all = Window::all();
    let parse = |s: &Option<String>, d| match s {
        Some(s) => Timestamp::parse(s).map_err(|e| CliError::usage(e.to_string())),
        None => Ok(d),
    };
    Ok(Window {
        start: parse(&w.from, all.start)?,
        end: parse(&w.to, all.end)?,
    })
}

fn actor(a: &ActorArgs, default_role: ActorRole, default_pseudonym: &str) -> Result<ActorRef, CliError> {
    let steward_org = a.steward_org.as_deref().map(id).transpose()?;
    let pseudonym = match (&a.pseudonym, &steward_org) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(_)) => None,
        (None, None) => Some(default_pseudonym.to_string()),
    };
    Ok(ActorRef {
        role: a.role.clone().unwrap_or(default_role),
        pseudonym,
        steward_org,
    })
}

fn read_input(p: &Path) -> Result<String, CliError> {
    if p == Path::new("-") {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::io(format!("stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))
}

fn read_json(p: &Path) -> Result<Value, CliError> {
    let text = read_input(p)?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))
}

/// Entry documents from a file: one per line, or a single (possibly
/// pretty-printed) document.
fn read_entries(p: &Path) -> Result<Vec<EntryEnvelope>, CliError> {
    let text = read_input(p)?;
    if let Ok(e) = parse_entry(&text) {
        return Ok(vec![e]);
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        out.push(parse_entry(line).map_err(|e| CliError::invalid(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

fn release(s: &str) -> Result<(LedgerId, String), CliError> {
    let (a, v) = s
        .rsplit_once('@')
        .ok_or_else(|| CliError::usage("release must be <artifactId>@<version>"))?;
    Ok((id(a)?, v.to_string()))
}

struct KeyedSigner {
    scheme: KeyedDigestScheme,
}

impl Signer for KeyedSigner {
    fn sign(&self, preimage: &[u8]) -> Result<SignatureRecord, String> {
        self.scheme.sign(preimage)
    }
}

/// Keyed-digest verifier holding several keys, selected by key reference.
struct KeyRing(BTreeMap<String, KeyedDigestScheme>);

impl SignatureVerifier for KeyRing {
    fn verify(&self, preimage: &[u8], signature: &SignatureRecord) -> bool {
        self.0
            .get(&signature.key_ref)
            .is_some_and(|k| k.verify(preimage, signature))
    }
}

fn read_key(p: &Path) -> Result<Vec<u8>, CliError> {
    let bytes = fs::read(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
    Ok(String::from_utf8(bytes.clone())
        .map(|s| s.trim_end().as_bytes().to_vec())
        .unwrap_or(bytes))
}

fn signer(k: &SigningKey, role: ActorRef) -> Result<Option<KeyedSigner>, CliError> {
    match (&k.key_file, &k.key_ref) {
        (Some(f), Some(r)) => Ok(Some(KeyedSigner {
            scheme: KeyedDigestScheme::new(r, &read_key(f)?, role),
        })),
        _ => Ok(None),
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let lp = &cli.ledger;
    match cli.command {
        Command::Append { file, key } => cmd_append(lp, &file, &key),
        Command::Validate { file } => cmd_validate(&file),
        Command::Verify { keys } => cmd_verify(lp, &keys),
        Command::Head => cmd_head(lp),
        Command::Query {
            text,
            file,
            saved,
            params,
            list,
        } => cmd_query(lp, text, file, saved, params, list),
        Command::Harness(c) => cmd_harness(lp, c),
        Command::Gate(GateCmd::Check {
            capability,
            boundary,
            version,
            artifact,
            now,
        }) => cmd_gate(lp, &capability, &boundary, &version, artifact, &now),
        Command::Voucher(c) => cmd_voucher(lp, c),
        Command::Credit(c) => cmd_credit(lp, c),
        Command::Audit(c) => cmd_audit(lp, c),
        Command::Export { release: r, out, now } => cmd_export(lp, &r, out, &now),
        Command::Redact {
            target,
            reason,
            actor: a,
            id: tomb,
            at,
            key,
        } => {
            let mut ledger = open(lp)?;
            let target = id(&target)?;
            let who = actor(&a, ActorRole::CommunitySteward, "steward")?;
            let tomb = match tomb {
                Some(t) => id(&t)?,
                None => ledger.state().next_id(EntryType::Tombstone, target.group()),
            };
            let s = signer(&key, who.clone())?;
            let e = ledger.redact(&target, reason, who, tomb, time(&at)?, s.as_ref().map(|s| s as &dyn Signer))?;
            let hash = e.integrity.as_ref().map(|i| i.hash.clone()).unwrap_or_default();
            Ok(Outcome::new(EXIT_OK, format!("redacted {target} by {} ({hash})", e.id))
                .doc(json!({"tombstone": e.id, "target": target, "hash": hash})))
        }
        Command::Trace { from } => {
            let entries = snapshot(lp)?;
            let g = build_graph(&entries);
            let t = trace_influence(&g, &id(&from)?)?;
            let rows: Vec<Vec<String>> = t
                .paths
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    vec![
                        (i + 1).to_string(),
                        p.iter().map(ToString::to_string).collect::<Vec<_>>().join(" -> "),
                    ]
                })
                .collect();
            let table = ResultTable {
                columns: vec!["path".into(), "nodes".into()],
                rows,
            };
            let mut text = if t.paths.is_empty() {
                format!("no influence path from {from} reaches a deployment\n")
            } else {
                table.to_text()
            };
            if t.truncated {
                text.push_str("(paths longer than the bound were cut)\n");
            }
            Ok(Outcome::new(EXIT_OK, text).doc(&t).table(table))
        }
        Command::Graph(GraphCmd::Export) => {
            let entries = snapshot(lp)?;
            let g = build_graph(&entries);
            let table = ResultTable {
                columns: vec!["from".into(), "kind".into(), "to".into()],
                rows: g
                    .edge_multiset()
                    .into_iter()
                    .map(|e| vec![e.from.to_string(), e.kind.as_str().to_string(), e.to])
                    .collect(),
            };
            Ok(Outcome::new(EXIT_OK, g.export_edge_list()).doc(g.edge_multiset()).table(table))
        }
        Command::Graph(GraphCmd::Dangling) => {
            let entries = snapshot(lp)?;
            let g = build_graph(&entries);
            let table = ResultTable {
                columns: vec!["entry".into(), "kind".into(), "target".into()],
                rows: g
                    .dangling()
                    .iter()
                    .map(|d| vec![d.entry_id.to_string(), d.kind.as_str().to_string(), d.target_id.clone()])
                    .collect(),
            };
            Ok(Outcome::new(EXIT_OK, table.to_text()).doc(g.dangling()).table(table))
        }
        Command::Demo { stage } => {
            let path = ledger_path(lp)?;
            if path.exists() && fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false) {
                return Err(CliError::usage(format!("{} is not empty", path.display())));
            }
            let mut ledger = Ledger::open(path)?;
            let stage = match stage {
                DemoStage::Paused => Stage::Paused,
                DemoStage::Complete => Stage::Complete,
            };
            example::build(&mut ledger, stage)?;
            Ok(Outcome::new(
                EXIT_OK,
                format!("wrote {} entries, head {}", ledger.entries().len(), ledger.head().unwrap_or("")),
            )
            .doc(json!({"entries": ledger.entries().len(), "head": ledger.head()})))
        }
    }
}

fn cmd_append(lp: &Option<PathBuf>, file: &Path, key: &SigningKey) -> CmdResult {
    let entries = read_entries(file)?;
    let mut ledger = open(lp)?;
    let mut appended = Vec::new();
    for e in entries {
        let s = signer(key, e.actor.clone())?;
        let (i, sealed) = ledger
            .append(e, s.as_ref().map(|s| s as &dyn Signer))
            .map_err(|err| {
                let mut ce = CliError::from(err);
                if !appended.is_empty() {
                    ce.message = format!("{} (after appending {} entries)", ce.message, appended.len());
                }
                ce
            })?;
        appended.push(json!({
            "index": i,
            "id": sealed.id,
            "hash": sealed.integrity.as_ref().map(|x| x.hash.clone()),
        }));
    }
    let text = appended
        .iter()
        .map(|a| format!("{}  {}  {}", a["index"], a["id"].as_str().unwrap_or(""), a["hash"].as_str().unwrap_or("")))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::new(EXIT_OK, text).doc(json!({"appended": appended, "head": ledger.head()})))
}

fn cmd_validate(file: &Path) -> CmdResult {
    let entries = read_entries(file)?;
    let mut code = EXIT_OK;
    let mut text = String::new();
    let mut docs = Vec::new();
    for e in &entries {
        let r = validate_structure(e);
        if r.is_valid() {
            text.push_str(&format!("{}: valid\n", e.id));
        } else {
            code = EXIT_INVALID;
            for v in &r.violations {
                text.push_str(&format!("{}: {v}\n", e.id));
            }
        }
        docs.push(json!({"id": e.id, "violations": r.violations}));
    }
    let table = ResultTable {
        columns: vec!["id".into(), "path".into(), "rule".into(), "message".into()],
        rows: entries
            .iter()
            .flat_map(|e| {
                validate_structure(e)
                    .violations
                    .into_iter()
                    .map(|v| vec![e.id.to_string(), v.path, v.rule.to_string(), v.message])
                    .collect::<Vec<_>>()
            })
            .collect(),
    };
    Ok(Outcome::new(code, text).doc(docs).table(table))
}

fn cmd_verify(lp: &Option<PathBuf>, keys: &[String]) -> CmdResult {
    let entries = snapshot(lp)?;
    let mut ring = BTreeMap::new();
    for k in keys {
        let (r, f) = k
            .split_once('=')
            .ok_or_else(|| CliError::usage("--key takes <keyRef>=<key file>"))?;
        let role = ActorRef::pseudonymous(ActorRole::Auditor, "verifier");
        ring.insert(r.to_string(), KeyedDigestScheme::new(r, &read_key(Path::new(f))?, role));
    }
    let known: Vec<String> = ring.keys().cloned().collect();
    let mut registry = VerifierRegistry::new();
    registry.register(KeyedDigestScheme::SCHEME, Box::new(KeyRing(ring)));
    let chain = verify_chain(&entries);
    // A signature under a key that was not supplied cannot be checked.
    let sigs: Vec<SignatureVerdict> = verify_signatures(&entries, &registry)
        .into_iter()
        .zip(&entries)
        .map(|(v, e)| {
            let sig = e.integrity.as_ref().and_then(|i| i.signature.as_ref());
            match sig {
                Some(s) if s.scheme == KeyedDigestScheme::SCHEME && !known.contains(&s.key_ref) => {
                    SignatureVerdict::Unverifiable
                }
                _ => v,
            }
        })
        .collect();
    let count = |v| sigs.iter().filter(|s| **s == v).count();
    let invalid: Vec<&LedgerId> = entries
        .iter()
        .zip(&sigs)
        .filter(|(_, s)| **s == SignatureVerdict::Invalid)
        .map(|(e, _)| &e.id)
        .collect();
    let head_file = read_head(ledger_path(lp)?).ok().flatten();
    let computed = entries.last().and_then(|e| e.integrity.as_ref()).map(|i| i.hash.clone());
    let head_ok = head_file.is_none() || head_file == computed;

    let mut text = if chain.valid {
        format!("chain valid, {} entries\n", entries.len())
    } else {
        let i = chain.first_broken_index.unwrap_or_default();
        format!(
            "chain broken at index {i} ({}): {}\n",
            entries.get(i).map(|e| e.id.to_string()).unwrap_or_default(),
            chain.failure_kind.map(|k| k.to_string()).unwrap_or_default()
        )
    };
    text.push_str(&format!(
        "signatures: {} valid, {} invalid, {} unverifiable, {} absent\n",
        count(SignatureVerdict::Valid),
        count(SignatureVerdict::Invalid),
        count(SignatureVerdict::Unverifiable),
        count(SignatureVerdict::Absent)
    ));
    for id in &invalid {
        text.push_str(&format!("invalid signature: {id}\n"));
    }
    if !head_ok {
        text.push_str("head file does not match the last entry\n");
    }
    let ok = chain.valid && invalid.is_empty() && head_ok;
    let doc = json!({
        "chain": chain,
        "entries": entries.len(),
        "head": computed,
        "headFileMatches": head_ok,
        "signatures": entries.iter().zip(&sigs).map(|(e, s)| json!({"id": e.id, "verdict": s})).collect::<Vec<_>>(),
    });
    Ok(Outcome::new(if ok { EXIT_OK } else { EXIT_VERIFY }, text).doc(doc))
}

fn cmd_head(lp: &Option<PathBuf>) -> CmdResult {
    let entries = snapshot(lp)?;
    let head = entries.last().and_then(|e| e.integrity.as_ref()).map(|i| i.hash.clone());
    Ok(Outcome::new(EXIT_OK, head.clone().unwrap_or_default())
        .doc(json!({"head": head, "entries": entries.len()})))
}

fn cmd_query(
    lp: &Option<PathBuf>,
    text: Option<String>,
    file: Option<PathBuf>,
    saved: Option<String>,
    params: Vec<String>,
    list: bool,
) -> CmdResult {
    if list {
        let table = ResultTable {
            columns: vec!["name".into(), "params".into(), "summary".into()],
            rows: saved_queries()
                .iter()
                .map(|q| vec![q.name.to_string(), q.params.join(" "), q.summary.to_string()])
                .collect(),
        };
        return Ok(Outcome::new(EXIT_OK, table.to_text()).doc(&table).table(table));
    }
    let entries = snapshot(lp)?;
    let g = build_graph(&entries);
    let table = if let Some(name) = saved {
        let mut map = BTreeMap::new();
        for p in params {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::usage("--param takes name=value"))?;
            map.insert(k.to_string(), v.to_string());
        }
        run_saved_query(&name, &map, &g)?
    } else {
        let src = match (text, file) {
            (Some(t), _) => t,
            (None, Some(f)) => read_input(&f)?,
            (None, None) => return Err(CliError::usage("give query text, --file or --saved")),
        };
        evaluate(&parse_query(&src)?, &g)
    };
    let rows: Vec<BTreeMap<&str, &str>> = table
        .rows
        .iter()
        .map(|r| table.columns.iter().map(String::as_str).zip(r.iter().map(String::as_str)).collect())
        .collect();
    let doc = json!({"columns": table.columns, "rows": rows});
    Ok(Outcome::new(EXIT_OK, table.to_text()).doc(doc).table(table))
}

fn cmd_harness(lp: &Option<PathBuf>, c: HarnessCmd) -> CmdResult {
    match c {
        HarnessCmd::Run {
            artifact,
            version,
            checkpoint,
            results,
            evaluator,
            at,
        } => {
            let bundle = ResultsBundle::from_dir(&results)?;
            let mut ledger = open(lp)?;
            let who = ActorRef::pseudonymous(ActorRole::Evaluator, &evaluator);
            let o = run_suite(&mut ledger, checkpoint, &id(&artifact)?, &version, &bundle, &who, time(&at)?)?;
            let table = ResultTable {
                columns: vec!["test".into(), "decision".into(), "run".into()],
                rows: o
                    .decisions
                    .iter()
                    .zip(&o.runs)
                    .map(|((t, d), r)| vec![t.to_string(), d.to_string(), r.to_string()])
                    .collect(),
            };
            let text = format!("{}suite: {}\n", table.to_text(), o.verdict);
            Ok(Outcome::new(o.verdict.exit_code(), text).doc(&o).table(table))
        }
        HarnessCmd::Regressions => {
            let entries = snapshot(lp)?;
            let events = detect_regressions(&entries);
            let table = ResultTable {
                columns: vec!["test".into(), "artifact".into(), "from".into(), "to".into(), "failingRun".into()],
                rows: events
                    .iter()
                    .map(|e| {
                        vec![
                            e.test_id.to_string(),
                            e.artifact_id.to_string(),
                            e.from_version.clone(),
                            e.to_version.clone(),
                            e.failing_run_id.to_string(),
                        ]
                    })
                    .collect(),
            };
            Ok(Outcome::new(EXIT_OK, table.to_text()).doc(&events).table(table))
        }
        HarnessCmd::Triage {
            incident,
            draft,
            actor: a,
            at,
        } => {
            let draft: TestDraft = serde_json::from_value(read_json(&draft)?)
                .map_err(|e| CliError::invalid(format!("test draft: {e}")))?;
            let who = actor(&a, ActorRole::Maintainer, "maintainer")?;
            let mut ledger = open(lp)?;
            let e = triage_incident(&mut ledger, &id(&incident)?, draft, who, time(&at)?)?;
            Ok(Outcome::new(EXIT_OK, format!("recorded {} motivated by {incident}", e.id))
                .doc(json!({"test": e.id, "incident": incident})))
        }
    }
}

fn cmd_gate(
    lp: &Option<PathBuf>,
    capability: &str,
    boundary: &str,
    version: &str,
    artifact: Option<String>,
    now: &Option<String>,
) -> CmdResult {
    let entries = snapshot(lp)?;
    let artifact = match artifact {
        Some(a) => id(&a)?,
        None => {
            let mut candidates: Vec<&LedgerId> = entries
                .iter()
                .filter_map(|e| e.artifact())
                .filter(|a| {
                    a.version == version
                        && !a.artifact_kind.is_deployment()
                        && a.capability.as_deref().is_none_or(|c| c == capability)
                })
                .map(|a| &a.artifact)
                .collect();
            candidates.dedup();
            match candidates.as_slice() {
                [one] => (*one).clone(),
                [] => return Err(CliError::usage(format!("no artifact declares version {version}; pass --artifact"))),
                _ => return Err(CliError::usage(format!("several artifacts declare version {version}; pass --artifact"))),
            }
        }
    };
    let d = gate_check(&entries, capability, &artifact, version, boundary, time(now)?);
    let mut text = format!(
        "{} {capability} on {artifact}@{version} in {boundary}\n",
        if d.allowed { "allow" } else { "deny" }
    );
    for r in &d.reasons {
        text.push_str(&format!(
            "  {}{}{}\n",
            r.reason_kind,
            r.voucher_id.as_ref().map(|v| format!(" {v}")).unwrap_or_default(),
            r.test_id.as_ref().map(|t| format!(" test {t}")).unwrap_or_default()
        ));
    }
    for v in &d.expired_ignored {
        text.push_str(&format!("  expired voucher ignored {v}\n"));
    }
    let table = ResultTable {
        columns: vec!["allowed".into(), "reasonKind".into(), "voucherId".into(), "testId".into()],
        rows: d
            .reasons
            .iter()
            .map(|r| {
                vec![
                    d.allowed.to_string(),
                    r.reason_kind.to_string(),
                    r.voucher_id.as_ref().map(ToString::to_string).unwrap_or_default(),
                    r.test_id.as_ref().map(ToString::to_string).unwrap_or_default(),
                ]
            })
            .collect(),
    };
    Ok(Outcome::new(d.exit_code(), text).doc(&d).table(table))
}

fn cmd_voucher(lp: &Option<PathBuf>, c: VoucherCmd) -> CmdResult {
    match c {
        VoucherCmd::Issue { id: vid, file, at, key } => {
            let payload: VoucherPayload = serde_json::from_value(read_json(&file)?)
                .map_err(|e| CliError::invalid(format!("voucher: {e}")))?;
            let s = signer(&key, payload.steward.clone())?;
            let mut ledger = open(lp)?;
            let e = issue_voucher(&mut ledger, id(&vid)?, payload, time(&at)?, s.as_ref().map(|s| s as &dyn Signer))?;
            Ok(Outcome::new(EXIT_OK, format!("issued {}", e.id)).doc(json!({"voucher": e.id, "status": "issued"})))
        }
        VoucherCmd::Transition { id: vid, to, at, key } => {
            let mut ledger = open(lp)?;
            let lineage = id(&vid)?.lineage();
            let steward = ledger
                .state()
                .voucher_head(&lineage)
                .and_then(|h| h.voucher())
                .map(|v| v.steward.clone());
            let s = match steward {
                Some(st) => signer(&key, st)?,
                None => None,
            };
            let e = transition_voucher(&mut ledger, &lineage, to, time(&at)?, s.as_ref().map(|s| s as &dyn Signer))?;
            Ok(Outcome::new(EXIT_OK, format!("{} -> {to}", e.id)).doc(json!({"voucher": e.id, "status": to})))
        }
        VoucherCmd::List => {
            let entries = snapshot(lp)?;
            let table = ResultTable {
                columns: vec!["voucher".into(), "revision".into(), "action".into(), "status".into(), "capability".into(), "boundary".into()],
                rows: voucher_heads(&entries)
                    .into_iter()
                    .map(|h| {
                        let v = h.voucher().expect("voucher");
                        vec![
                            h.id.lineage().to_string(),
                            h.id.to_string(),
                            v.action.to_string(),
                            v.status.to_string(),
                            v.capability.clone(),
                            v.boundary.clone(),
                        ]
                    })
                    .collect(),
            };
            Ok(Outcome::new(EXIT_OK, table.to_text()).doc(&table).table(table))
        }
    }
}

fn cmd_credit(lp: &Option<PathBuf>, c: CreditCmd) -> CmdResult {
    match c {
        CreditCmd::Accrue {
            policy,
            window: w,
            actor: a,
            at,
        } => {
            let policy: CreditPolicy = serde_json::from_value(read_json(&policy)?)
                .map_err(|e| CliError::invalid(format!("credit policy: {e}")))?;
            let who = actor(&a, ActorRole::Auditor, "credit-accrual")?;
            let mut ledger = open(lp)?;
            let r = accrue_credits(&mut ledger, &policy, window(&w)?, &who, time(&at)?, None)?;
            let mut text = format!(
                "credited {} entries, {} units (policy {})\n",
                r.credited.len(),
                r.units,
                r.policy_ref
            );
            for s in &r.suppressed {
                text.push_str(&format!(
                    "  suppressed {} {}{}: {}\n",
                    s.kind,
                    s.trigger_id,
                    s.beneficiary.as_ref().map(|b| format!(" for {b}")).unwrap_or_default(),
                    s.reason
                ));
            }
            Ok(Outcome::new(EXIT_OK, text).doc(&r))
        }
        CreditCmd::Report { beneficiary, window: w } => {
            let entries = snapshot(lp)?;
            let w = window(&w)?;
            match beneficiary {
                Some(b) => {
                    let s = credit_report(&entries, &b, w);
                    let table = ResultTable {
                        columns: vec!["credit".into(), "kind".into(), "trigger".into(), "units".into(), "policyRef".into()],
                        rows: s
                            .lines
                            .iter()
                            .map(|l| {
                                vec![
                                    l.credit_id.to_string(),
                                    l.kind.to_string(),
                                    l.trigger_id.to_string(),
                                    l.units.to_string(),
                                    l.policy_ref.clone(),
                                ]
                            })
                            .collect(),
                    };
                    let text = format!("{}total {} units for {b}\n", table.to_text(), s.units);
                    Ok(Outcome::new(EXIT_OK, text).doc(&s).table(table))
                }
                None => {
                    let statements: Vec<_> = beneficiaries(&entries)
                        .into_iter()
                        .map(|b| credit_report(&entries, &b, w))
                        .collect();
                    let table = ResultTable {
                        columns: vec!["beneficiary".into(), "credits".into(), "units".into()],
                        rows: statements
                            .iter()
                            .map(|s| vec![s.beneficiary.clone(), s.lines.len().to_string(), s.units.to_string()])
                            .collect(),
                    };
                    Ok(Outcome::new(EXIT_OK, table.to_text()).doc(&statements).table(table))
                }
            }
        }
    }
}

fn conformance_outcome(export: &Value) -> CmdResult {
    let r = check_export_conformance(export)?;
    let mut text = String::new();
    for (clause, res) in &r.clause_results {
        text.push_str(&format!("{}: {}\n", clause.key(), if res.pass { "pass" } else { "fail" }));
        for d in &res.details {
            text.push_str(&format!("  {d}\n"));
        }
    }
    let overall = match r.overall {
        Overall::Conformant => "conformant",
        Overall::MaterialNonConformance => "materialNonConformance",
    };
    text.push_str(&format!("overall: {overall}\n"));
    let table = ResultTable {
        columns: vec!["clause".into(), "result".into(), "details".into()],
        rows: r
            .clause_results
            .iter()
            .map(|(c, res)| {
                vec![
                    c.key().to_string(),
                    if res.pass { "pass" } else { "fail" }.to_string(),
                    res.details.join("; "),
                ]
            })
            .collect(),
    };
    let code = if r.overall == Overall::Conformant { EXIT_OK } else { EXIT_INVALID };
    Ok(Outcome::new(code, text).doc(&r).table(table))
}

fn cmd_audit(lp: &Option<PathBuf>, c: AuditCmd) -> CmdResult {
    match c {
        AuditCmd::Evidence { coding } => {
            let m = match coding {
                Some(f) => audit_corpus(&parse_case_codings(&read_json(&f)?)?),
                None => {
                    let entries = snapshot(lp)?;
                    audit_ledger(&build_graph(&entries), None)
                }
            };
            let doc: Vec<Value> = m
                .rows
                .iter()
                .map(|r| {
                    let mut o = serde_json::Map::new();
                    o.insert("case".into(), r.case.clone().into());
                    for (col, cell) in EvidenceColumn::ALL.iter().zip(r.cells) {
                        o.insert(col.key().into(), serde_json::to_value(cell).expect("level"));
                    }
                    Value::Object(o)
                })
                .collect();
            let mut o = Outcome::new(EXIT_OK, m.to_text()).doc(json!({"cases": doc}));
            let csv = m.to_csv();
            let mut rdr = csv::Reader::from_reader(csv.as_bytes());
            o.table = Some(ResultTable {
                columns: rdr.headers().expect("header").iter().map(str::to_string).collect(),
                rows: rdr
                    .records()
                    .map(|r| r.expect("row").iter().map(str::to_string).collect())
                    .collect(),
            });
            Ok(o)
        }
        AuditCmd::Contribution { id: cid } => {
            let entries = snapshot(lp)?;
            let g = build_graph(&entries);
            let cid = id(&cid)?;
            let node = g
                .node(&cid)
                .ok_or_else(|| CliError::usage(format!("unknown entry {cid}")))?;
            let entry = g
                .visible_entry(node)
                .ok_or_else(|| CliError::invalid(format!("{cid} is redacted")))?;
            let cov = audit_contribution(entry, Some(&g))?;
            let table = ResultTable {
                columns: vec!["element".into(), "coverage".into()],
                rows: EvidenceColumn::ALL
                    .iter()
                    .zip(cov)
                    .map(|(c, l)| vec![c.key().to_string(), l.label().to_string()])
                    .collect(),
            };
            let doc: BTreeMap<&str, _> = EvidenceColumn::ALL.iter().map(|c| c.key()).zip(cov).collect();
            Ok(Outcome::new(EXIT_OK, table.to_text()).doc(doc).table(table))
        }
        AuditCmd::Linkage { count_evidence } => {
            let entries = snapshot(lp)?;
            let r = linkage_with(&build_graph(&entries), LinkageOptions { count_evidence });
            let pairs = [
                ("totalChanges", r.total_changes.to_string()),
                ("changesWithContribution", r.changes_with_contribution.to_string()),
                ("changesWithTest", r.changes_with_test.to_string()),
                ("changesFullyLinked", r.changes_fully_linked.to_string()),
                ("testsWithRun", r.tests_with_run.to_string()),
                ("completenessRatio", format!("{:.4}", r.completeness_ratio)),
                ("danglingLinks", r.dangling.len().to_string()),
            ];
            let table = ResultTable {
                columns: vec!["metric".into(), "value".into()],
                rows: pairs.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect(),
            };
            Ok(Outcome::new(EXIT_OK, table.to_text()).doc(&r).table(table))
        }
        AuditCmd::Conformance { export, release: r } => {
            let doc = match (export, r) {
                (Some(f), _) => read_json(&f)?,
                (None, Some(r)) => {
                    let (a, v) = release(&r)?;
                    build_export(&snapshot(lp)?, &a, &v, Timestamp::now())?
                }
                (None, None) => return Err(CliError::usage("give --export or --release")),
            };
            conformance_outcome(&doc)
        }
        AuditCmd::Consent => {
            let entries = snapshot(lp)?;
            let v = flag_consent_violations(&build_graph(&entries));
            let table = ResultTable {
                columns: vec!["change".into(), "contribution".into(), "violation".into()],
                rows: v
                    .iter()
                    .map(|x| {
                        vec![
                            x.change_id.to_string(),
                            x.contribution_id.to_string(),
                            serde_json::to_value(x.violation)
                                .ok()
                                .and_then(|s| s.as_str().map(str::to_string))
                                .unwrap_or_default(),
                        ]
                    })
                    .collect(),
            };
            let text = if v.is_empty() {
                "no consent violations\n".to_string()
            } else {
                table.to_text()
            };
            let code = if v.is_empty() { EXIT_OK } else { EXIT_INVALID };
            Ok(Outcome::new(code, text).doc(&v).table(table))
        }
    }
}

fn cmd_export(lp: &Option<PathBuf>, r: &str, out: Option<PathBuf>, now: &Option<String>) -> CmdResult {
    let (artifact, version) = release(r)?;
    let entries = snapshot(lp)?;
    let doc = build_export(&entries, &artifact, &version, time(now)?)?;
    let pretty = serde_json::to_string_pretty(&doc).expect("json") + "\n";
    match out {
        Some(p) => {
            fs::write(&p, &pretty).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
            let n = doc["entries"].as_array().map_or(0, Vec::len);
            Ok(Outcome::new(EXIT_OK, format!("wrote {} ({n} entries)", p.display())).doc(doc))
        }
        None => Ok(Outcome::new(EXIT_OK, pretty).doc(doc)),
    }
}
