//! Append-only NDJSON ledger file (`*.pledger`) with a companion head
//! digest file (`*.pledger.head`).
//!
//! One sealed entry per line, in canonical serialization. Lines are never
//! rewritten; redaction appends a tombstone and the read API hides the
//! target payload.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::integrity::{seal, SealError, Signer};
use crate::model::{
    parse_entry, serialize_entry, validate_structure, ActorRef, ActorRole, EntryEnvelope,
    EntryType, LedgerId, ParseError, Payload, Timestamp, TombstoneReason, ValidationReport,
    VoucherStatus,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TombstonePayload {
    pub target_id: LedgerId,
    pub reason: TombstoneReason,
    pub authorization: ActorRef,
    /// Integrity hash of the redacted entry.
    pub retained_hash: String,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("line {line}: {source}")]
    CorruptLine { line: usize, source: ParseError },
    #[error("ledger is locked by another writer: {0}")]
    Locked(PathBuf),
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, thiserror::Error)]
pub enum AppendError {
    #[error("duplicate id {0}")]
    DuplicateId(LedgerId),
    #[error("structural validation failed:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error("{rule}: {message}")]
    Rejected { rule: &'static str, message: String },
    #[error("illegal voucher transition {from} -> {to} for {lineage}")]
    IllegalTransition {
        lineage: LedgerId,
        from: VoucherStatus,
        to: VoucherStatus,
    },
    #[error("unknown redaction target {0}")]
    UnknownTarget(LedgerId),
    #[error("role {0} may not perform this action")]
    UnauthorizedRole(ActorRole),
    #[error(transparent)]
    Seal(#[from] SealError),
    #[error("storage failure, ledger unchanged: {0}")]
    StorageFailure(io::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Companion head-digest path: `<ledger>.head`.
pub fn head_path(ledger: &Path) -> PathBuf {
    let mut s = ledger.as_os_str().to_os_string();
    s.push(".head");
    PathBuf::from(s)
}

/// Reads every entry in file order. A malformed or torn line yields its
/// 1-based line number.
pub fn read_all(path: &Path) -> Result<Vec<EntryEnvelope>, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_lines(&bytes)
}

fn parse_lines(bytes: &[u8]) -> Result<Vec<EntryEnvelope>, StoreError> {
    let mut out = Vec::new();
    let mut rest = bytes;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let (line, torn) = match rest.iter().position(|b| *b == b'\n') {
            Some(n) => {
                let l = &rest[..n];
                rest = &rest[n + 1..];
                (l, false)
            }
            None => {
                let l = rest;
                rest = &[];
                (l, true)
            }
        };
        let corrupt = |source| StoreError::CorruptLine {
            line: line_no,
            source,
        };
        if torn {
            return Err(corrupt(ParseError::MalformedDocument(
                "line is not newline-terminated (torn write)".into(),
            )));
        }
        let text = std::str::from_utf8(line)
            .map_err(|e| corrupt(ParseError::MalformedDocument(e.to_string())))?;
        out.push(parse_entry(text).map_err(corrupt)?);
    }
    Ok(out)
}

/// Truncates a torn or unparsable final line. Earlier bytes are never
/// touched; returns the removed line number, if any.
pub fn recover_torn_tail(path: &Path) -> Result<Option<usize>, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match parse_lines(&bytes) {
        Ok(_) => Ok(None),
        Err(StoreError::CorruptLine { line, source }) => {
            let ends: Vec<usize> = bytes
                .iter()
                .enumerate()
                .filter(|(_, b)| **b == b'\n')
                .map(|(i, _)| i + 1)
                .collect();
            let total_lines = ends.len() + usize::from(bytes.last() != Some(&b'\n'));
            if line != total_lines {
                return Err(StoreError::CorruptLine { line, source });
            }
            let keep = if line == 1 { 0 } else { ends[line - 2] };
            let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
            f.set_len(keep as u64).map_err(io_err(path))?;
            f.sync_all().map_err(io_err(path))?;
            Ok(Some(line))
        }
        Err(e) => Err(e),
    }
}

/// What a reader may see of an entry's payload.
#[derive(Debug, PartialEq)]
pub enum PayloadAccess<'a> {
    Visible(&'a Payload),
    Redacted {
        tombstone: &'a LedgerId,
        retained_hash: &'a str,
    },
}

/// In-memory state shared by the writer and snapshots.
#[derive(Debug, Clone, Default)]
pub struct LedgerState {
    entries: Vec<EntryEnvelope>,
    index: HashMap<LedgerId, usize>,
    redactions: HashMap<LedgerId, usize>,
}

impl LedgerState {
    pub fn from_entries(entries: Vec<EntryEnvelope>) -> Self {
        let mut s = LedgerState::default();
        for e in entries {
            s.push(e);
        }
        s
    }

    fn push(&mut self, e: EntryEnvelope) {
        let i = self.entries.len();
        if let Some(t) = e.tombstone() {
            self.redactions.insert(t.target_id.clone(), i);
        }
        self.index.entry(e.id.clone()).or_insert(i);
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[EntryEnvelope] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &LedgerId) -> Option<&EntryEnvelope> {
        self.index.get(id).map(|i| &self.entries[*i])
    }

    pub fn position(&self, id: &LedgerId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn head(&self) -> Option<&str> {
        self.entries
            .last()
            .and_then(|e| e.integrity.as_ref())
            .map(|i| i.hash.as_str())
    }

    pub fn is_redacted(&self, id: &LedgerId) -> bool {
        self.redactions.contains_key(id)
    }

    pub fn payload_access(&self, id: &LedgerId) -> Option<PayloadAccess<'_>> {
        let entry = self.get(id)?;
        Some(match self.redactions.get(id) {
            Some(t) => {
                let tomb = &self.entries[*t];
                PayloadAccess::Redacted {
                    tombstone: &tomb.id,
                    retained_hash: &tomb.tombstone().expect("indexed tombstone").retained_hash,
                }
            }
            None => PayloadAccess::Visible(&entry.payload),
        })
    }

    /// Ledger-level admission rules that need the existing entries.
    pub fn check_admissible(&self, entry: &EntryEnvelope) -> Result<(), AppendError> {
        if self.index.contains_key(&entry.id) {
            return Err(AppendError::DuplicateId(entry.id.clone()));
        }
        let report = validate_structure(entry);
        if !report.is_valid() {
            return Err(AppendError::ValidationFailed(report));
        }
        match &entry.payload {
            Payload::Artifact(a) => {
                let clash = self.entries.iter().filter_map(|e| e.artifact()).any(|other| {
                    other.artifact == a.artifact && other.version == a.version
                });
                if clash {
                    return Err(AppendError::Rejected {
                        rule: "artifact.version.unique",
                        message: format!("{}@{} is already declared", a.artifact, a.version),
                    });
                }
            }
            Payload::Change(c) => {
                for ca in &c.changed_artifacts {
                    let declared = self
                        .entries
                        .iter()
                        .filter_map(|e| e.artifact())
                        .any(|a| a.artifact == ca.artifact);
                    if !declared {
                        return Err(AppendError::Rejected {
                            rule: "change.changedArtifacts",
                            message: format!("{} is not a declared artifact", ca.artifact),
                        });
                    }
                }
            }
            Payload::EvaluationRun(r) => {
                let Some(test) = self.get(&r.test_id).and_then(|e| e.test()) else {
                    return Err(AppendError::Rejected {
                        rule: "run.test",
                        message: format!("{} is not a recorded test", r.test_id),
                    });
                };
                let declared = self.entries.iter().any(|e| {
                    e.artifact().is_some_and(|a| a.artifact == r.artifact_id && a.version == r.version)
                        && entry.links.evaluates.contains(&e.id)
                });
                if !declared {
                    return Err(AppendError::Rejected {
                        rule: "run.links",
                        message: format!(
                            "evaluates must name the declared entry of {}@{}",
                            r.artifact_id, r.version
                        ),
                    });
                }
                match crate::harness::decide(&test.measurement, &r.raw_results) {
                    Ok(d) if d == r.decision => {}
                    Ok(d) => {
                        return Err(AppendError::Rejected {
                            rule: "run.decision",
                            message: format!("raw results decide {d}, entry records {}", r.decision),
                        })
                    }
                    Err(e) => {
                        return Err(AppendError::Rejected {
                            rule: "run.decision",
                            message: e.to_string(),
                        })
                    }
                }
            }
            Payload::Voucher(v) => self.check_voucher_transition(entry, v)?,
            Payload::Tombstone(t) => {
                let Some(target) = self.get(&t.target_id) else {
                    return Err(AppendError::UnknownTarget(t.target_id.clone()));
                };
                if target.entry_type() == EntryType::Tombstone {
                    return Err(AppendError::Rejected {
                        rule: "tombstone.target",
                        message: "tombstones cannot be redacted".into(),
                    });
                }
                let retained = target.integrity.as_ref().map(|i| i.hash.as_str());
                if retained != Some(t.retained_hash.as_str()) {
                    return Err(AppendError::Rejected {
                        rule: "tombstone.retainedHash",
                        message: "retainedHash must equal the target's integrity hash".into(),
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Smallest unused `pl:<kind>:<group>:<n>` with `n` past the current
    /// count of entries of that type.
    pub fn next_id(&self, ty: EntryType, group: &str) -> LedgerId {
        let mut n = self.entries.iter().filter(|e| e.entry_type() == ty).count() + 1;
        loop {
            let id = LedgerId::parse(&format!("pl:{}:{group}:{n:04}", ty.id_kind()))
                .expect("allocated ids are well formed");
            if !self.index.contains_key(&id) {
                return id;
            }
            n += 1;
        }
    }

    /// Latest revision of a voucher lineage, in log order.
    pub fn voucher_head(&self, lineage: &LedgerId) -> Option<&EntryEnvelope> {
        self.entries
            .iter()
            .filter(|e| e.voucher().is_some() && &e.id.lineage() == lineage)
            .max_by_key(|e| e.id.revision().unwrap_or(0))
    }

    fn check_voucher_transition(
        &self,
        entry: &EntryEnvelope,
        v: &crate::governance::VoucherPayload,
    ) -> Result<(), AppendError> {
        let lineage = entry.id.lineage();
        match (entry.id.revision(), self.voucher_head(&lineage)) {
            (None, _) => {
                if v.status != VoucherStatus::Issued {
                    return Err(AppendError::IllegalTransition {
                        lineage,
                        from: VoucherStatus::Issued,
                        to: v.status,
                    });
                }
            }
            (Some(_), None) => {
                return Err(AppendError::Rejected {
                    rule: "voucher.lineage",
                    message: format!("no voucher {lineage} to revise"),
                })
            }
            (Some(k), Some(head)) => {
                let prev = head.voucher().expect("voucher head");
                if k != head.id.revision().unwrap_or(0) + 1 {
                    return Err(AppendError::Rejected {
                        rule: "voucher.lineage",
                        message: format!("expected revision {}", head.id.revision().unwrap_or(0) + 1),
                    });
                }
                if prev.capability != v.capability
                    || prev.boundary != v.boundary
                    || prev.action != v.action
                {
                    return Err(AppendError::Rejected {
                        rule: "voucher.lineage",
                        message: "revisions cannot change capability, boundary or action".into(),
                    });
                }
                if !prev.status.can_transition_to(v.status) {
                    return Err(AppendError::IllegalTransition {
                        lineage,
                        from: prev.status,
                        to: v.status,
                    });
                }
            }
        }
        Ok(())
    }
}

/// The single writer of a ledger file. Holds an exclusive advisory lock for
/// its lifetime.
#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
    file: File,
    state: LedgerState,
    len_bytes: u64,
}

impl Ledger {
    /// Opens (creating if absent) and locks a ledger for writing.
    pub fn open(path: impl AsRef<Path>) -> Result<Ledger, StoreError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked(path)),
            Err(fs::TryLockError::Error(e)) => return Err(io_err(&path)(e)),
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let entries = parse_lines(&bytes)?;
        let state = LedgerState::from_entries(entries);
        let head_file = head_path(&path);
        if !head_file.exists() {
            let head = state.head().map(str::to_string);
            write_atomic(&head_file, serialize_head(head).as_bytes()).map_err(io_err(&head_file))?;
        }
        Ok(Ledger {
            len_bytes: bytes.len() as u64,
            state,
            file,
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn entries(&self) -> &[EntryEnvelope] {
        self.state.entries()
    }

    pub fn get(&self, id: &LedgerId) -> Option<&EntryEnvelope> {
        self.state.get(id)
    }

    pub fn head(&self) -> Option<&str> {
        self.state.head()
    }

    /// Seals `entry` onto the current head and appends it durably.
    pub fn append(
        &mut self,
        entry: EntryEnvelope,
        signer: Option<&dyn Signer>,
    ) -> Result<(usize, &EntryEnvelope), AppendError> {
        self.state.check_admissible(&entry)?;
        let sealed = seal(entry, self.state.head(), signer)?;
        let mut line = serialize_entry(&sealed).map_err(SealError::from)?;
        line.push('\n');
        let head = sealed.integrity.as_ref().map(|i| i.hash.clone());
        self.write_line(line.as_bytes(), head)
            .map_err(AppendError::StorageFailure)?;
        self.state.push(sealed);
        let index = self.state.len() - 1;
        Ok((index, &self.state.entries()[index]))
    }

    fn write_line(&mut self, line: &[u8], head: Option<String>) -> io::Result<()> {
        let before = self.len_bytes;
        let result = self
            .file
            .write_all(line)
            .and_then(|_| self.file.sync_data());
        if let Err(e) = result {
            let _ = self.file.set_len(before);
            return Err(e);
        }
        self.len_bytes += line.len() as u64;
        write_atomic(&head_path(&self.path), serialize_head(head).as_bytes())
    }

    /// Appends a tombstone restricting access to `target`'s payload.
    pub fn redact(
        &mut self,
        target: &LedgerId,
        reason: TombstoneReason,
        authorization: ActorRef,
        id: LedgerId,
        created_at: Timestamp,
        signer: Option<&dyn Signer>,
    ) -> Result<&EntryEnvelope, AppendError> {
        let Some(t) = self.get(target) else {
            return Err(AppendError::UnknownTarget(target.clone()));
        };
        if !matches!(authorization.role, ActorRole::CommunitySteward | ActorRole::Auditor) {
            return Err(AppendError::UnauthorizedRole(authorization.role));
        }
        let retained_hash = t
            .integrity
            .as_ref()
            .map(|i| i.hash.clone())
            .unwrap_or_default();
        let entry = EntryEnvelope::new(
            id,
            created_at,
            authorization.clone(),
            Payload::Tombstone(TombstonePayload {
                target_id: target.clone(),
                reason,
                authorization,
                retained_hash,
            }),
        );
        let (_, e) = self.append(entry, signer)?;
        Ok(e)
    }
}

fn serialize_head(head: Option<String>) -> String {
    format!("{}\n", head.unwrap_or_default())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Reads the one-line head digest file; `None` for an empty ledger.
pub fn read_head(ledger: &Path) -> Result<Option<String>, StoreError> {
    let p = head_path(ledger);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let t = text.trim();
    Ok((!t.is_empty()).then(|| t.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrity::verify_chain;
    use crate::model::{ActorRole, ArtifactKind, ArtifactPayload};

    fn artifact(n: usize) -> EntryEnvelope {
        EntryEnvelope::new(
            LedgerId::parse(&format!("pl:artifact:model:v{n}")).unwrap(),
            Timestamp::parse("2025-05-11T09:00:00Z").unwrap().plus_seconds(n as i64),
            ActorRef::pseudonymous(ActorRole::Maintainer, "M1"),
            Payload::Artifact(ArtifactPayload {
                artifact: LedgerId::parse("pl:artifact:model").unwrap(),
                artifact_kind: ArtifactKind::Model,
                version: format!("v{n}"),
                content_ref: format!("https://models.example.org/v{n}"),
                boundary: None,
                capability: None,
            }),
        )
    }

    #[test]
    fn genesis_append_and_head_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pledger");
        let mut l = Ledger::open(&path).unwrap();
        let (i, e) = l.append(artifact(1), None).unwrap();
        assert_eq!(i, 0);
        assert!(e.integrity.as_ref().unwrap().prev_hash.is_none());
        let head = e.integrity.as_ref().unwrap().hash.clone();
        assert_eq!(read_head(&path).unwrap(), Some(head.clone()));
        let (i, e) = l.append(artifact(2), None).unwrap();
        assert_eq!(i, 1);
        assert_eq!(e.integrity.as_ref().unwrap().prev_hash.as_deref(), Some(head.as_str()));
    }

    #[test]
    fn second_writer_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pledger");
        let _w = Ledger::open(&path).unwrap();
        assert!(matches!(Ledger::open(&path), Err(StoreError::Locked(_))));
    }

    #[test]
    fn duplicate_artifact_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut l = Ledger::open(dir.path().join("a.pledger")).unwrap();
        l.append(artifact(1), None).unwrap();
        let mut dup = artifact(1);
        dup.id = LedgerId::parse("pl:artifact:model:v1-again").unwrap();
        assert!(matches!(
            l.append(dup, None),
            Err(AppendError::Rejected { rule: "artifact.version.unique", .. })
        ));
    }

    #[test]
    fn empty_file_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.pledger");
        fs::write(&path, b"").unwrap();
        assert!(read_all(&path).unwrap().is_empty());
    }

    #[test]
    fn torn_tail_detected_and_recovered() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pledger");
        {
            let mut l = Ledger::open(&path).unwrap();
            for n in 1..=3 {
                l.append(artifact(n), None).unwrap();
            }
        }
        let intact = fs::read(&path).unwrap();
        let mut torn = intact.clone();
        torn.extend_from_slice(br#"{"actor":{"pseudo"#);
        fs::write(&path, &torn).unwrap();
        assert!(matches!(read_all(&path), Err(StoreError::CorruptLine { line: 4, .. })));
        assert_eq!(recover_torn_tail(&path).unwrap(), Some(4));
        assert_eq!(fs::read(&path).unwrap(), intact);
        assert!(verify_chain(&read_all(&path).unwrap()).valid);
    }

    #[test]
    fn corrupt_middle_line_is_not_auto_recovered() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pledger");
        {
            let mut l = Ledger::open(&path).unwrap();
            for n in 1..=3 {
                l.append(artifact(n), None).unwrap();
            }
        }
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1] = "{not json";
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(recover_torn_tail(&path), Err(StoreError::CorruptLine { line: 2, .. })));
    }
}
