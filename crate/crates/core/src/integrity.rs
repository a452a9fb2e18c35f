//! Sealing, hash-chain verification and pluggable signatures.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::canon::{canonicalize, compute_hash, CanonError};
use crate::model::{ActorRef, EntryEnvelope, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IntegrityBlock {
    pub hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<SignatureRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SignatureRecord {
    pub scheme: String,
    pub signer_role: ActorRef,
    pub key_ref: String,
    /// Base64.
    pub signature_bytes: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SealError {
    #[error("entry {0} is already sealed")]
    AlreadySealed(String),
    #[error("signing failed: {0}")]
    SigningFailure(String),
    #[error(transparent)]
    Canon(#[from] CanonError),
}

/// Produces a signature over an entry's hash pre-image.
pub trait Signer {
    fn sign(&self, preimage: &[u8]) -> Result<SignatureRecord, String>;
}

/// Checks signatures of one scheme.
pub trait SignatureVerifier: Send + Sync {
    fn verify(&self, preimage: &[u8], signature: &SignatureRecord) -> bool;
}

/// Attaches the integrity block: `hash = sha256(canonicalize(entry, prev))`.
/// On signing failure the entry is returned unsealed inside the error path.
pub fn seal(
    entry: EntryEnvelope,
    prev_hash: Option<&str>,
    signer: Option<&dyn Signer>,
) -> Result<EntryEnvelope, SealError> {
    if entry.is_sealed() {
        return Err(SealError::AlreadySealed(entry.id.to_string()));
    }
    let preimage = canonicalize(&entry, prev_hash)?;
    let signature = match signer {
        Some(s) => Some(s.sign(&preimage).map_err(SealError::SigningFailure)?),
        None => None,
    };
    let mut sealed = entry;
    sealed.integrity = Some(IntegrityBlock {
        hash: compute_hash(&preimage),
        prev_hash: prev_hash.map(str::to_string),
        signature,
    });
    Ok(sealed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum FailureKind {
    HashMismatch,
    PrevHashMismatch,
    DuplicateId,
    OrderViolation,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::HashMismatch => "hashMismatch",
            FailureKind::PrevHashMismatch => "prevHashMismatch",
            FailureKind::DuplicateId => "duplicateId",
            FailureKind::OrderViolation => "orderViolation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainVerdict {
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_broken_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_kind: Option<FailureKind>,
}

impl ChainVerdict {
    fn ok() -> Self {
        ChainVerdict {
            valid: true,
            first_broken_index: None,
            failure_kind: None,
        }
    }

    fn broken(index: usize, kind: FailureKind) -> Self {
        ChainVerdict {
            valid: false,
            first_broken_index: Some(index),
            failure_kind: Some(kind),
        }
    }
}

/// Entries may carry creation times this far behind the latest one seen.
pub const CLOCK_SKEW_SECONDS: i64 = 24 * 60 * 60;

/// Recomputes every hash and predecessor link, in log order.
pub fn verify_chain(entries: &[EntryEnvelope]) -> ChainVerdict {
    let mut seen = HashSet::new();
    let mut latest: Option<Timestamp> = None;
    let mut prev: Option<&str> = None;
    for (i, e) in entries.iter().enumerate() {
        let Some(integrity) = &e.integrity else {
            return ChainVerdict::broken(i, FailureKind::HashMismatch);
        };
        let recomputed = canonicalize(e, integrity.prev_hash.as_deref()).map(|b| compute_hash(&b));
        if recomputed.as_deref() != Ok(integrity.hash.as_str()) {
            return ChainVerdict::broken(i, FailureKind::HashMismatch);
        }
        if integrity.prev_hash.as_deref() != prev {
            return ChainVerdict::broken(i, FailureKind::PrevHashMismatch);
        }
        if !seen.insert(&e.id) {
            return ChainVerdict::broken(i, FailureKind::DuplicateId);
        }
        if let Some(t) = latest {
            if e.created_at.unix() < t.unix() - CLOCK_SKEW_SECONDS {
                return ChainVerdict::broken(i, FailureKind::OrderViolation);
            }
        }
        latest = Some(latest.map_or(e.created_at, |t| t.max(e.created_at)));
        prev = Some(integrity.hash.as_str());
    }
    ChainVerdict::ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SignatureVerdict {
    Valid,
    Invalid,
    Unverifiable,
    Absent,
}

impl fmt::Display for SignatureVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignatureVerdict::Valid => "valid",
            SignatureVerdict::Invalid => "invalid",
            SignatureVerdict::Unverifiable => "unverifiable",
            SignatureVerdict::Absent => "absent",
        })
    }
}

/// Verifiers keyed by scheme identifier.
#[derive(Default)]
pub struct VerifierRegistry {
    verifiers: BTreeMap<String, Box<dyn SignatureVerifier>>,
}

impl VerifierRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, scheme: &str, verifier: Box<dyn SignatureVerifier>) {
        self.verifiers.insert(scheme.to_string(), verifier);
    }

    pub fn get(&self, scheme: &str) -> Option<&dyn SignatureVerifier> {
        self.verifiers.get(scheme).map(|b| b.as_ref())
    }
}

/// One verdict per entry. Unknown schemes are never reported valid.
pub fn verify_signatures(entries: &[EntryEnvelope], registry: &VerifierRegistry) -> Vec<SignatureVerdict> {
    entries
        .iter()
        .map(|e| {
            let Some(integrity) = &e.integrity else {
                return SignatureVerdict::Absent;
            };
            let Some(sig) = &integrity.signature else {
                return SignatureVerdict::Absent;
            };
            let Some(verifier) = registry.get(&sig.scheme) else {
                return SignatureVerdict::Unverifiable;
            };
            match canonicalize(e, integrity.prev_hash.as_deref()) {
                Ok(preimage) if verifier.verify(&preimage, sig) => SignatureVerdict::Valid,
                _ => SignatureVerdict::Invalid,
            }
        })
        .collect()
}

/// Keyed-digest scheme `keyed-sha256`: signature = SHA-256(key || pre-image).
///
/// A shared-secret stand-in for real signature schemes, for tests and
/// closed deployments; it gives integrity between key holders, not
/// non-repudiation.
#[derive(Clone)]
pub struct KeyedDigestScheme {
    pub key_ref: String,
    pub signer_role: ActorRef,
    key: Vec<u8>,
}

impl KeyedDigestScheme {
    pub const SCHEME: &'static str = "keyed-sha256";

    pub fn new(key_ref: &str, key: &[u8], signer_role: ActorRef) -> Self {
        KeyedDigestScheme {
            key_ref: key_ref.to_string(),
            signer_role,
            key: key.to_vec(),
        }
    }

    fn mac(&self, preimage: &[u8]) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(&self.key);
        h.update(preimage);
        h.finalize().to_vec()
    }
}

impl Signer for KeyedDigestScheme {
    fn sign(&self, preimage: &[u8]) -> Result<SignatureRecord, String> {
        Ok(SignatureRecord {
            scheme: Self::SCHEME.to_string(),
            signer_role: self.signer_role.clone(),
            key_ref: self.key_ref.clone(),
            signature_bytes: BASE64.encode(self.mac(preimage)),
        })
    }
}

impl SignatureVerifier for KeyedDigestScheme {
    fn verify(&self, preimage: &[u8], signature: &SignatureRecord) -> bool {
        if signature.key_ref != self.key_ref {
            return false;
        }
        match BASE64.decode(&signature.signature_bytes) {
            Ok(bytes) => bytes == self.mac(preimage),
            Err(_) => false,
        }
    }
}
