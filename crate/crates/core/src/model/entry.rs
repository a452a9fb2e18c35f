use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    ActorRole, ArtifactKind, ChangeKind, CompensationModel, ConsentStatus, ContributionKind,
    Decimal, EntryType, IntendedUse, LedgerId, LinkSet, Timestamp,
};
use crate::governance::{CreditPayload, VoucherPayload};
use crate::harness::{EvaluationRunPayload, TestPayload};
use crate::integrity::IntegrityBlock;
use crate::store::TombstonePayload;

/// Who recorded an entry. There is deliberately no field for a legal name,
/// e-mail or any other direct identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ActorRef {
    pub role: ActorRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudonym: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steward_org: Option<LedgerId>,
}

impl ActorRef {
    pub fn pseudonymous(role: ActorRole, pseudonym: &str) -> Self {
        ActorRef {
            role,
            pseudonym: Some(pseudonym.to_string()),
            steward_org: None,
        }
    }

    /// Credit beneficiary handle: the steward organisation when recorded,
    /// otherwise the pseudonym.
    pub fn beneficiary(&self) -> Option<String> {
        self.steward_org
            .as_ref()
            .map(|o| o.to_string())
            .or_else(|| self.pseudonym.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConsentBlock {
    pub status: ConsentStatus,
    /// `+`-joined scope tags, e.g. `research+design`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retention: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reuse_constraints: Vec<String>,
}

impl ConsentBlock {
    pub fn scope_tags(&self) -> impl Iterator<Item = &str> {
        self.scope
            .as_deref()
            .unwrap_or_default()
            .split('+')
            .map(str::trim)
            .filter(|t| !t.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CompensationBlock {
    pub model: CompensationModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub currency: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<String>,
}

/// Aggregated identity markers; stored only as an opaque reference-style
/// document and always flagged sensitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RepresentationalMetadata {
    pub sensitive: bool,
    pub markers: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ContributionPayload {
    pub kind: ContributionKind,
    pub summary: String,
    pub artifact_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intended_use: Option<IntendedUse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representational_metadata: Option<RepresentationalMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recruitment_pathway: Option<String>,
    /// Earlier contribution whose terms this entry replaces (consent updates).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<LedgerId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChangedArtifact {
    pub artifact: LedgerId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_before: Option<String>,
    pub version_after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChangePayload {
    pub changed_artifacts: Vec<ChangedArtifact>,
    pub change_kind: ChangeKind,
    pub rationale: String,
}

/// One version of a logical artifact. Deployments are artifacts of kind
/// `extension:deployment` carrying a boundary and a capability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ArtifactPayload {
    /// Logical artifact id shared by all versions.
    pub artifact: LedgerId,
    pub artifact_kind: ArtifactKind,
    pub version: String,
    pub content_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capability: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Contribution(ContributionPayload),
    Change(ChangePayload),
    Artifact(ArtifactPayload),
    Test(TestPayload),
    EvaluationRun(EvaluationRunPayload),
    Voucher(VoucherPayload),
    Credit(CreditPayload),
    Tombstone(TombstonePayload),
}

impl Payload {
    pub fn entry_type(&self) -> EntryType {
        match self {
            Payload::Contribution(_) => EntryType::Contribution,
            Payload::Change(_) => EntryType::Change,
            Payload::Artifact(_) => EntryType::Artifact,
            Payload::Test(_) => EntryType::Test,
            Payload::EvaluationRun(_) => EntryType::EvaluationRun,
            Payload::Voucher(_) => EntryType::Voucher,
            Payload::Credit(_) => EntryType::Credit,
            Payload::Tombstone(_) => EntryType::Tombstone,
        }
    }

    pub(crate) fn to_value(&self) -> Result<Value, serde_json::Error> {
        match self {
            Payload::Contribution(p) => serde_json::to_value(p),
            Payload::Change(p) => serde_json::to_value(p),
            Payload::Artifact(p) => serde_json::to_value(p),
            Payload::Test(p) => serde_json::to_value(p),
            Payload::EvaluationRun(p) => serde_json::to_value(p),
            Payload::Voucher(p) => serde_json::to_value(p),
            Payload::Credit(p) => serde_json::to_value(p),
            Payload::Tombstone(p) => serde_json::to_value(p),
        }
    }

    pub(crate) fn from_value(ty: EntryType, v: Value) -> Result<Payload, serde_json::Error> {
        Ok(match ty {
            EntryType::Contribution => Payload::Contribution(serde_json::from_value(v)?),
            EntryType::Change => Payload::Change(serde_json::from_value(v)?),
            EntryType::Artifact => Payload::Artifact(serde_json::from_value(v)?),
            EntryType::Test => Payload::Test(serde_json::from_value(v)?),
            EntryType::EvaluationRun => Payload::EvaluationRun(serde_json::from_value(v)?),
            EntryType::Voucher => Payload::Voucher(serde_json::from_value(v)?),
            EntryType::Credit => Payload::Credit(serde_json::from_value(v)?),
            EntryType::Tombstone => Payload::Tombstone(serde_json::from_value(v)?),
        })
    }
}

/// The universal ledger record.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryEnvelope {
    /// Opaque `@context` string, passed through untouched.
    pub context: Option<String>,
    pub id: LedgerId,
    pub created_at: Timestamp,
    pub actor: ActorRef,
    pub consent: Option<ConsentBlock>,
    pub compensation: Option<CompensationBlock>,
    pub payload: Payload,
    pub links: LinkSet,
    pub integrity: Option<IntegrityBlock>,
    /// Unknown top-level fields, kept verbatim and covered by the hash.
    pub extensions: BTreeMap<String, Value>,
}

impl EntryEnvelope {
    pub fn new(id: LedgerId, created_at: Timestamp, actor: ActorRef, payload: Payload) -> Self {
        EntryEnvelope {
            context: None,
            id,
            created_at,
            actor,
            consent: None,
            compensation: None,
            payload,
            links: LinkSet::default(),
            integrity: None,
            extensions: BTreeMap::new(),
        }
    }

    pub fn entry_type(&self) -> EntryType {
        self.payload.entry_type()
    }

    pub fn is_sealed(&self) -> bool {
        self.integrity.is_some()
    }

    pub fn with_links(mut self, links: LinkSet) -> Self {
        self.links = links;
        self
    }

    pub fn contribution(&self) -> Option<&ContributionPayload> {
        match &self.payload {
            Payload::Contribution(p) => Some(p),
            _ => None,
        }
    }

    pub fn change(&self) -> Option<&ChangePayload> {
        match &self.payload {
            Payload::Change(p) => Some(p),
            _ => None,
        }
    }

    pub fn artifact(&self) -> Option<&ArtifactPayload> {
        match &self.payload {
            Payload::Artifact(p) => Some(p),
            _ => None,
        }
    }

    pub fn test(&self) -> Option<&TestPayload> {
        match &self.payload {
            Payload::Test(p) => Some(p),
            _ => None,
        }
    }

    pub fn run(&self) -> Option<&EvaluationRunPayload> {
        match &self.payload {
            Payload::EvaluationRun(p) => Some(p),
            _ => None,
        }
    }

    pub fn voucher(&self) -> Option<&VoucherPayload> {
        match &self.payload {
            Payload::Voucher(p) => Some(p),
            _ => None,
        }
    }

    pub fn credit(&self) -> Option<&CreditPayload> {
        match &self.payload {
            Payload::Credit(p) => Some(p),
            _ => None,
        }
    }

    pub fn tombstone(&self) -> Option<&TombstonePayload> {
        match &self.payload {
            Payload::Tombstone(p) => Some(p),
            _ => None,
        }
    }
}
