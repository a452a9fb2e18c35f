//! Controlled vocabularies.
//!
//! Closed vocabularies reject unknown terms. Open ones (roles and kinds)
//! additionally accept `extension:<tag>` so cases can extend them without
//! leaving the bounded set auditors rely on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {vocabulary} term `{term}`")]
pub struct UnknownTerm {
    pub vocabulary: &'static str,
    pub term: String,
}

macro_rules! vocab_serde {
    ($name:ident) => {
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

macro_rules! closed_vocab {
    ($(#[$m:meta])* $name:ident, $label:literal { $($var:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($var),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$var => $s),+
                }
            }
        }

        impl FromStr for $name {
            type Err = UnknownTerm;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok($name::$var),)+
                    _ => Err(UnknownTerm { vocabulary: $label, term: s.to_string() }),
                }
            }
        }

        vocab_serde!($name);
    };
}

macro_rules! open_vocab {
    ($(#[$m:meta])* $name:ident, $label:literal { $($var:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($var,)+
            /// `extension:<tag>`, stored with its prefix.
            Extension(String),
        }

        impl $name {
            pub fn as_str(&self) -> &str {
                match self {
                    $($name::$var => $s,)+
                    $name::Extension(text) => text,
                }
            }

            pub fn is_extension(&self, tag: &str) -> bool {
                matches!(self, $name::Extension(t) if t.strip_prefix("extension:") == Some(tag))
            }
        }

        impl FromStr for $name {
            type Err = UnknownTerm;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok($name::$var),)+
                    _ => match s.strip_prefix("extension:") {
                        Some(tag) if valid_tag(tag) => Ok($name::Extension(s.to_string())),
                        _ => Err(UnknownTerm { vocabulary: $label, term: s.to_string() }),
                    },
                }
            }
        }

        vocab_serde!($name);
    };
}

fn valid_tag(tag: &str) -> bool {
    !tag.is_empty()
        && tag
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

closed_vocab!(
    /// The entry classes of the ledger, plus tombstones.
    EntryType, "entry type" {
        Contribution => "Contribution",
        Change => "Change",
        Artifact => "Artifact",
        Test => "Test",
        EvaluationRun => "EvaluationRun",
        Voucher => "Voucher",
        Credit => "Credit",
        Tombstone => "Tombstone",
    }
);

impl EntryType {
    /// Kind segment used in entry ids.
    pub fn id_kind(self) -> &'static str {
        match self {
            EntryType::Contribution => "contrib",
            EntryType::Change => "change",
            EntryType::Artifact => "artifact",
            EntryType::Test => "test",
            EntryType::EvaluationRun => "run",
            EntryType::Voucher => "voucher",
            EntryType::Credit => "credit",
            EntryType::Tombstone => "tomb",
        }
    }

    pub fn from_id_kind(kind: &str) -> Option<EntryType> {
        EntryType::ALL.iter().copied().find(|t| t.id_kind() == kind)
    }

    /// Top-level document key holding this type's payload.
    pub fn payload_key(self) -> &'static str {
        match self {
            EntryType::Contribution => "contribution",
            EntryType::Change => "change",
            EntryType::Artifact => "artifact",
            EntryType::Test => "test",
            EntryType::EvaluationRun => "evaluationRun",
            EntryType::Voucher => "voucher",
            EntryType::Credit => "credit",
            EntryType::Tombstone => "tombstone",
        }
    }

    pub fn from_payload_key(key: &str) -> Option<EntryType> {
        EntryType::ALL.iter().copied().find(|t| t.payload_key() == key)
    }
}

open_vocab!(ActorRole, "actor role" {
    Resident => "resident",
    CommunitySteward => "communitySteward",
    Facilitator => "facilitator",
    Researcher => "researcher",
    Maintainer => "maintainer",
    Evaluator => "evaluator",
    Deployer => "deployer",
    Auditor => "auditor",
});

closed_vocab!(ConsentStatus, "consent status" {
    Granted => "granted",
    Restricted => "restricted",
    Withdrawn => "withdrawn",
});

closed_vocab!(CompensationModel, "compensation model" {
    Honorarium => "honorarium",
    Hourly => "hourly",
    CreditLinked => "credit-linked",
    NoneDeclared => "none-declared",
});

open_vocab!(ContributionKind, "contribution kind" {
    Prompt => "prompt",
    PreferenceLabel => "preferenceLabel",
    InterviewExcerpt => "interviewExcerpt",
    DeliberationRationale => "deliberationRationale",
    IncidentReport => "incidentReport",
    CriteriaDefinition => "criteriaDefinition",
});

closed_vocab!(IntendedUse, "intended use" {
    EvaluationOnly => "evaluation-only",
    Training => "training",
    Documentation => "documentation",
    Mixed => "mixed",
});

open_vocab!(ChangeKind, "change kind" {
    Dataset => "dataset",
    PromptLibrary => "promptLibrary",
    Adapter => "adapter",
    Guardrail => "guardrail",
    Policy => "policy",
    UiTooling => "uiTooling",
    DeploymentConfig => "deploymentConfig",
});

open_vocab!(ArtifactKind, "artifact kind" {
    Model => "model",
    Dataset => "dataset",
    PromptLibrary => "promptLibrary",
    Policy => "policy",
    Guardrail => "guardrail",
    EvaluationSuite => "evaluationSuite",
});

impl ArtifactKind {
    pub const DEPLOYMENT_TAG: &'static str = "deployment";

    pub fn deployment() -> ArtifactKind {
        ArtifactKind::Extension(format!("extension:{}", Self::DEPLOYMENT_TAG))
    }

    pub fn is_deployment(&self) -> bool {
        self.is_extension(Self::DEPLOYMENT_TAG)
    }
}

closed_vocab!(Decision, "decision" {
    Pass => "pass",
    Fail => "fail",
    Inconclusive => "inconclusive",
});

closed_vocab!(Checkpoint, "checkpoint" {
    PreDeploymentGate => "preDeploymentGate",
    ScheduledAudit => "scheduledAudit",
    PostIncident => "postIncident",
});

closed_vocab!(VoucherAction, "voucher action" {
    Pause => "pause",
    Condition => "condition",
    Authorize => "authorize",
});

closed_vocab!(VoucherStatus, "voucher status" {
    Issued => "issued",
    Active => "active",
    Satisfied => "satisfied",
    Revoked => "revoked",
    Expired => "expired",
});

impl VoucherStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            VoucherStatus::Satisfied | VoucherStatus::Revoked | VoucherStatus::Expired
        )
    }

    pub fn can_transition_to(self, next: VoucherStatus) -> bool {
        use VoucherStatus::*;
        matches!(
            (self, next),
            (Issued, Active) | (Active, Satisfied) | (Active, Revoked) | (Active, Expired)
        )
    }
}

closed_vocab!(TombstoneReason, "tombstone reason" {
    ConsentWithdrawn => "consentWithdrawn",
    SafetyRedaction => "safetyRedaction",
    LegalHold => "legalHold",
});

closed_vocab!(CreditEventKind, "credit event kind" {
    RegressionDetected => "regressionDetected",
    RemediationCompleted => "remediationCompleted",
    ScheduledRunDependency => "scheduledRunDependency",
});

closed_vocab!(Comparator, "comparator" {
    AtLeast => ">=",
    AtMost => "<=",
});

impl Comparator {
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Comparator::AtLeast => value >= bound,
            Comparator::AtMost => value <= bound,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_vocab_accepts_extensions() {
        let k: ArtifactKind = "extension:deployment".parse().unwrap();
        assert!(k.is_deployment());
        assert_eq!(k.as_str(), "extension:deployment");
        assert_eq!(serde_json::to_string(&k).unwrap(), "\"extension:deployment\"");
        assert!("extension:".parse::<ArtifactKind>().is_err());
        assert!("deployment".parse::<ArtifactKind>().is_err());
    }

    #[test]
    fn closed_vocab_rejects_extensions() {
        assert!("extension:maybe".parse::<Decision>().is_err());
        assert_eq!("credit-linked".parse::<CompensationModel>(), Ok(CompensationModel::CreditLinked));
    }

    #[test]
    fn entry_type_routes() {
        for t in EntryType::ALL {
            assert_eq!(EntryType::from_id_kind(t.id_kind()), Some(*t));
            assert_eq!(EntryType::from_payload_key(t.payload_key()), Some(*t));
            assert_eq!(t.as_str().parse::<EntryType>(), Ok(*t));
        }
    }

    #[test]
    fn voucher_transitions() {
        use VoucherStatus::*;
        let legal = [(Issued, Active), (Active, Satisfied), (Active, Revoked), (Active, Expired)];
        for a in VoucherStatus::ALL {
            for b in VoucherStatus::ALL {
                assert_eq!(a.can_transition_to(*b), legal.contains(&(*a, *b)), "{a}->{b}");
            }
        }
    }
}
