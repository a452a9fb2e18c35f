//! Entry classes, the shared envelope, and structural validation.

mod document;
mod entry;
mod id;
mod links;
mod validate;
mod values;
mod vocab;

pub use document::{from_value, is_known_field, parse_entry, serialize_entry, ParseError, PREV_FIELD};
pub use entry::{
    ActorRef, ArtifactPayload, ChangePayload, ChangedArtifact, CompensationBlock, ConsentBlock,
    ContributionPayload, EntryEnvelope, Payload, RepresentationalMetadata,
};
pub use id::{InvalidId, LedgerId};
pub use links::{EdgeKind, LinkSet};
pub use validate::{
    is_absolute_uri, is_content_reference, rules, validate_structure, ValidationReport, Violation,
    IDENTITY_MARKERS_TAG,
};
pub use values::{Decimal, InvalidTimestamp, Retention, Timestamp};
pub use vocab::{
    ActorRole, ArtifactKind, ChangeKind, Checkpoint, Comparator, CompensationModel, ConsentStatus,
    ContributionKind, CreditEventKind, Decision, EntryType, IntendedUse, TombstoneReason,
    UnknownTerm, VoucherAction, VoucherStatus,
};
