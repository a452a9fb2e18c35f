//! Entry documents: UTF-8 JSON objects shaped like
//!
//! ```json
//! { "id": "pl:contrib:wedesign:prompt:001", "type": "Contribution",
//!   "createdAt": "2025-05-10T14:30:00Z", "actor": {...}, "consent": {...},
//!   "compensation": {...}, "contribution": {...}, "links": {...},
//!   "integrity": {...} }
//! ```
//!
//! The payload sits under a type-specific key (`contribution`, `change`,
//! `artifact`, `test`, `evaluationRun`, `voucher`, `credit`, `tombstone`).

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::{
    EntryEnvelope, EntryType, InvalidId, InvalidTimestamp, LedgerId, LinkSet, Payload, Timestamp,
};
use crate::canon::{self, CanonError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("unknown entry type `{0}`")]
    UnknownEntryType(String),
    #[error("payload mismatch: type {entry_type} expects `{expected}` but document carries {found:?}")]
    PayloadMismatch {
        entry_type: EntryType,
        expected: &'static str,
        found: Vec<String>,
    },
    #[error(transparent)]
    InvalidTimestamp(#[from] InvalidTimestamp),
    #[error(transparent)]
    InvalidId(#[from] InvalidId),
}

/// Name of the synthetic pre-image field; reserved in documents.
pub const PREV_FIELD: &str = "prev";

const KNOWN_FIELDS: &[&str] = &[
    "@context",
    "id",
    "type",
    "createdAt",
    "actor",
    "consent",
    "compensation",
    "links",
    "integrity",
];

fn malformed(field: &str, e: impl std::fmt::Display) -> ParseError {
    ParseError::MalformedDocument(format!("{field}: {e}"))
}

fn take_str(obj: &mut Map<String, Value>, field: &str) -> Result<String, ParseError> {
    match obj.remove(field) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(malformed(field, "expected a string")),
        None => Err(malformed(field, "missing")),
    }
}

fn take<T: serde::de::DeserializeOwned>(
    obj: &mut Map<String, Value>,
    field: &str,
) -> Result<Option<T>, ParseError> {
    obj.remove(field)
        .map(|v| serde_json::from_value(v).map_err(|e| malformed(field, e)))
        .transpose()
}

pub fn parse_entry(text: &str) -> Result<EntryEnvelope, ParseError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ParseError::MalformedDocument(e.to_string()))?;
    from_value(value)
}

pub fn from_value(value: Value) -> Result<EntryEnvelope, ParseError> {
    let Value::Object(mut obj) = value else {
        return Err(ParseError::MalformedDocument(
            "expected a top-level object".into(),
        ));
    };

    let type_name = take_str(&mut obj, "type")?;
    let entry_type: EntryType = type_name
        .parse()
        .map_err(|_| ParseError::UnknownEntryType(type_name.clone()))?;

    let id = LedgerId::parse(&take_str(&mut obj, "id")?)?;
    if id.entry_type() != Some(entry_type) {
        return Err(InvalidId {
            id: id.to_string(),
            reason: "kind segment does not match entry type",
        }
        .into());
    }

    let created_at = Timestamp::parse(&take_str(&mut obj, "createdAt")?)?;

    let payload_keys: Vec<String> = obj
        .keys()
        .filter(|k| EntryType::from_payload_key(k).is_some())
        .cloned()
        .collect();
    let expected = entry_type.payload_key();
    if payload_keys.len() != 1 || payload_keys[0] != expected {
        return Err(ParseError::PayloadMismatch {
            entry_type,
            expected,
            found: payload_keys,
        });
    }
    let payload_value = obj.remove(expected).expect("checked above");
    let payload =
        Payload::from_value(entry_type, payload_value).map_err(|e| malformed(expected, e))?;

    let context = match obj.remove("@context") {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(malformed("@context", "expected a string")),
    };
    let actor = take(&mut obj, "actor")?.ok_or_else(|| malformed("actor", "missing"))?;
    let consent = take(&mut obj, "consent")?;
    let compensation = take(&mut obj, "compensation")?;
    let links: LinkSet = take(&mut obj, "links")?.unwrap_or_default();
    let integrity = take(&mut obj, "integrity")?;

    if obj.contains_key(PREV_FIELD) {
        return Err(malformed(PREV_FIELD, "reserved field name"));
    }
    let extensions: BTreeMap<String, Value> = obj.into_iter().collect();

    Ok(EntryEnvelope {
        context,
        id,
        created_at,
        actor,
        consent,
        compensation,
        payload,
        links,
        integrity,
        extensions,
    })
}

impl EntryEnvelope {
    /// Document form. `with_integrity = false` yields the hash pre-image body
    /// (before the `prev` field is inserted).
    pub fn to_document(&self, with_integrity: bool) -> Result<Map<String, Value>, CanonError> {
        let num = |e: serde_json::Error| CanonError::NonCanonicalizableNumber(e.to_string());
        let mut obj = Map::new();
        for (k, v) in &self.extensions {
            obj.insert(k.clone(), v.clone());
        }
        if let Some(ctx) = &self.context {
            obj.insert("@context".into(), Value::String(ctx.clone()));
        }
        obj.insert("id".into(), Value::String(self.id.to_string()));
        obj.insert(
            "type".into(),
            Value::String(self.entry_type().as_str().into()),
        );
        obj.insert(
            "createdAt".into(),
            Value::String(self.created_at.to_string()),
        );
        obj.insert("actor".into(), serde_json::to_value(&self.actor).map_err(num)?);
        if let Some(c) = &self.consent {
            obj.insert("consent".into(), serde_json::to_value(c).map_err(num)?);
        }
        if let Some(c) = &self.compensation {
            obj.insert("compensation".into(), serde_json::to_value(c).map_err(num)?);
        }
        obj.insert(
            self.entry_type().payload_key().into(),
            self.payload.to_value().map_err(num)?,
        );
        if !self.links.is_empty() {
            obj.insert("links".into(), serde_json::to_value(&self.links).map_err(num)?);
        }
        if with_integrity {
            if let Some(i) = &self.integrity {
                obj.insert("integrity".into(), serde_json::to_value(i).map_err(num)?);
            }
        }
        Ok(obj)
    }
}

/// Serializes an entry in canonical field order (keys sorted at every level,
/// no insignificant whitespace). For sealed entries `serialize(parse(x)) == x`.
pub fn serialize_entry(entry: &EntryEnvelope) -> Result<String, CanonError> {
    let doc = Value::Object(entry.to_document(true)?);
    let bytes = canon::render(&doc)?;
    Ok(String::from_utf8(bytes).expect("canonical rendering is UTF-8"))
}

/// True if `name` is a field the envelope understands (not an extension).
pub fn is_known_field(name: &str) -> bool {
    KNOWN_FIELDS.contains(&name) || EntryType::from_payload_key(name).is_some()
}
