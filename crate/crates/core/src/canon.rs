//! Canonical bytes and content digests.
//!
//! Canonical form: object keys sorted by code point at every level, no
//! insignificant whitespace, numbers without exponent, leading zeros or
//! trailing fractional zeros, strings with the minimal JSON escapes.

use serde_json::Value;
use sha2::{Digest as _, Sha256};

use crate::model::{EntryEnvelope, PREV_FIELD};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CanonError {
    #[error("number cannot be canonicalized: {0}")]
    NonCanonicalizableNumber(String),
}

pub const DIGEST_PREFIX: &str = "sha256:";

/// `sha256:` followed by 64 lowercase hex digits.
pub fn is_digest(s: &str) -> bool {
    s.strip_prefix(DIGEST_PREFIX).is_some_and(|hex| {
        hex.len() == 64 && hex.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    })
}

pub fn compute_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(DIGEST_PREFIX.len() + 64);
    out.push_str(DIGEST_PREFIX);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Canonical hash pre-image of an entry: the document without its integrity
/// block, with a top-level `prev` field carrying `prev_hash` (or `""`).
pub fn canonicalize(entry: &EntryEnvelope, prev_hash: Option<&str>) -> Result<Vec<u8>, CanonError> {
    let mut doc = entry.to_document(false)?;
    doc.insert(
        PREV_FIELD.to_string(),
        Value::String(prev_hash.unwrap_or_default().to_string()),
    );
    render(&Value::Object(doc))
}

/// Renders any JSON value canonically.
pub fn render(value: &Value) -> Result<Vec<u8>, CanonError> {
    let mut out = Vec::with_capacity(256);
    write_value(value, &mut out)?;
    Ok(out)
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), CanonError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Number(n) => write_number(n, out)?,
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by(|a, b| a.chars().cmp(b.chars()));
            out.push(b'{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(k, out);
                out.push(b':');
                write_value(&map[k], out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_number(n: &serde_json::Number, out: &mut Vec<u8>) -> Result<(), CanonError> {
    if let Some(i) = n.as_i64() {
        out.extend_from_slice(i.to_string().as_bytes());
    } else if let Some(u) = n.as_u64() {
        out.extend_from_slice(u.to_string().as_bytes());
    } else {
        let f = n
            .as_f64()
            .ok_or_else(|| CanonError::NonCanonicalizableNumber(n.to_string()))?;
        out.extend_from_slice(format_float(f)?.as_bytes());
    }
    Ok(())
}

/// Shortest round-trip decimal expansion without exponent.
pub fn format_float(f: f64) -> Result<String, CanonError> {
    if !f.is_finite() {
        return Err(CanonError::NonCanonicalizableNumber(f.to_string()));
    }
    if f == 0.0 {
        return Ok("0".into());
    }
    // `Display` for f64 never uses exponent notation and omits a trailing `.0`.
    Ok(format!("{f}"))
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    for c in s.chars() {
        match c {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\u{08}' => out.extend_from_slice(b"\\b"),
            '\u{0c}' => out.extend_from_slice(b"\\f"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            c if (c as u32) < 0x20 => out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes()),
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}
