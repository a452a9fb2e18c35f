use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::EntryType;

/// A ledger identifier of the form `pl:<kind>:<segment>(:<segment>)*`.
///
/// Segments are lowercase ASCII alphanumerics and hyphens. The kind segment
/// follows the same alphabet; entry ids additionally require one of the
/// entry kinds (`contrib`, `change`, `artifact`, ...), see [`LedgerId::entry_type`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LedgerId(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid ledger id `{id}`: {reason}")]
pub struct InvalidId {
    pub id: String,
    pub reason: &'static str,
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

impl LedgerId {
    pub fn parse(s: &str) -> Result<Self, InvalidId> {
        let err = |reason| InvalidId {
            id: s.to_string(),
            reason,
        };
        let rest = s.strip_prefix("pl:").ok_or_else(|| err("missing `pl:` prefix"))?;
        let mut parts = rest.split(':');
        let kind = parts.next().unwrap_or_default();
        if !valid_segment(kind) {
            return Err(err("malformed kind segment"));
        }
        let mut n = 0;
        for seg in parts {
            if !valid_segment(seg) {
                return Err(err("segments must be lowercase alphanumeric or hyphen"));
            }
            n += 1;
        }
        if n == 0 {
            return Err(err("at least one segment must follow the kind"));
        }
        Ok(LedgerId(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The kind segment, e.g. `contrib` for `pl:contrib:wedesign:prompt:001`.
    pub fn kind(&self) -> &str {
        self.0[3..].split(':').next().unwrap_or_default()
    }

    /// The entry type routed from the kind segment, if this is an entry id.
    pub fn entry_type(&self) -> Option<EntryType> {
        EntryType::from_id_kind(self.kind())
    }

    /// First segment after the kind; used as the default case/group key.
    pub fn group(&self) -> &str {
        self.0[3..].split(':').nth(1).unwrap_or_default()
    }

    /// Voucher lineage: the id with a trailing `:rev<k>` segment removed.
    pub fn lineage(&self) -> LedgerId {
        match self.revision() {
            Some(_) => {
                let cut = self.0.rfind(':').expect("revision implies a separator");
                LedgerId(self.0[..cut].to_string())
            }
            None => self.clone(),
        }
    }

    /// Revision number `k` of a trailing `:rev<k>` segment.
    pub fn revision(&self) -> Option<u32> {
        let last = self.0.rsplit(':').next()?;
        let digits = last.strip_prefix("rev")?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        // `pl:voucher:rev1` has no lineage base, so it is not a revision.
        if self.0[3..].split(':').count() < 3 {
            return None;
        }
        digits.parse().ok()
    }

    pub fn with_revision(&self, k: u32) -> LedgerId {
        LedgerId(format!("{}:rev{k}", self.lineage().0))
    }

    /// File-name safe form used for result bundles (`:` becomes `_`).
    pub fn slug(&self) -> String {
        self.0.replace(':', "_")
    }
}

impl fmt::Display for LedgerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LedgerId {
    type Err = InvalidId;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LedgerId::parse(s)
    }
}

impl AsRef<str> for LedgerId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for LedgerId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LedgerId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LedgerId::parse(&s).map_err(serde::de::Error::custom)
    }
}
