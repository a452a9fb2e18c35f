use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// UTC instant with second precision, written as `YYYY-MM-DDTHH:MM:SSZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp `{0}`: expected YYYY-MM-DDTHH:MM:SSZ")]
pub struct InvalidTimestamp(pub String);

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

impl Timestamp {
    pub fn parse(s: &str) -> Result<Self, InvalidTimestamp> {
        let b = s.as_bytes();
        let shape_ok = b.len() == 20
            && b.iter().enumerate().all(|(i, c)| match i {
                4 | 7 => *c == b'-',
                10 => *c == b'T',
                13 | 16 => *c == b':',
                19 => *c == b'Z',
                _ => c.is_ascii_digit(),
            });
        if !shape_ok {
            return Err(InvalidTimestamp(s.to_string()));
        }
        NaiveDateTime::parse_from_str(s, TS_FORMAT)
            .map(|n| Timestamp(Utc.from_utc_datetime(&n)))
            .map_err(|_| InvalidTimestamp(s.to_string()))
    }

    pub fn from_unix(secs: i64) -> Self {
        Timestamp(DateTime::from_timestamp(secs, 0).expect("timestamp in range"))
    }

    pub fn now() -> Self {
        Self::from_unix(Utc::now().timestamp())
    }

    pub fn unix(&self) -> i64 {
        self.0.timestamp()
    }

    pub fn plus_seconds(&self, secs: i64) -> Self {
        Self::from_unix(self.unix() + secs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(TS_FORMAT))
    }
}

impl FromStr for Timestamp {
    type Err = InvalidTimestamp;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A decimal quantity (amounts, bounds, credit units).
///
/// Serialization refuses non-finite values, and integral values are written
/// as JSON integers so that `50` and `50.0` canonicalize identically.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Decimal(pub f64);

impl Decimal {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Round half to even at two fractional digits. Values within 1e-9 of a
    /// half-cent are treated as exact ties.
    pub fn round_cents(self) -> Decimal {
        let scaled = self.0 * 100.0;
        let floor = scaled.floor();
        let r = if ((scaled - floor) - 0.5).abs() < 1e-9 {
            if floor.rem_euclid(2.0) == 0.0 {
                floor
            } else {
                floor + 1.0
            }
        } else {
            scaled.round()
        };
        Decimal(r / 100.0)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = if self.0 == 0.0 { 0.0 } else { self.0 };
        write!(f, "{v}")
    }
}

impl From<f64> for Decimal {
    fn from(v: f64) -> Self {
        Decimal(v)
    }
}

const MAX_SAFE_INT: f64 = 9_007_199_254_740_992.0;

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if !v.is_finite() {
            return Err(serde::ser::Error::custom("non-finite number"));
        }
        if v.fract() == 0.0 && v.abs() < MAX_SAFE_INT {
            s.serialize_i64(v as i64)
        } else {
            s.serialize_f64(v)
        }
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Decimal(v))
    }
}

/// Retention period such as `3y`, `18m` or `90d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    Years(u32),
    Months(u32),
    Days(u32),
}

impl Retention {
    pub fn parse(s: &str) -> Option<Retention> {
        if !s.is_ascii() {
            return None;
        }
        let (num, unit) = s.split_at(s.len().checked_sub(1)?);
        if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let n: u32 = num.parse().ok()?;
        if n == 0 {
            return None;
        }
        match unit {
            "y" => Some(Retention::Years(n)),
            "m" => Some(Retention::Months(n)),
            "d" => Some(Retention::Days(n)),
            _ => None,
        }
    }
}
