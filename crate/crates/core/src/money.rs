//! Currency fields are serialized as plain decimal strings (`"-0.0083"`), never
//! as JSON numbers, so logs and API payloads carry no binary-float formatting.
//!
//! The string is the shortest representation that parses back to the same
//! `f64`, so a value written and read again is bit-identical.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

/// Format a dollar amount for logs and payloads.
pub fn to_decimal(value: f64) -> String {
    // `Display` for f64 never uses exponent notation.
    let s = format!("{value}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub fn parse_decimal(s: &str) -> Result<f64, String> {
    let trimmed = s.trim();
    if trimmed.is_empty() || trimmed.contains(['e', 'E', ',']) {
        return Err(format!("not a fixed-point decimal: {s:?}"));
    }
    trimmed
        .parse::<f64>()
        .map_err(|e| format!("not a fixed-point decimal: {s:?} ({e})"))
}

/// Round to display resolution ($0.01).
pub fn display_cents(value: f64) -> String {
    format!("{:.2}", (value * 100.0).round() / 100.0 + 0.0)
}

pub mod decimal {
    use super::*;

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&to_decimal(*value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_decimal(&s).map_err(D::Error::custom)
    }
}

pub mod decimal_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&to_decimal(*v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<String>::deserialize(deserializer)?;
        raw.iter()
            .map(|s| parse_decimal(s).map_err(D::Error::custom))
            .collect()
    }
}

pub mod decimal_map {
    use super::*;
    use serde::ser::SerializeMap;
    use serde::Serialize;
    use std::collections::BTreeMap;

    pub fn serialize<K, S>(values: &BTreeMap<K, f64>, serializer: S) -> Result<S::Ok, S::Error>
    where
        K: Serialize,
        S: Serializer,
    {
        let mut map = serializer.serialize_map(Some(values.len()))?;
        for (k, v) in values {
            map.serialize_entry(k, &to_decimal(*v))?;
        }
        map.end()
    }

    pub fn deserialize<'de, K, D>(deserializer: D) -> Result<BTreeMap<K, f64>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        D: Deserializer<'de>,
    {
        let raw = BTreeMap::<K, String>::deserialize(deserializer)?;
        raw.into_iter()
            .map(|(k, s)| parse_decimal(&s).map(|v| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}
