//! Serde adapters that write big integers as decimal strings, so JSON
//! documents never depend on a reader's 64-bit number limits.

use num_bigint::BigUint;
use serde::{de, Deserialize, Deserializer, Serializer};

/// One decimal string, parsed where it sits so errors keep their position.
struct Decimal(BigUint);

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map(Decimal).map_err(de::Error::custom)
    }
}

pub mod decimal {
    use super::*;

    pub fn serialize<S: Serializer>(value: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&value.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(de::Error::custom)
    }
}

pub mod decimal_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(values: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&v.to_str_radix(10))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        Ok(Vec::<Decimal>::deserialize(d)?.into_iter().map(|v| v.0).collect())
    }
}

pub mod decimal_opt {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_some(&v.to_str_radix(10)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigUint>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|t| parse(&t).map_err(de::Error::custom))
            .transpose()
    }
}

pub mod decimal_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(rows: &[Vec<BigUint>], s: S) -> Result<S::Ok, S::Error> {
        let text: Vec<Vec<String>> =
            rows.iter().map(|r| r.iter().map(|v| v.to_str_radix(10)).collect()).collect();
        serde::Serialize::serialize(&text, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<BigUint>>, D::Error> {
        let rows = Vec::<Vec<Decimal>>::deserialize(d)?;
        Ok(rows.into_iter().map(|r| r.into_iter().map(|v| v.0).collect()).collect())
    }
}

/// Parses a non-negative decimal integer, rejecting signs, blanks and other radices.
pub fn parse(text: &str) -> Result<BigUint, String> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("expected a decimal integer string, got {text:?}"));
    }
    BigUint::parse_bytes(text.as_bytes(), 10).ok_or_else(|| format!("bad integer {text:?}"))
}
