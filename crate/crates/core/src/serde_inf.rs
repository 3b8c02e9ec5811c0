//! Serde helpers for noise levels in `[0, +inf]`; infinity is written as `"inf"`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Level {
    Finite(f64),
    Named(String),
}

fn to_level(v: f64) -> Level {
    if v == f64::INFINITY {
        Level::Named("inf".into())
    } else {
        Level::Finite(v)
    }
}

fn from_level<E: serde::de::Error>(level: Level) -> Result<f64, E> {
    match level {
        Level::Finite(v) => Ok(v),
        Level::Named(s) if matches!(s.as_str(), "inf" | "+inf" | "infinity") => Ok(f64::INFINITY),
        Level::Named(s) => Err(E::custom(format!(
            "expected a number or \"inf\", got {s:?}"
        ))),
    }
}

pub fn serialize_vec<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
    serializer.collect_seq(values.iter().map(|&v| to_level(v)))
}

pub fn deserialize_vec<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
    Vec::<Level>::deserialize(deserializer)?
        .into_iter()
        .map(from_level::<D::Error>)
        .collect()
}

pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    to_level(*value).serialize(serializer)
}

pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
    let level = Level::deserialize(deserializer).map_err(D::Error::custom)?;
    from_level(level)
}

/// `#[serde(with = "...")]` adapter for `Vec<f64>`.
pub mod vec {
    pub use super::{deserialize_vec as deserialize, serialize_vec as serialize};
}

/// Deserialize adapter for `Option<f64>`.
pub mod opt {
    use super::*;

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<f64>, D::Error> {
        Option::<Level>::deserialize(deserializer)?
            .map(from_level::<D::Error>)
            .transpose()
    }
}
