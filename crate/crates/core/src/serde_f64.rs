//! Serde helper for `Vec<f64>` that survives JSON: non-finite entries
//! (the structural `-inf` CRF transitions) are written as strings.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Str(String),
}

pub fn serialize<S: Serializer>(data: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let out: Vec<Repr> = data
        .iter()
        .map(|&v| {
            if v.is_finite() {
                Repr::Num(v)
            } else if v.is_nan() {
                Repr::Str("nan".into())
            } else if v > 0.0 {
                Repr::Str("inf".into())
            } else {
                Repr::Str("-inf".into())
            }
        })
        .collect();
    out.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let raw: Vec<Repr> = Vec::deserialize(d)?;
    raw.into_iter()
        .map(|r| match r {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("bad float literal {other:?}"))),
            },
        })
        .collect()
}
