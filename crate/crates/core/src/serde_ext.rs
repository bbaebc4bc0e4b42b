//! JSON has no infinities; thresholds may be `+inf`.

use serde::{Deserialize, Deserializer, Serializer};

use crate::scalar::Real;

#[derive(Deserialize)]
#[serde(untagged)]
enum Repr<T> {
    Num(T),
    Text(String),
}

/// `#[serde(with = "extended_float")]`: non-finite values are written as
/// the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod extended_float {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            v.serialize(s)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > T::zero() {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        match Repr::<T>::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(T::infinity()),
                "-inf" => Ok(T::neg_infinity()),
                "nan" => Ok(T::nan()),
                other => Err(serde::de::Error::custom(format!("invalid number '{other}'"))),
            },
        }
    }
}

/// Same as [`extended_float`] for `Option<T>`.
pub mod extended_float_opt {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => extended_float::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<Option<T>, D::Error> {
        #[derive(Deserialize)]
        #[serde(bound(deserialize = "T: Real"))]
        struct Wrap<T>(#[serde(with = "extended_float")] T);
        Ok(Option::<Wrap<T>>::deserialize(d)?.map(|w| w.0))
    }
}

/// Formats a float the way it is written to JSON (shortest round-trip
/// representation, `inf` for infinities).
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite float serializes")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
