//! Serde helpers writing doubles with 17 significant digits.

use serde::ser::Error as _;
use serde::Serializer;
use serde_json::value::RawValue;

fn fmt17(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

pub fn f64_17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    let text = fmt17(*x).ok_or_else(|| S::Error::custom("non-finite float"))?;
    let raw = RawValue::from_string(text).map_err(S::Error::custom)?;
    s.serialize_some(&raw)
}

pub fn vec_f64_17<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut text = String::with_capacity(v.len() * 24 + 2);
    text.push('[');
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            text.push(',');
        }
        text.push_str(&fmt17(*x).ok_or_else(|| S::Error::custom("non-finite float"))?);
    }
    text.push(']');
    let raw = RawValue::from_string(text).map_err(S::Error::custom)?;
    s.serialize_some(&raw)
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Probe {
        #[serde(serialize_with = "super::f64_17")]
        x: f64,
        #[serde(serialize_with = "super::vec_f64_17")]
        v: Vec<f64>,
    }

    #[test]
    fn round_trip_bit_exact() {
        let p = Probe {
            x: 0.1 + 0.2,
            v: vec![1.0 / 3.0, -2.5e-310, 123456789.123456789, -0.0],
        };
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("3.0000000000000004e-1"));
        let back: Probe = serde_json::from_str(&text).unwrap();
        assert_eq!(p.x.to_bits(), back.x.to_bits());
        for (a, b) in p.v.iter().zip(&back.v) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_nan() {
        let p = Probe {
            x: f64::NAN,
            v: vec![],
        };
        assert!(serde_json::to_string(&p).is_err());
    }
}
