//! Exact rational scalars and their `"p/q"` wire format.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::str::FromStr;

pub type Q = BigRational;

/// Shorthand for small rational constants.
pub fn q(n: i64, d: i64) -> Q {
    assert!(d != 0, "zero denominator");
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_zero() -> Q {
    Q::zero()
}

pub fn q_one() -> Q {
    Q::one()
}

/// Canonical wire form: always `numerator/denominator`, e.g. `"-3/4"`, `"2/1"`.
pub fn format_q(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Accepts `"p/q"` or a bare integer `"p"`.
pub fn parse_q(s: &str) -> Result<Q, ParseRatioError> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let numer = BigInt::from_str(n).map_err(|_| ParseRatioError(s.to_string()))?;
    let denom = BigInt::from_str(d).map_err(|_| ParseRatioError(s.to_string()))?;
    if denom.is_zero() {
        return Err(ParseRatioError(s.to_string()));
    }
    Ok(Q::new(numer, denom))
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("malformed rational `{0}`, expected `p/q`")]
pub struct ParseRatioError(pub String);

/// 2^k as a rational, k possibly negative.
pub fn pow2(k: i64) -> Q {
    let one = BigInt::one();
    if k >= 0 {
        Q::from_integer(one << (k as usize))
    } else {
        Q::new(one.clone(), one << ((-k) as usize))
    }
}

pub fn abs(x: &Q) -> Q {
    x.abs()
}

/// serde adapter: rationals as `"p/q"` strings.
pub mod serde_str {
    use super::{format_q, parse_q, Q};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &Q, ser: S) -> Result<S::Ok, S::Error> {
        format_q(x).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Q, D::Error> {
        let s = String::deserialize(de)?;
        parse_q(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["1/2", "-3/4", "0/1", "7/1"] {
            let x = parse_q(s).unwrap();
            assert_eq!(format_q(&x), s);
        }
        assert_eq!(parse_q("5").unwrap(), q_int(5));
        assert_eq!(parse_q("6/4").unwrap(), q(3, 2));
        assert!(parse_q("1/0").is_err());
        assert!(parse_q("x").is_err());
    }

    #[test]
    fn pow2_signs() {
        assert_eq!(pow2(3), q_int(8));
        assert_eq!(pow2(-2), q(1, 4));
        assert_eq!(pow2(0), q_one());
    }
}
