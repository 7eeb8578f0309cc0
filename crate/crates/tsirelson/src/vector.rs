//! Finitely supported vectors with exact rational coordinates.

use crate::families::FiniteSet;
use crate::ratio::{format_q, parse_q, Q};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

/// Sorted list of (index, value) pairs; indices strictly increasing and
/// positive, values nonzero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FiniteVector {
    coords: Vec<(u32, Q)>,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("invalid vector: {0}")]
pub struct VectorError(pub String);

impl FiniteVector {
    pub fn zero() -> Self {
        FiniteVector { coords: Vec::new() }
    }

    pub fn unit(index: u32) -> Self {
        assert!(index >= 1);
        FiniteVector { coords: vec![(index, Q::from_integer(1.into()))] }
    }

    pub fn new(coords: Vec<(u32, Q)>) -> Result<Self, VectorError> {
        if coords.iter().any(|(i, _)| *i == 0) {
            return Err(VectorError("indices must be positive".into()));
        }
        if coords.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(VectorError("indices must be strictly increasing".into()));
        }
        if coords.iter().any(|(_, v)| v.is_zero()) {
            return Err(VectorError("values must be nonzero".into()));
        }
        Ok(FiniteVector { coords })
    }

    /// Sorts, combines duplicate indices and drops zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, Q)>) -> Self {
        let mut pairs: Vec<(u32, Q)> = pairs.into_iter().collect();
        pairs.sort_by_key(|(i, _)| *i);
        let mut coords: Vec<(u32, Q)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            assert!(i >= 1, "indices must be positive");
            match coords.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => coords.push((i, v)),
            }
        }
        coords.retain(|(_, v)| !v.is_zero());
        FiniteVector { coords }
    }

    pub fn entries(&self) -> &[(u32, Q)] {
        &self.coords
    }

    pub fn is_zero(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn support_len(&self) -> usize {
        self.coords.len()
    }

    pub fn support(&self) -> FiniteSet {
        FiniteSet::new(self.coords.iter().map(|(i, _)| *i).collect()).expect("sorted support")
    }

    pub fn min_support(&self) -> Option<u32> {
        self.coords.first().map(|(i, _)| *i)
    }

    pub fn max_support(&self) -> Option<u32> {
        self.coords.last().map(|(i, _)| *i)
    }

    pub fn get(&self, index: u32) -> Q {
        match self.coords.binary_search_by_key(&index, |(i, _)| *i) {
            Ok(p) => self.coords[p].1.clone(),
            Err(_) => Q::zero(),
        }
    }

    pub fn l1(&self) -> Q {
        self.coords.iter().fold(Q::zero(), |acc, (_, v)| acc + v.abs())
    }

    pub fn sup_abs(&self) -> Q {
        self.coords
            .iter()
            .map(|(_, v)| v.abs())
            .max()
            .unwrap_or_else(Q::zero)
    }

    pub fn abs(&self) -> Self {
        FiniteVector {
            coords: self.coords.iter().map(|(i, v)| (*i, v.abs())).collect(),
        }
    }

    pub fn scale(&self, c: &Q) -> Self {
        if c.is_zero() {
            return FiniteVector::zero();
        }
        FiniteVector {
            coords: self.coords.iter().map(|(i, v)| (*i, v * c)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        FiniteVector::from_pairs(
            self.coords.iter().cloned().chain(other.coords.iter().cloned()),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&Q::from_integer((-1).into())))
    }

    /// Restriction to the index interval [lo, hi].
    pub fn restrict(&self, lo: u32, hi: u32) -> Self {
        FiniteVector {
            coords: self
                .coords
                .iter()
                .filter(|(i, _)| *i >= lo && *i <= hi)
                .cloned()
                .collect(),
        }
    }

    /// True when every index of `self` precedes every index of `other`.
    pub fn is_before(&self, other: &Self) -> bool {
        match (self.max_support(), other.min_support()) {
            (Some(a), Some(b)) => a < b,
            _ => true,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VectorRepr {
    coords: Vec<(u32, String)>,
}

impl Serialize for FiniteVector {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        VectorRepr {
            coords: self.coords.iter().map(|(i, v)| (*i, format_q(v))).collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for FiniteVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let repr = VectorRepr::deserialize(de)?;
        let coords = repr
            .coords
            .into_iter()
            .map(|(i, s)| parse_q(&s).map(|v| (i, v)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        FiniteVector::new(coords).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{q, q_int};

    #[test]
    fn construction_and_norms() {
        let x = FiniteVector::from_pairs([(3, q(1, 2)), (2, q(-1, 3)), (3, q(1, 2))]);
        assert_eq!(x.entries(), &[(2, q(-1, 3)), (3, q_int(1))]);
        assert_eq!(x.l1(), q(4, 3));
        assert_eq!(x.sup_abs(), q_int(1));
        assert_eq!(x.get(2), q(-1, 3));
        assert_eq!(x.get(5), q_int(0));
    }

    #[test]
    fn add_cancels() {
        let x = FiniteVector::unit(4);
        let y = x.scale(&q_int(-1));
        assert!(x.add(&y).is_zero());
    }

    #[test]
    fn json_round_trip() {
        let x = FiniteVector::from_pairs([(2, q(1, 2)), (5, q(-3, 4))]);
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"coords":[[2,"1/2"],[5,"-3/4"]]}"#);
        let y: FiniteVector = serde_json::from_str(&s).unwrap();
        assert_eq!(x, y);
    }
}
