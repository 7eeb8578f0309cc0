//! Tree certificates for membership in the norming set K.
//!
//! A valid tree denotes a functional built from ±coordinate functionals by
//! repeated (F_n, θ_n)-operations; validity is purely structural and can be
//! checked without computing any norms. Soundness — |f(x)| ≤ ||x|| for every
//! valid f — is exercised by the property suites.

use crate::families::{is_admissible, FiniteSet};
use crate::ratio::{q_int, Q};
use crate::space::SpaceSpec;
use crate::theta::Round;
use crate::vector::FiniteVector;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormingTree {
    Leaf { sign: i8, index: u32 },
    Internal { weight: u32, children: Vec<NormingTree> },
}

/// Structural defect at a node, addressed by its child-index path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid norming tree at {path:?}: {reason}")]
pub struct TreeViolation {
    pub path: Vec<usize>,
    pub reason: String,
}

impl NormingTree {
    pub fn leaf(sign: i8, index: u32) -> Self {
        NormingTree::Leaf { sign, index }
    }

    pub fn internal(weight: u32, children: Vec<NormingTree>) -> Self {
        NormingTree::Internal { weight, children }
    }

    /// Root weight index; leaves carry none.
    pub fn weight(&self) -> Option<u32> {
        match self {
            NormingTree::Leaf { .. } => None,
            NormingTree::Internal { weight, .. } => Some(*weight),
        }
    }

    pub fn min_support(&self) -> Option<u32> {
        match self {
            NormingTree::Leaf { index, .. } => Some(*index),
            NormingTree::Internal { children, .. } => {
                children.iter().filter_map(|c| c.min_support()).min()
            }
        }
    }

    pub fn max_support(&self) -> Option<u32> {
        match self {
            NormingTree::Leaf { index, .. } => Some(*index),
            NormingTree::Internal { children, .. } => {
                children.iter().filter_map(|c| c.max_support()).max()
            }
        }
    }

    /// Support as a set of coordinate indices.
    pub fn support(&self) -> FiniteSet {
        let mut idx = Vec::new();
        self.collect_indices(&mut idx);
        idx.sort_unstable();
        idx.dedup();
        FiniteSet::new(idx).expect("positive indices")
    }

    fn collect_indices(&self, out: &mut Vec<u32>) {
        match self {
            NormingTree::Leaf { index, .. } => out.push(*index),
            NormingTree::Internal { children, .. } => {
                for c in children {
                    c.collect_indices(out);
                }
            }
        }
    }

    /// Exact value of the denoted functional at `x`.
    pub fn eval(&self, x: &FiniteVector, space: &SpaceSpec, round: Round) -> Q {
        match self {
            NormingTree::Leaf { sign, index } => x.get(*index) * q_int(*sign as i64),
            NormingTree::Internal { weight, children } => {
                let sum = children
                    .iter()
                    .fold(Q::zero(), |acc, c| acc + c.eval(x, space, round));
                space.theta(*weight, round) * sum
            }
        }
    }

    /// Structural validity: every internal node has successive children
    /// whose support minima are F_weight-admissible.
    pub fn validate(&self, space: &SpaceSpec) -> Result<(), TreeViolation> {
        self.validate_at(space, &mut Vec::new())
    }

    fn validate_at(&self, space: &SpaceSpec, path: &mut Vec<usize>) -> Result<(), TreeViolation> {
        match self {
            NormingTree::Leaf { sign, index } => {
                if *sign != 1 && *sign != -1 {
                    return Err(TreeViolation {
                        path: path.clone(),
                        reason: format!("leaf sign must be ±1, got {sign}"),
                    });
                }
                if *index == 0 {
                    return Err(TreeViolation {
                        path: path.clone(),
                        reason: "leaf index must be positive".into(),
                    });
                }
                Ok(())
            }
            NormingTree::Internal { weight, children } => {
                if *weight == 0 {
                    return Err(TreeViolation {
                        path: path.clone(),
                        reason: "weight index must be at least 1".into(),
                    });
                }
                if children.is_empty() {
                    return Err(TreeViolation {
                        path: path.clone(),
                        reason: "internal node has no children".into(),
                    });
                }
                let supports: Vec<FiniteSet> = children.iter().map(|c| c.support()).collect();
                match is_admissible(&supports, space.family(*weight)) {
                    Ok(true) => {}
                    Ok(false) => {
                        return Err(TreeViolation {
                            path: path.clone(),
                            reason: format!(
                                "children not {}-admissible",
                                space.family(*weight)
                            ),
                        })
                    }
                    Err(e) => {
                        return Err(TreeViolation {
                            path: path.clone(),
                            reason: e.to_string(),
                        })
                    }
                }
                for (i, c) in children.iter().enumerate() {
                    path.push(i);
                    c.validate_at(space, path)?;
                    path.pop();
                }
                Ok(())
            }
        }
    }

    /// True when the trees form a block sequence (supports strictly ordered).
    pub fn is_block_sequence(trees: &[&NormingTree]) -> bool {
        trees.windows(2).all(|w| match (w[0].max_support(), w[1].min_support()) {
            (Some(a), Some(b)) => a < b,
            _ => true,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TreeRepr {
    Leaf { leaf: (i8, u32) },
    Internal { op: u32, children: Vec<TreeRepr> },
}

impl From<&NormingTree> for TreeRepr {
    fn from(t: &NormingTree) -> Self {
        match t {
            NormingTree::Leaf { sign, index } => TreeRepr::Leaf { leaf: (*sign, *index) },
            NormingTree::Internal { weight, children } => TreeRepr::Internal {
                op: *weight,
                children: children.iter().map(TreeRepr::from).collect(),
            },
        }
    }
}

impl From<TreeRepr> for NormingTree {
    fn from(r: TreeRepr) -> Self {
        match r {
            TreeRepr::Leaf { leaf: (sign, index) } => NormingTree::Leaf { sign, index },
            TreeRepr::Internal { op, children } => NormingTree::Internal {
                weight: op,
                children: children.into_iter().map(NormingTree::from).collect(),
            },
        }
    }
}

impl Serialize for NormingTree {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        TreeRepr::from(self).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for NormingTree {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        TreeRepr::deserialize(de).map(NormingTree::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{q, q_int};

    fn s_space() -> SpaceSpec {
        SpaceSpec::schreier_reciprocal()
    }

    #[test]
    fn eval_examples() {
        let sp = s_space();
        let f = NormingTree::leaf(1, 3);
        assert_eq!(f.eval(&FiniteVector::unit(3), &sp, Round::Down), q_int(1));

        let g = NormingTree::internal(1, vec![NormingTree::leaf(1, 2), NormingTree::leaf(1, 3)]);
        let x = FiniteVector::unit(2).add(&FiniteVector::unit(3));
        assert_eq!(g.eval(&x, &sp, Round::Down), q_int(1));
        assert_eq!(g.eval(&FiniteVector::zero(), &sp, Round::Down), q_int(0));

        let h = NormingTree::leaf(-1, 7);
        assert_eq!(h.eval(&FiniteVector::unit(7), &sp, Round::Down), q_int(-1));
    }

    #[test]
    fn validate_examples() {
        let sp = s_space();
        let good =
            NormingTree::internal(1, vec![NormingTree::leaf(1, 2), NormingTree::leaf(1, 3)]);
        assert!(good.validate(&sp).is_ok());

        let bad = NormingTree::internal(1, vec![NormingTree::leaf(1, 1), NormingTree::leaf(1, 2)]);
        let err = bad.validate(&sp).unwrap_err();
        assert!(err.reason.contains("admissible"));

        assert!(NormingTree::leaf(-1, 7).validate(&sp).is_ok());

        // Overlapping children are not successive.
        let overlap = NormingTree::internal(
            2,
            vec![
                NormingTree::internal(1, vec![NormingTree::leaf(1, 2), NormingTree::leaf(1, 4)]),
                NormingTree::leaf(1, 3),
            ],
        );
        assert!(overlap.validate(&sp).is_err());
    }

    #[test]
    fn weighted_scaling() {
        let sp = s_space();
        let f = NormingTree::internal(2, vec![NormingTree::leaf(1, 2), NormingTree::leaf(1, 3)]);
        let x = FiniteVector::unit(2).add(&FiniteVector::unit(3));
        assert_eq!(f.eval(&x, &sp, Round::Down), q(2, 3));
    }

    #[test]
    fn json_round_trip() {
        let f = NormingTree::internal(
            1,
            vec![NormingTree::leaf(1, 2), NormingTree::leaf(-1, 3)],
        );
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"op":1,"children":[{"leaf":[1,2]},{"leaf":[-1,3]}]}"#);
        let g: NormingTree = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }
}
