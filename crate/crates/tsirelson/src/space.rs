//! A mixed Tsirelson space T[(F_n, θ_n)], described by its ladder, weight
//! sequence and a working weight cutoff.

use crate::families::{FamilyKind, Ladder};
use crate::ratio::Q;
use crate::theta::{Round, ThetaError, ThetaSequence};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub ladder: Ladder,
    pub theta: ThetaSequence,
    /// Largest weight index tried before the cutoff guard takes over. The
    /// guard raises it automatically, so it is a hint, never a truncation.
    pub weight_cutoff: u32,
}

impl SpaceSpec {
    /// T[(S_n, 1/(n+1))]: the Schreier-ladder space used throughout the
    /// verification suites.
    pub fn schreier_reciprocal() -> Self {
        SpaceSpec {
            ladder: Ladder::S,
            theta: ThetaSequence::reciprocal_shift(),
            weight_cutoff: 32,
        }
    }

    /// T[(A_n, 1/log2(n+1))]: Schlumprecht space via rational enclosures.
    pub fn schlumprecht(bits: u32) -> Self {
        SpaceSpec {
            ladder: Ladder::A,
            theta: ThetaSequence::log_enclosure(bits),
            weight_cutoff: 32,
        }
    }

    pub fn family(&self, rank: u32) -> FamilyKind {
        FamilyKind { ladder: self.ladder, rank }
    }

    pub fn theta(&self, n: u32, round: Round) -> Q {
        self.theta.theta(n, round)
    }

    pub fn theta_bounds(&self, n: u32) -> (Q, Q) {
        self.theta.theta_bounds(n)
    }

    pub fn is_exact(&self) -> bool {
        self.theta.is_exact()
    }

    pub fn widened(&self) -> Self {
        SpaceSpec {
            ladder: self.ladder,
            theta: self.theta.widened(),
            weight_cutoff: self.weight_cutoff,
        }
    }

    pub fn validate(&self, regularity_bound: u32) -> Result<(), ThetaError> {
        self.theta.validate(self.ladder, regularity_bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spaces_validate() {
        SpaceSpec::schreier_reciprocal().validate(24).unwrap();
        SpaceSpec::schlumprecht(64).validate(12).unwrap();
    }

    #[test]
    fn space_json_round_trip() {
        let s = SpaceSpec::schreier_reciprocal();
        let j = serde_json::to_string(&s).unwrap();
        let t: SpaceSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(s, t);
    }
}
