//! Weight sequences θ_n for the two ladders.
//!
//! All arithmetic is exact. The Schlumprecht weight 1/log2(n+1) is
//! irrational, so it is handled through certified rational enclosures with
//! directed rounding; every other kind is exactly rational. Consumers that
//! need a one-sided value pick a rounding direction, and enclosure-based
//! comparisons that cannot be decided widen the precision and retry.

use crate::ratio::{pow2, q_int, q_one, Q};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::families::Ladder;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Round {
    Down,
    Up,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThetaKind {
    /// θ_n = 1/(n+1); regular for the S ladder.
    ReciprocalShift,
    /// θ_n = ratio^n with 0 < ratio < 1; regular for the S ladder.
    Geometric {
        #[serde(with = "crate::ratio::serde_str")]
        ratio: Q,
    },
    /// Enclosures of θ_n = 1/log2(n+1); the A-ladder Schlumprecht weight.
    /// θ_1 = 1 exactly, which the (F, θ)-operation permits.
    LogEnclosure { bits: u32 },
    /// Explicit finite table with a geometric tail
    /// θ_{len+i} = values.last() · tail_ratio^i.
    Table {
        #[serde(with = "q_vec_serde")]
        values: Vec<Q>,
        #[serde(with = "crate::ratio::serde_str")]
        tail_ratio: Q,
    },
}

mod q_vec_serde {
    use crate::ratio::{format_q, parse_q, Q};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Q], ser: S) -> Result<S::Ok, S::Error> {
        v.iter().map(format_q).collect::<Vec<_>>().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Q>, D::Error> {
        let strs = Vec::<String>::deserialize(de)?;
        strs.iter()
            .map(|s| parse_q(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSequence {
    #[serde(flatten)]
    pub kind: ThetaKind,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ThetaError {
    #[error("invalid theta sequence: {0}")]
    Invalid(String),
    #[error("regularity failed at (n, m) = ({0}, {1})")]
    NotRegular(u32, u32),
    #[error("comparison undecidable at available precision: {0}")]
    Undecidable(String),
}

impl ThetaSequence {
    pub fn reciprocal_shift() -> Self {
        ThetaSequence { kind: ThetaKind::ReciprocalShift }
    }

    pub fn geometric(ratio: Q) -> Self {
        ThetaSequence { kind: ThetaKind::Geometric { ratio } }
    }

    pub fn log_enclosure(bits: u32) -> Self {
        ThetaSequence { kind: ThetaKind::LogEnclosure { bits } }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self.kind, ThetaKind::LogEnclosure { .. })
    }

    /// θ_n rounded in the requested direction; exact kinds ignore `round`.
    pub fn theta(&self, n: u32, round: Round) -> Q {
        assert!(n >= 1, "weight indices start at 1");
        match &self.kind {
            ThetaKind::ReciprocalShift => Q::new(BigInt::one(), BigInt::from(n + 1)),
            ThetaKind::Geometric { ratio } => pow_q(ratio, n),
            ThetaKind::LogEnclosure { bits } => {
                let (lo, hi) = log2_enclosure((n as u64) + 1, *bits);
                // θ = 1/log2(n+1): reciprocal flips the enclosure.
                match round {
                    Round::Down => q_one() / hi,
                    Round::Up => q_one() / lo,
                }
            }
            ThetaKind::Table { values, tail_ratio } => {
                let len = values.len() as u32;
                if n <= len {
                    values[(n - 1) as usize].clone()
                } else {
                    values.last().expect("non-empty table").clone() * pow_q(tail_ratio, n - len)
                }
            }
        }
    }

    /// Enclosure [lo, hi] of θ_n (lo = hi for exact kinds).
    pub fn theta_bounds(&self, n: u32) -> (Q, Q) {
        (self.theta(n, Round::Down), self.theta(n, Round::Up))
    }

    /// Same sequence at doubled enclosure precision.
    pub fn widened(&self) -> Self {
        match &self.kind {
            ThetaKind::LogEnclosure { bits } => ThetaSequence::log_enclosure(bits * 2),
            _ => self.clone(),
        }
    }

    /// Range, monotonicity and ladder regularity up to `bound`.
    ///
    /// Range is (0, 1]; the value 1 is permitted only when the enclosure is
    /// exact (θ_1 of the Schlumprecht weight).
    pub fn validate(&self, ladder: Ladder, bound: u32) -> Result<(), ThetaError> {
        if let ThetaKind::Geometric { ratio } = &self.kind {
            if !(ratio > &Q::zero() && ratio < &q_one()) {
                return Err(ThetaError::Invalid("geometric ratio must be in (0,1)".into()));
            }
            if ladder == Ladder::A {
                return Err(ThetaError::NotRegular(2, 2));
            }
        }
        if let ThetaKind::Table { values, .. } = &self.kind {
            if values.is_empty() {
                return Err(ThetaError::Invalid("empty table".into()));
            }
        }
        for n in 1..=bound {
            let (lo, hi) = self.theta_bounds(n);
            if !(lo.is_positive()) {
                return Err(ThetaError::Invalid(format!("theta_{n} not positive")));
            }
            if hi > q_one() || (hi == q_one() && lo != hi) {
                return Err(ThetaError::Invalid(format!("theta_{n} exceeds 1")));
            }
            if n < bound {
                let (_, hi_next) = self.theta_bounds(n + 1);
                if !(lo > hi_next) {
                    return Err(ThetaError::Invalid(format!(
                        "theta not certified strictly decreasing at {n}"
                    )));
                }
            }
        }
        self.check_regular(ladder, bound)
    }

    /// θ_n θ_m ≤ θ_{n+m} (S) or θ_n θ_m ≤ θ_{nm} (A), certified for all
    /// n, m up to `bound`.
    pub fn check_regular(&self, ladder: Ladder, bound: u32) -> Result<(), ThetaError> {
        for n in 1..=bound {
            for m in n..=bound {
                let target = match ladder {
                    Ladder::S => n + m,
                    Ladder::A => n * m,
                };
                let (n_lo, n_hi) = self.theta_bounds(n);
                let (m_lo, m_hi) = self.theta_bounds(m);
                let (t_lo, _t_hi) = self.theta_bounds(target);
                // An exact factor of 1 makes the clause trivially true.
                if (n_lo == n_hi && n_hi == q_one()) || (m_lo == m_hi && m_hi == q_one()) {
                    continue;
                }
                if &n_hi * &m_hi <= t_lo {
                    continue;
                }
                // Exact kinds: the comparison above was exact, so it failed.
                if self.is_exact() {
                    return Err(ThetaError::NotRegular(n, m));
                }
                return Err(ThetaError::Undecidable(format!(
                    "regularity clause at ({n}, {m})"
                )));
            }
        }
        Ok(())
    }
}

fn pow_q(base: &Q, exp: u32) -> Q {
    let mut acc = q_one();
    let mut b = base.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc *= &b;
        }
        b = &b * &b;
        e >>= 1;
    }
    acc
}

/// Certified rational enclosure of log2(x) for an integer x ≥ 2.
///
/// Bit-by-bit squaring on dyadic residuals with directed truncation. Each
/// emitted bit of the lower run is certified by a residual lower bound, and
/// symmetrically for the upper run, so the two endpoints bracket log2(x)
/// regardless of rounding drift.
pub fn log2_enclosure(x: u64, bits: u32) -> (Q, Q) {
    assert!(x >= 2);
    // floor(log2 x): position of highest set bit.
    let e = 63 - x.leading_zeros() as i64;
    if x & (x - 1) == 0 {
        return (q_int(e), q_int(e)); // exact power of two
    }
    let guard = 32;
    let prec = (bits + guard) as usize;

    let run = |round_up: bool| -> Q {
        // Residual y ∈ [1, 4) as mant / 2^prec.
        let mut mant = (BigInt::from(x) << prec) >> (e as usize);
        let mut frac = Q::zero();
        for i in 0..bits {
            // y ← y², truncated toward the chosen direction.
            let sq = &mant * &mant;
            mant = if round_up {
                (&sq + ((BigInt::one() << prec) - 1i32)) >> prec
            } else {
                sq >> prec
            };
            let two = BigInt::one() << (prec + 1);
            if mant >= two {
                frac += pow2(-(i as i64) - 1);
                mant >>= 1;
            }
        }
        if round_up {
            // Residual contributes at most log2(4) = 2 of the next bit.
            frac += pow2(-(bits as i64) + 1);
        }
        q_int(e) + frac
    };

    (run(false), run(true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::q;
    use num_traits::ToPrimitive;

    #[test]
    fn reciprocal_shift_values() {
        let t = ThetaSequence::reciprocal_shift();
        assert_eq!(t.theta(1, Round::Down), q(1, 2));
        assert_eq!(t.theta(2, Round::Up), q(1, 3));
        t.validate(Ladder::S, 24).unwrap();
    }

    #[test]
    fn geometric_is_s_regular_only() {
        let t = ThetaSequence::geometric(q(1, 2));
        assert_eq!(t.theta(3, Round::Down), q(1, 8));
        t.validate(Ladder::S, 16).unwrap();
        assert!(t.validate(Ladder::A, 4).is_err());
    }

    #[test]
    fn log2_enclosure_brackets() {
        for (x, lo_f, hi_f) in [(3u64, 1.584, 1.586), (5, 2.321, 2.323), (1025, 10.001, 10.002)] {
            let (lo, hi) = log2_enclosure(x, 48);
            let lof = lo.to_f64().unwrap();
            let hif = hi.to_f64().unwrap();
            assert!(lof >= lo_f - 0.01 && hif <= hi_f + 0.01, "x={x} [{lof}, {hif}]");
            assert!(lo <= hi);
            let width = &hi - &lo;
            assert!(width < q(1, 1_000_000), "width too wide for x={x}");
        }
        assert_eq!(log2_enclosure(8, 16), (q_int(3), q_int(3)));
    }

    #[test]
    fn schlumprecht_weight_basics() {
        let t = ThetaSequence::log_enclosure(64);
        let (lo1, hi1) = t.theta_bounds(1);
        assert_eq!(lo1, q_int(1));
        assert_eq!(hi1, q_int(1));
        let (lo2, hi2) = t.theta_bounds(2);
        // 1/log2(3) ≈ 0.6309
        assert!(lo2 < hi2 || lo2 == hi2);
        assert!(lo2 > q(63, 100) && hi2 < q(64, 100));
        t.validate(Ladder::A, 12).unwrap();
    }

    #[test]
    fn table_tail() {
        let t = ThetaSequence {
            kind: ThetaKind::Table {
                values: vec![q(1, 2), q(1, 4)],
                tail_ratio: q(1, 2),
            },
        };
        assert_eq!(t.theta(2, Round::Down), q(1, 4));
        assert_eq!(t.theta(4, Round::Down), q(1, 16));
        t.validate(Ladder::S, 10).unwrap();
    }
}
