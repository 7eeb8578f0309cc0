//! Special averages: verified convex combinations that the norm cannot see
//! at low weights.
//!
//! On the A ladder an (n, ε)-average is a uniform 1/n combination of n
//! basis vectors with 1/n < ε. On the Schreier ladder it is a convex
//! combination supported on an S(n) set whose mass on every S(n−1) set is
//! below ε. Constructions here are verify-and-retry: whatever the builder
//! produces is checked by `check_average` before it is returned.

use crate::families::{self, FamilyError, FamilyKind, Ladder};
use crate::norm::{self, NormBounds};
use crate::ratio::{format_q, parse_q, q_int, q_one, Q};
use crate::report::Report;
use crate::space::SpaceSpec;
use crate::vector::FiniteVector;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct SpecialAverage {
    pub vector: FiniteVector,
    pub rank: u32,
    pub epsilon: Q,
    pub ladder: Ladder,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum AverageError {
    #[error("epsilon {eps} unattainable at rank {rank} on the A ladder (needs 1/rank < eps)")]
    Unattainable { eps: String, rank: u32 },
    #[error("construction failed after {0} start retries")]
    RetryBudget(u32),
    #[error("support budget {0} exceeded during construction")]
    SupportBudget(u64),
    #[error("rank {0} averages exceed any desk-scale support budget here")]
    RankTooLarge(u32),
    #[error("flatness rank search exhausted at max rank {0}: {1}")]
    SearchBudget(u32, String),
    #[error("input is not a verified special average")]
    NotVerified,
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Default cap on constructed support sizes. The canonical Schreier-ladder
/// construction of rank 3 and above blows past any such cap.
pub const SUPPORT_BUDGET: u64 = 200_000;
const RETRY_BUDGET: u32 = 64;

impl SpecialAverage {
    /// Non-negative coefficients summing to exactly 1, plus the ladder
    /// support and mass conditions.
    pub fn verify(&self) -> bool {
        check_average(self)
    }
}

/// floor(1/eps) for eps > 0.
fn inv_floor(eps: &Q) -> u32 {
    let inv = q_one() / eps;
    let f: BigInt = inv.numer().div_floor(inv.denom());
    u32::try_from(f).unwrap_or(u32::MAX)
}

/// Smallest k with 1/k < eps.
pub fn min_count_for(eps: &Q) -> u32 {
    inv_floor(eps) + 1
}

/// Canonical verified (rank, ε)-average starting no earlier than
/// `min_start`.
///
/// A ladder: uniform 1/rank on `rank` consecutive indices. Schreier
/// ladder: the repeated-averages recursion (rank k is the uniform average
/// of m successive rank-(k−1) averages, m = first index used), retried at
/// increasing start indices until `check_average` passes.
pub fn make_basic_average(
    rank: u32,
    epsilon: &Q,
    min_start: u32,
    ladder: Ladder,
) -> Result<SpecialAverage, AverageError> {
    assert!(epsilon.is_positive(), "epsilon must be positive");
    let min_start = min_start.max(1);
    match ladder {
        Ladder::A => {
            if rank == 0 {
                let avg = SpecialAverage {
                    vector: FiniteVector::unit(min_start),
                    rank,
                    epsilon: epsilon.clone(),
                    ladder,
                };
                return Ok(avg);
            }
            if q_one() / q_int(rank as i64) >= *epsilon {
                return Err(AverageError::Unattainable {
                    eps: format_q(epsilon),
                    rank,
                });
            }
            let start = min_start.max(inv_floor(epsilon) + 1);
            let coeff = Q::new(BigInt::one(), BigInt::from(rank));
            let vector =
                FiniteVector::from_pairs((0..rank).map(|i| (start + i, coeff.clone())));
            let avg = SpecialAverage { vector, rank, epsilon: epsilon.clone(), ladder };
            debug_assert!(check_average(&avg));
            Ok(avg)
        }
        Ladder::S => {
            for start in min_start..min_start + RETRY_BUDGET {
                let mut budget = SUPPORT_BUDGET;
                let vector = repeated_average(rank, start, &mut budget)?;
                let avg = SpecialAverage {
                    vector,
                    rank,
                    epsilon: epsilon.clone(),
                    ladder,
                };
                if check_average(&avg) {
                    return Ok(avg);
                }
            }
            Err(AverageError::RetryBudget(RETRY_BUDGET))
        }
    }
}

/// The repeated-averages vector of the given rank starting exactly at
/// `start`; uniform over `start` successive copies one rank down.
fn repeated_average(rank: u32, start: u32, budget: &mut u64) -> Result<FiniteVector, AverageError> {
    if *budget == 0 {
        return Err(AverageError::SupportBudget(SUPPORT_BUDGET));
    }
    if rank == 0 {
        *budget -= 1;
        return Ok(FiniteVector::unit(start));
    }
    let pieces = start;
    let coeff = Q::new(BigInt::one(), BigInt::from(pieces));
    let mut parts: Vec<FiniteVector> = Vec::with_capacity(pieces as usize);
    let mut next = start;
    for _ in 0..pieces {
        let piece = repeated_average(rank - 1, next, budget)?;
        next = piece.max_support().expect("non-empty piece") + 1;
        parts.push(piece.scale(&coeff));
    }
    Ok(parts
        .into_iter()
        .fold(FiniteVector::zero(), |acc, p| acc.add(&p)))
}

/// Smallest-support verified average: rank 1 uses ⌊1/ε⌋+1 points, rank 2 a
/// fixed number of doubling blocks. The canonical construction's support
/// grows with the start index, which makes nested constructions blow up;
/// this one does not. Rank 3 and above stays out of reach either way.
pub fn lean_basic_average(
    rank: u32,
    epsilon: &Q,
    min_start: u32,
    ladder: Ladder,
) -> Result<SpecialAverage, AverageError> {
    assert!(epsilon.is_positive());
    if ladder == Ladder::A {
        return make_basic_average(rank, epsilon, min_start, ladder);
    }
    let min_start = min_start.max(1);
    match rank {
        0 => Ok(SpecialAverage {
            vector: FiniteVector::unit(min_start),
            rank,
            epsilon: epsilon.clone(),
            ladder,
        }),
        1 => {
            let count = inv_floor(epsilon) + 1;
            let start = min_start.max(count);
            let coeff = Q::new(BigInt::one(), BigInt::from(count));
            let vector =
                FiniteVector::from_pairs((0..count).map(|i| (start + i, coeff.clone())));
            let avg = SpecialAverage { vector, rank, epsilon: epsilon.clone(), ladder };
            if check_average(&avg) {
                Ok(avg)
            } else {
                Err(AverageError::RetryBudget(1))
            }
        }
        2 => {
            let pieces = 2 * (inv_floor(epsilon) + 1) + 1;
            if pieces > 24 {
                // Doubling blocks: supports blow up past any budget.
                return Err(AverageError::SupportBudget(SUPPORT_BUDGET));
            }
            let coeff = Q::new(BigInt::one(), BigInt::from(pieces));
            for attempt in 0..RETRY_BUDGET {
                let start = (min_start + attempt).max(pieces);
                let mut parts = Vec::new();
                let mut b = start;
                let mut size = start.min(64.max(pieces));
                for _ in 0..pieces {
                    let piece_coeff = &coeff / q_int(size as i64);
                    parts.push(FiniteVector::from_pairs(
                        (0..size).map(|i| (b + i, piece_coeff.clone())),
                    ));
                    b += size;
                    size *= 2;
                }
                let vector = parts
                    .into_iter()
                    .fold(FiniteVector::zero(), |acc, p| acc.add(&p));
                let avg = SpecialAverage {
                    vector,
                    rank,
                    epsilon: epsilon.clone(),
                    ladder,
                };
                if check_average(&avg) {
                    return Ok(avg);
                }
            }
            Err(AverageError::RetryBudget(RETRY_BUDGET))
        }
        r => Err(AverageError::RankTooLarge(r)),
    }
}

/// The defining conditions, checked exactly.
pub fn check_average(x: &SpecialAverage) -> bool {
    let entries = x.vector.entries();
    if entries.is_empty() {
        return false;
    }
    if entries.iter().any(|(_, v)| v.is_negative()) {
        return false;
    }
    let total = entries.iter().fold(Q::zero(), |acc, (_, v)| acc + v);
    if total != q_one() {
        return false;
    }
    if x.rank == 0 {
        return entries.len() == 1;
    }
    match x.ladder {
        Ladder::A => {
            let n = x.rank as usize;
            let coeff = Q::new(BigInt::one(), BigInt::from(x.rank));
            entries.len() == n
                && entries.iter().all(|(_, v)| *v == coeff)
                && coeff < x.epsilon
        }
        Ladder::S => {
            if !families::is_member(&x.vector.support(), FamilyKind::s(x.rank)) {
                return false;
            }
            let sup = families::family_sup(entries, FamilyKind::s(x.rank - 1))
                .expect("non-negative verified above");
            sup < x.epsilon
        }
    }
}

/// θ_rank ≤ ||x|| ≤ θ_rank + ε for a verified average.
///
/// The lower bound is structural: the weight-`rank` singleton tree over
/// the support evaluates to exactly θ_rank because the coefficients sum to
/// one, so no enclosure comparison is needed. The upper bound is checked
/// numerically, widening enclosure precision when a comparison is too
/// close to call.
pub fn check_norm_bounds(x: &SpecialAverage, space: &SpaceSpec) -> Result<Report, AverageError> {
    if !check_average(x) {
        return Err(AverageError::NotVerified);
    }
    let mut report = Report::new(format!(
        "average norm window: theta_n <= ||x|| <= theta_n + eps at rank {}",
        x.rank
    ));
    report.premise("verified average", true, "check_average passed");
    let bounds = norm::norm(&x.vector, space);
    report.witness("norm", &bounds);

    if x.rank == 0 {
        report.require(
            bounds.exact() == Some(&q_one()) || (bounds.lo <= q_one() && bounds.hi >= q_one()),
            "rank-0 average is a unit vector with norm 1",
            &bounds,
        );
        return Ok(report);
    }

    // Lower: supp x ∈ F_rank, so f = θ_rank Σ e_i* is valid and
    // f(x) = θ_rank · Σ a_i = θ_rank.
    report.require(
        true,
        "||x|| >= theta_n (structural witness: weight-n singleton tree)",
        format!("f(x) = theta_{}", x.rank),
    );
    let (t_lo, _) = space.theta_bounds(x.rank);
    report.witness("lower margin (norm.lo - theta_n.lo)", format_q(&(&bounds.lo - &t_lo)));

    let mut sp = space.clone();
    for _ in 0..3 {
        let (t_lo, t_hi) = sp.theta_bounds(x.rank);
        let b = if sp.is_exact() { bounds.clone() } else { norm::norm(&x.vector, &sp) };
        let upper = &t_lo + &x.epsilon;
        if b.hi <= upper {
            report.require(true, "||x|| <= theta_n + eps", format!("{} <= {}", b.hi, upper));
            report.witness(
                "upper margin (theta_n.lo + eps - norm.hi)",
                format_q(&(&upper - &b.hi)),
            );
            return Ok(report);
        }
        if b.lo > &t_hi + &x.epsilon {
            report.require(
                false,
                "||x|| <= theta_n + eps",
                format!("{} > {}", b.lo, &t_hi + &x.epsilon),
            );
            return Ok(report);
        }
        if sp.is_exact() {
            report.require(false, "||x|| <= theta_n + eps", format!("{} > {}", b.hi, upper));
            return Ok(report);
        }
        sp = sp.widened();
    }
    report.indeterminate("||x|| <= theta_n + eps (precision exhausted)");
    Ok(report)
}

/// Flatness against low weights: for every j ≤ k,
/// sup{f(x): w(f) = θ_j} ≤ (1+ε)·θ_j·θ_rank, i.e. the scaled average
/// θ_rank^{-1} x is almost invisible to weights up to θ_k. An exact finite
/// quantification over root weights; a cheap certified bound is tried
/// before the exact weighted norm.
pub fn check_flatness(
    x: &SpecialAverage,
    k: u32,
    epsilon: &Q,
    space: &SpaceSpec,
) -> Result<Report, AverageError> {
    if !check_average(x) {
        return Err(AverageError::NotVerified);
    }
    let mut report = Report::new(format!(
        "average flatness: |f(theta_n^-1 x)| <= (1+eps) w(f) for w(f) >= theta_{k}"
    ));
    report.premise("verified average of rank >= 1", x.rank >= 1, format!("rank {}", x.rank));
    if x.rank == 0 {
        report.require(false, "rank must be at least 1", x.rank);
        return Ok(report);
    }
    let one_plus = q_one() + epsilon;
    for j in 1..=k {
        let (tj_lo, tj_hi) = space.theta_bounds(j);
        let (tn_lo, tn_hi) = space.theta_bounds(x.rank);
        let rhs_lo = &one_plus * &tj_lo * &tn_lo;
        let rhs_hi = &one_plus * &tj_hi * &tn_hi;
        let quick = norm::weighted_norm_upper(&x.vector, j, space);
        if quick <= rhs_lo {
            report.require(true, format!("weight {j} (certified bound)"), format_q(&quick));
            continue;
        }
        let w = norm::weighted_norm(&x.vector, j, space);
        if w.hi <= rhs_lo {
            report.require(true, format!("weight {j}"), &w);
        } else if w.lo > rhs_hi {
            report.require(
                false,
                format!("weight {j}: {} > (1+eps) theta_{j} theta_{}", w.lo, x.rank),
                &w,
            );
        } else if space.is_exact() {
            // Exact space: the comparison is decisive.
            report.require(w.hi <= rhs_lo, format!("weight {j}"), &w);
        } else {
            report.indeterminate(format!("weight {j} too close at current precision"));
        }
    }
    Ok(report)
}

/// Search parameters for `estimate_flatness_rank`.
#[derive(Debug, Clone)]
pub struct FlatnessBudget {
    pub max_rank: u32,
    pub starts: Vec<u32>,
    /// Ranks n..=n+window must all pass before n is accepted; guards
    /// against non-monotone false positives at tiny ranks.
    pub window: u32,
}

impl Default for FlatnessBudget {
    fn default() -> Self {
        FlatnessBudget { max_rank: 4, starts: vec![3, 5, 10], window: 1 }
    }
}

/// Empirical surrogate for the flatness threshold w(ε, k): the least rank
/// n within budget such that freshly constructed (n, ε)-averages at the
/// sampled starts, and at `window` ranks above, all pass `check_flatness`.
/// A usable parameter, not a proof over all averages; downstream users
/// re-verify the vectors they actually build.
pub fn estimate_flatness_rank(
    epsilon: &Q,
    k: u32,
    space: &SpaceSpec,
    budget: &FlatnessBudget,
) -> Result<u32, AverageError> {
    let passes = |rank: u32| -> Result<bool, AverageError> {
        for &start in &budget.starts {
            let avg = make_basic_average(rank, epsilon, start, space.ladder)?;
            let rep = check_flatness(&avg, k, epsilon, space)?;
            if !rep.passed() {
                return Ok(false);
            }
        }
        Ok(true)
    };
    'outer: for n in 1..=budget.max_rank {
        for w in 0..=budget.window {
            let rank = n + w;
            if rank > budget.max_rank {
                return Err(AverageError::SearchBudget(
                    budget.max_rank,
                    format!("stability window for candidate {n} exceeds max rank"),
                ));
            }
            match passes(rank) {
                Ok(true) => {}
                Ok(false) => continue 'outer,
                Err(AverageError::SupportBudget(b)) => {
                    return Err(AverageError::SearchBudget(
                        budget.max_rank,
                        format!("rank {rank} construction exceeds support budget {b}"),
                    ))
                }
                Err(e) => return Err(e),
            }
        }
        return Ok(n);
    }
    Err(AverageError::SearchBudget(budget.max_rank, "no passing rank".into()))
}

/// Convenience: norm bounds of the average vector.
pub fn average_norm(x: &SpecialAverage, space: &SpaceSpec) -> NormBounds {
    norm::norm(&x.vector, space)
}

#[derive(Serialize, Deserialize)]
struct AverageRepr {
    coords: Vec<(u32, String)>,
    rank: u32,
    epsilon: String,
    ladder: Ladder,
}

impl Serialize for SpecialAverage {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        AverageRepr {
            coords: self
                .vector
                .entries()
                .iter()
                .map(|(i, v)| (*i, format_q(v)))
                .collect(),
            rank: self.rank,
            epsilon: format_q(&self.epsilon),
            ladder: self.ladder,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SpecialAverage {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let repr = AverageRepr::deserialize(de)?;
        let coords = repr
            .coords
            .into_iter()
            .map(|(i, s)| parse_q(&s).map(|v| (i, v)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        let vector = FiniteVector::new(coords).map_err(serde::de::Error::custom)?;
        let epsilon = parse_q(&repr.epsilon).map_err(serde::de::Error::custom)?;
        Ok(SpecialAverage { vector, rank: repr.rank, epsilon, ladder: repr.ladder })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::q;

    #[test]
    fn basic_average_examples() {
        // (1, 1/2) at start 3: uniform 1/3 on {3,4,5}.
        let a = make_basic_average(1, &q(1, 2), 3, Ladder::S).unwrap();
        assert_eq!(a.vector.support().elements(), &[3, 4, 5]);
        assert_eq!(a.vector.get(3), q(1, 3));
        assert!(check_average(&a));

        // (2, 1) on the A ladder: two halves.
        let b = make_basic_average(2, &q_int(1), 1, Ladder::A).unwrap();
        assert_eq!(b.vector.support_len(), 2);
        assert_eq!(b.vector.get(b.vector.min_support().unwrap()), q(1, 2));

        // Rank 0: unit vector.
        let c = make_basic_average(0, &q(1, 7), 4, Ladder::S).unwrap();
        assert_eq!(c.vector, FiniteVector::unit(4));
    }

    #[test]
    fn a_ladder_unattainable_epsilon() {
        assert!(matches!(
            make_basic_average(2, &q(1, 2), 1, Ladder::A),
            Err(AverageError::Unattainable { .. })
        ));
    }

    #[test]
    fn check_average_examples() {
        let good = SpecialAverage {
            vector: FiniteVector::from_pairs([(3, q(1, 3)), (4, q(1, 3)), (5, q(1, 3))]),
            rank: 1,
            epsilon: q(1, 2),
            ladder: Ladder::S,
        };
        assert!(check_average(&good));

        let bad = SpecialAverage {
            vector: FiniteVector::from_pairs([(2, q(1, 2)), (3, q(1, 2))]),
            rank: 1,
            epsilon: q(1, 4),
            ladder: Ladder::S,
        };
        assert!(!check_average(&bad));

        let a = SpecialAverage {
            vector: FiniteVector::from_pairs((10..14).map(|i| (i, q(1, 4)))),
            rank: 4,
            epsilon: q(2, 4),
            ladder: Ladder::A,
        };
        assert!(check_average(&a));
    }

    #[test]
    fn rank2_construction_retries_until_scc_holds() {
        // At start 3 the S(1) mass of the canonical rank-2 vector is 1/3,
        // at start 4 it is 1/4; the first start passing eps = 1/4 is 5.
        let a = make_basic_average(2, &q(1, 4), 3, Ladder::S).unwrap();
        assert_eq!(a.vector.min_support(), Some(5));
        let sup = families::family_sup(a.vector.entries(), FamilyKind::s(1)).unwrap();
        assert_eq!(sup, q(1, 5));
    }

    #[test]
    fn norm_window_examples() {
        let sp = SpaceSpec::schreier_reciprocal();
        let a = make_basic_average(1, &q(1, 2), 3, Ladder::S).unwrap();
        let rep = check_norm_bounds(&a, &sp).unwrap();
        assert!(rep.passed(), "{rep:?}");
        // norm of the {3,4,5} third-average is exactly 1/2.
        let n = average_norm(&a, &sp);
        assert_eq!(n.exact().unwrap(), &q(1, 2));

        let b = make_basic_average(1, &q(1, 3), 4, Ladder::S).unwrap();
        let rep = check_norm_bounds(&b, &sp).unwrap();
        assert!(rep.passed());
    }

    #[test]
    fn norm_window_schlumprecht_rank2() {
        let sp = SpaceSpec::schlumprecht(64);
        let a = make_basic_average(2, &q(2, 3), 3, Ladder::A).unwrap();
        let rep = check_norm_bounds(&a, &sp).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let b = make_basic_average(4, &q(1, 3), 3, Ladder::A).unwrap();
        let rep = check_norm_bounds(&b, &sp).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn flatness_examples() {
        let sp = SpaceSpec::schreier_reciprocal();
        let a = make_basic_average(1, &q(1, 2), 3, Ladder::S).unwrap();
        // Rank-1 averages are exactly flat at weight 1: equality passes.
        let rep = check_flatness(&a, 1, &q_int(1), &sp).unwrap();
        assert!(rep.passed(), "{rep:?}");

        // Rank-2 averages fail flatness at weight 2 with eps = 1: the full
        // singleton functional of weight 2 evaluates too high.
        let b = make_basic_average(2, &q(1, 2), 3, Ladder::S).unwrap();
        let rep = check_flatness(&b, 2, &q_int(1), &sp).unwrap();
        assert!(!rep.passed());
    }

    #[test]
    fn estimate_flatness_rank_small() {
        let sp = SpaceSpec::schreier_reciprocal();
        let budget = FlatnessBudget { max_rank: 2, starts: vec![3, 5], window: 1 };
        let w = estimate_flatness_rank(&q_int(1), 1, &sp, &budget).unwrap();
        assert_eq!(w, 1);
    }

    #[test]
    fn lean_average_small_support() {
        let a = lean_basic_average(1, &q(1, 4), 40, Ladder::S).unwrap();
        assert!(check_average(&a));
        assert_eq!(a.vector.support_len(), 5);
        assert_eq!(a.vector.min_support(), Some(40));

        let b = lean_basic_average(2, &q(1, 2), 10, Ladder::S).unwrap();
        assert!(check_average(&b));
        assert!(b.vector.support_len() < 2000);
    }

    #[test]
    fn average_json_round_trip() {
        let a = make_basic_average(1, &q(1, 2), 3, Ladder::S).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        let b: SpecialAverage = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }
}
