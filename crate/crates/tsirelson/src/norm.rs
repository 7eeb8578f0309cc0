//! Exact norms in T[(F_n, θ_n)].
//!
//! The norm satisfies the implicit equation
//!   ||x|| = max(||x||_∞, sup_n θ_n sup Σ_i ||E_i x||)
//! over F_n-admissible families. By 1-unconditionality and spreading the
//! sup may be restricted to families of consecutive intervals determined by
//! their start points, which turns it into a finite recursion on support
//! subintervals. Weights are cut off by two sound rules: selections with at
//! most d pieces saturate once every selection is admissible, and a weight
//! with θ_n · ||x|E||_1 below the incumbent can never improve it.
//!
//! Candidate weights that survive the cutoff are first tested against a
//! certified upper bound built from a family-constrained sup of coordinate
//! values; only weights whose bound exceeds the incumbent are expanded
//! exactly, which keeps the recursion shallow on large structured vectors
//! while remaining exact.
//!
//! For enclosure weight kinds every public entry point returns a rational
//! interval: the computation runs once with all weights rounded down and
//! once rounded up.

use crate::families::{self, FamilyKind, FamilyState, FiniteSet, Ladder};
use crate::ratio::{pow2, q_int, q_one, Q};
use crate::space::SpaceSpec;
use crate::theta::{Round, ThetaKind};
use crate::tree::{NormingTree, TreeViolation};
use crate::vector::FiniteVector;
use num_traits::{Signed, Zero};
use std::collections::HashMap;

/// Rational interval certified to contain the exact value; `lo == hi` for
/// exact weight kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormBounds {
    pub lo: Q,
    pub hi: Q,
}

impl NormBounds {
    pub fn point(v: Q) -> Self {
        NormBounds { lo: v.clone(), hi: v }
    }

    pub fn exact(&self) -> Option<&Q> {
        (self.lo == self.hi).then_some(&self.lo)
    }

    pub fn certainly_le(&self, rhs: &Q) -> bool {
        &self.hi <= rhs
    }

    pub fn certainly_ge(&self, rhs: &Q) -> bool {
        &self.lo >= rhs
    }

    pub fn certainly_positive(&self) -> bool {
        self.lo.is_positive()
    }
}

impl std::fmt::Display for NormBounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", crate::ratio::format_q(&self.lo))
        } else {
            write!(
                f,
                "[{}, {}]",
                crate::ratio::format_q(&self.lo),
                crate::ratio::format_q(&self.hi)
            )
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum NormError {
    #[error("support of size {len} exceeds the exhaustive-oracle limit {max}")]
    SupportTooLarge { len: usize, max: usize },
    #[error("functionals do not form a block sequence")]
    NotBlock,
    #[error(transparent)]
    InvalidTree(#[from] TreeViolation),
    #[error("postcondition violated: {0}")]
    Postcondition(String),
    #[error("comparison undecidable at available precision: {0}")]
    Undecidable(String),
}

/// ||x||, exact per rounding endpoint.
pub fn norm(x: &FiniteVector, space: &SpaceSpec) -> NormBounds {
    norm_impl(x, space).0
}

/// ||x|| together with an optimizer certificate for the lower endpoint.
/// The certificate f is a valid norming tree with f(x) equal to the lower
/// endpoint (for exact weight kinds, the norm itself).
pub fn norm_with_witness(x: &FiniteVector, space: &SpaceSpec) -> (NormBounds, Option<NormingTree>) {
    norm_impl(x, space)
}

fn norm_impl(x: &FiniteVector, space: &SpaceSpec) -> (NormBounds, Option<NormingTree>) {
    if x.is_zero() {
        return (NormBounds::point(Q::zero()), None);
    }
    let mut down = Ctx::new(x, space, Round::Down);
    let lo = down.norm_interval(0, down.len() - 1);
    let witness = down.witness(0, down.len() - 1);
    let hi = if space.is_exact() {
        lo.clone()
    } else {
        let mut up = Ctx::new(x, space, Round::Up);
        up.norm_interval(0, up.len() - 1)
    };
    (NormBounds { lo, hi }, Some(witness))
}

/// sup { f(x) : f ∈ K, w(f) = θ_j }, the norm restricted to root weight j.
pub fn weighted_norm(x: &FiniteVector, j: u32, space: &SpaceSpec) -> NormBounds {
    assert!(j >= 1);
    if x.is_zero() {
        return NormBounds::point(Q::zero());
    }
    let run = |round: Round| {
        let mut ctx = Ctx::new(x, space, round);
        let hi = ctx.len() - 1;
        let (split, _) = ctx.split_best(0, hi, j, true);
        space.theta(j, round) * split
    };
    let lo = run(Round::Down);
    let hi = if space.is_exact() { lo.clone() } else { run(Round::Up) };
    NormBounds { lo, hi }
}

/// Cheap certified upper bound for `weighted_norm`; used by checkers whose
/// assertions usually hold with slack.
pub fn weighted_norm_upper(x: &FiniteVector, j: u32, space: &SpaceSpec) -> Q {
    if x.is_zero() {
        return Q::zero();
    }
    let ax = x.abs();
    let l1 = ax.l1();
    let theta_j = space.theta(j, Round::Up);
    let theta_1_up = space.theta(1, Round::Up);
    let theta_1_dn = space.theta(1, Round::Down);
    let fam_up = famsup_upper(ax.entries(), space.family(j));
    let structured = &theta_1_up * &l1 + (q_one() - theta_1_dn) * fam_up;
    &theta_j * structured.min(l1)
}

const ORACLE_MAX_SUPPORT: usize = 10;

/// Exhaustive norm over all admissible families of subsets; the anti-drift
/// oracle for `norm`. Enumerates every union-of-successive-pieces family
/// directly from the definition; only the family membership test of the
/// piece minima is shared with the fast path (that test has its own
/// exhaustive oracle in `families::reference`).
pub fn brute_force_norm(x: &FiniteVector, space: &SpaceSpec) -> Result<NormBounds, NormError> {
    if x.support_len() > ORACLE_MAX_SUPPORT {
        return Err(NormError::SupportTooLarge {
            len: x.support_len(),
            max: ORACLE_MAX_SUPPORT,
        });
    }
    if x.is_zero() {
        return Ok(NormBounds::point(Q::zero()));
    }
    let lo = brute_force_run(x, space, Round::Down);
    let hi = if space.is_exact() {
        lo.clone()
    } else {
        brute_force_run(x, space, Round::Up)
    };
    Ok(NormBounds { lo, hi })
}

fn brute_force_run(x: &FiniteVector, space: &SpaceSpec, round: Round) -> Q {
    let idxs: Vec<u32> = x.entries().iter().map(|(i, _)| *i).collect();
    let vals: Vec<Q> = x.entries().iter().map(|(_, v)| v.abs()).collect();
    let mut memo: HashMap<u32, Q> = HashMap::new();
    let full = (1u32 << idxs.len()) - 1;
    bf_mask(full, &idxs, &vals, space, round, &mut memo)
}

fn bf_mask(
    mask: u32,
    idxs: &[u32],
    vals: &[Q],
    space: &SpaceSpec,
    round: Round,
    memo: &mut HashMap<u32, Q>,
) -> Q {
    if mask == 0 {
        return Q::zero();
    }
    if let Some(v) = memo.get(&mask) {
        return v.clone();
    }
    let bits: Vec<usize> = (0..idxs.len()).filter(|b| mask >> b & 1 == 1).collect();
    let mut best = bits.iter().map(|&b| vals[b].clone()).max().unwrap();

    // Every admissible family is a subset U of the support split into
    // consecutive chunks; chunk minima must lie in some F_n.
    let mut sub = mask;
    loop {
        if sub != 0 {
            let ubits: Vec<usize> = (0..idxs.len()).filter(|b| sub >> b & 1 == 1).collect();
            let d = ubits.len();
            for cut in 0u32..(1 << (d - 1)) {
                let mut minima: Vec<u32> = vec![idxs[ubits[0]]];
                let mut chunks: Vec<u32> = Vec::new();
                let mut cur = 1u32 << ubits[0];
                for (pos, &b) in ubits.iter().enumerate().skip(1) {
                    if cut >> (pos - 1) & 1 == 1 {
                        chunks.push(cur);
                        cur = 0;
                        minima.push(idxs[b]);
                    }
                    cur |= 1 << b;
                }
                chunks.push(cur);
                if chunks.len() == 1 && chunks[0] == mask {
                    // Identity family: θ_n f(whole) never beats the max.
                    continue;
                }
                let min_set = FiniteSet::new(minima).expect("increasing minima");
                let cap = (min_set.len() as u32).max(1);
                let Some(rank) = families::min_rank(&min_set, space.ladder, cap) else {
                    continue;
                };
                let rank = rank.max(1);
                let theta = space.theta(rank, round);
                let total = chunks
                    .iter()
                    .fold(Q::zero(), |acc, &c| acc + bf_mask(c, idxs, vals, space, round, memo));
                let cand = theta * total;
                if cand > best {
                    best = cand;
                }
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
    memo.insert(mask, best.clone());
    best
}

/// sup over F in `fam` and signs of Σ_{n∈F} ε_n g_n(x): equivalently the
/// family-constrained sup of |g_n(x)| placed at min supp g_n.
pub fn family_seminorm(
    x: &FiniteVector,
    functionals: &[NormingTree],
    fam: FamilyKind,
    space: &SpaceSpec,
) -> Result<NormBounds, NormError> {
    let mut lows = Vec::with_capacity(functionals.len());
    let mut highs = Vec::with_capacity(functionals.len());
    for g in functionals {
        let pos = g
            .min_support()
            .expect("norming trees have non-empty support");
        let (lo, hi) = eval_abs_bounds(g, x, space);
        lows.push((pos, lo));
        highs.push((pos, hi));
    }
    let sort_merge = |mut v: Vec<(u32, Q)>| {
        v.sort_by_key(|(i, _)| *i);
        // Distinct functionals may share a minimum only if malformed input;
        // merging by max keeps the sup sound.
        let mut out: Vec<(u32, Q)> = Vec::with_capacity(v.len());
        for (i, q) in v {
            match out.last_mut() {
                Some((j, w)) if *j == i => {
                    if q > *w {
                        *w = q;
                    }
                }
                _ => out.push((i, q)),
            }
        }
        out
    };
    let lo = families::family_sup(&sort_merge(lows), fam)
        .map_err(|e| NormError::Postcondition(e.to_string()))?;
    let hi = families::family_sup(&sort_merge(highs), fam)
        .map_err(|e| NormError::Postcondition(e.to_string()))?;
    Ok(NormBounds { lo, hi })
}

/// Interval for |g(x)| under enclosure weights.
pub fn eval_abs_bounds(g: &NormingTree, x: &FiniteVector, space: &SpaceSpec) -> (Q, Q) {
    let (lo, hi) = eval_bounds(g, x, space);
    if lo.is_negative() && hi.is_positive() {
        (Q::zero(), lo.abs().max(hi.abs()))
    } else {
        let a = lo.abs();
        let b = hi.abs();
        (a.clone().min(b.clone()), a.max(b))
    }
}

/// Interval for g(x) under enclosure weights (a point for exact kinds).
pub fn eval_bounds(g: &NormingTree, x: &FiniteVector, space: &SpaceSpec) -> (Q, Q) {
    match g {
        NormingTree::Leaf { sign, index } => {
            let v = x.get(*index) * q_int(*sign as i64);
            (v.clone(), v)
        }
        NormingTree::Internal { weight, children } => {
            let (mut lo, mut hi) = (Q::zero(), Q::zero());
            for c in children {
                let (clo, chi) = eval_bounds(c, x, space);
                lo += clo;
                hi += chi;
            }
            let (t_lo, t_hi) = space.theta_bounds(*weight);
            let new_lo = if lo.is_negative() { &t_hi * &lo } else { &t_lo * &lo };
            let new_hi = if hi.is_negative() { &t_lo * &hi } else { &t_hi * &hi };
            (new_lo, new_hi)
        }
    }
}

/// Pushes a block sequence of functionals onto the basis and norms the
/// result: ||Σ_i f_i(x) e_i||, checked against ||x|| as a postcondition.
pub fn coordinate_functional_bound(
    fs: &[&NormingTree],
    x: &FiniteVector,
    space: &SpaceSpec,
) -> Result<NormBounds, NormError> {
    for f in fs {
        f.validate(space)?;
    }
    if !NormingTree::is_block_sequence(fs) {
        return Err(NormError::NotBlock);
    }
    let mut lo_coords = Vec::new();
    let mut hi_coords = Vec::new();
    for (i, f) in fs.iter().enumerate() {
        let (alo, ahi) = eval_abs_bounds(f, x, space);
        let idx = (i + 1) as u32;
        if !ahi.is_zero() {
            hi_coords.push((idx, ahi));
        }
        if !alo.is_zero() {
            lo_coords.push((idx, alo));
        }
    }
    let lo = norm(&FiniteVector::from_pairs(lo_coords), space).lo;
    let hi = norm(&FiniteVector::from_pairs(hi_coords), space).hi;
    let value = NormBounds { lo, hi };

    let mut sp = space.clone();
    for _ in 0..3 {
        let nx = norm(x, &sp);
        if value.hi <= nx.lo {
            return Ok(value);
        }
        if value.lo > nx.hi {
            return Err(NormError::Postcondition(format!(
                "||Σ f_i(x) e_i|| = {value} exceeds ||x|| = {nx}"
            )));
        }
        if sp.is_exact() {
            return Err(NormError::Postcondition(format!(
                "||Σ f_i(x) e_i|| = {value} vs ||x|| = {nx}"
            )));
        }
        sp = sp.widened();
    }
    Err(NormError::Undecidable(
        "coordinate functional bound vs ||x||".into(),
    ))
}

/// Sound upper bound on family_sup; exact on the fast paths, trivial (l1)
/// when only the slow generic recursion would apply to a large support.
fn famsup_upper(entries: &[(u32, Q)], fam: FamilyKind) -> Q {
    let l1 = entries.iter().fold(Q::zero(), |acc, (_, v)| acc + v);
    let small = entries.len() <= 64;
    let rank1_monotone = fam.ladder == Ladder::S
        && fam.rank == 1
        && entries.windows(2).all(|w| w[0].1 >= w[1].1);
    let member = {
        let support: Vec<u32> = entries.iter().map(|(i, _)| *i).collect();
        families::is_member(&FiniteSet::new(support).unwrap(), fam)
    };
    if member {
        return l1;
    }
    if fam.ladder == Ladder::A || fam.rank == 0 || small || rank1_monotone {
        return families::family_sup(entries, fam).expect("non-negative entries");
    }
    l1
}

/// How the best value of a memoized interval was attained.
#[derive(Debug, Clone)]
enum Prov {
    /// Sup-norm at a support position.
    Sup(usize),
    /// θ_weight · Σ over pieces cut at the given start positions.
    Split { weight: u32, starts: Vec<usize> },
}

struct Ctx<'a> {
    space: &'a SpaceSpec,
    round: Round,
    idxs: Vec<u32>,
    vals: Vec<Q>,
    signs: Vec<i8>,
    prefix: Vec<Q>,
    memo: HashMap<(usize, usize), (Q, Prov)>,
    split_memo: HashMap<(u32, usize, usize, FamilyState), (Q, Vec<usize>)>,
    famsup_memo: HashMap<(usize, usize, u32), Q>,
    /// Additive slack making θ_up(n) + slack ≥ θ_up(m) for all m ≥ n.
    tail_slack: Q,
}

impl<'a> Ctx<'a> {
    fn new(x: &FiniteVector, space: &'a SpaceSpec, round: Round) -> Self {
        let idxs: Vec<u32> = x.entries().iter().map(|(i, _)| *i).collect();
        let vals: Vec<Q> = x.entries().iter().map(|(_, v)| v.abs()).collect();
        let signs: Vec<i8> = x
            .entries()
            .iter()
            .map(|(_, v)| if v.is_negative() { -1 } else { 1 })
            .collect();
        let mut prefix = Vec::with_capacity(vals.len() + 1);
        prefix.push(Q::zero());
        for v in &vals {
            let last = prefix.last().unwrap().clone();
            prefix.push(last + v);
        }
        let tail_slack = match &space.theta.kind {
            ThetaKind::LogEnclosure { bits } => pow2(-(*bits as i64) + 2),
            _ => Q::zero(),
        };
        Ctx {
            space,
            round,
            idxs,
            vals,
            signs,
            prefix,
            memo: HashMap::new(),
            split_memo: HashMap::new(),
            famsup_memo: HashMap::new(),
            tail_slack,
        }
    }

    fn len(&self) -> usize {
        self.idxs.len()
    }

    fn theta(&self, n: u32) -> Q {
        self.space.theta(n, self.round)
    }

    /// Upper bound for θ(m) over all m ≥ n, in this run's rounding.
    fn theta_tail_bound(&self, n: u32) -> Q {
        self.space.theta(n, Round::Up) + &self.tail_slack
    }

    fn l1(&self, lo: usize, hi: usize) -> Q {
        &self.prefix[hi + 1] - &self.prefix[lo]
    }

    fn max_val_pos(&self, lo: usize, hi: usize) -> usize {
        (lo..=hi).max_by_key(|&p| &self.vals[p]).unwrap()
    }

    /// min(l1, max(maxval, θ_1 l1)): valid for every norm of a restriction.
    fn quick_upper(&self, lo: usize, hi: usize) -> Q {
        let l1 = self.l1(lo, hi);
        let maxv = self.vals[self.max_val_pos(lo, hi)].clone();
        let t1 = self.space.theta(1, Round::Up);
        (t1 * &l1).max(maxv).min(l1)
    }

    fn famsup(&mut self, lo: usize, hi: usize, rank: u32) -> Q {
        let key = (lo, hi, rank);
        if let Some(v) = self.famsup_memo.get(&key) {
            return v.clone();
        }
        let entries: Vec<(u32, Q)> = (lo..=hi)
            .map(|p| (self.idxs[p], self.vals[p].clone()))
            .collect();
        let v = famsup_upper(&entries, self.space.family(rank));
        self.famsup_memo.insert(key, v.clone());
        v
    }

    /// Norm of the restriction to support positions [lo, hi]; exact for
    /// this run's weights.
    fn norm_interval(&mut self, lo: usize, hi: usize) -> Q {
        if let Some((v, _)) = self.memo.get(&(lo, hi)) {
            return v.clone();
        }
        let count = hi - lo + 1;
        let sup_pos = self.max_val_pos(lo, hi);
        let mut best = self.vals[sup_pos].clone();
        let mut prov = Prov::Sup(sup_pos);
        let l1 = self.l1(lo, hi);

        // All-singleton selections: if the whole support interval is a
        // member of F_n the split θ_n Σ |x_i| is admissible and attained.
        if count >= 2 {
            if let Some(rank) = self.interval_min_rank(lo, hi) {
                let cand = self.theta(rank) * &l1;
                if cand > best {
                    best = cand;
                    prov = Prov::Split { weight: rank, starts: (lo..=hi).collect() };
                }
            }
        }

        let mut n = 1u32;
        while (n as usize) <= count {
            if self.theta_tail_bound(n) * &l1 <= best {
                break;
            }
            // Certified bound over all weight-n splits: each piece norm is
            // at most θ_1 l1(piece) + (1−θ_1) maxval(piece), and the piece
            // argmaxes spread the start selection, so their total is capped
            // by the family sup.
            let t1_up = self.space.theta(1, Round::Up);
            let t1_dn = self.space.theta(1, Round::Down);
            let fam_bound = self.famsup(lo, hi, n);
            let ub = self.theta(n) * ((&t1_up * &l1 + (q_one() - t1_dn) * fam_bound).min(l1.clone()));
            if ub <= best {
                n += 1;
                continue;
            }
            let (split, starts) = self.split_best(lo, hi, n, false);
            let cand = self.theta(n) * split;
            if cand > best {
                best = cand;
                prov = Prov::Split { weight: n, starts };
            }
            n += 1;
        }

        self.memo.insert((lo, hi), (best.clone(), prov));
        best
    }

    /// Least rank whose family contains the whole support interval, if a
    /// small one exists. Sets containing 1 next to other points belong to
    /// no family on either ladder.
    fn interval_min_rank(&self, lo: usize, hi: usize) -> Option<u32> {
        let count = (hi - lo + 1) as u32;
        if self.idxs[lo] == 1 && count >= 2 {
            return None;
        }
        match self.space.ladder {
            Ladder::A => Some(count),
            Ladder::S => {
                let cap = count.min(64);
                (1..=cap).find(|&r| {
                    let mut st = FamilyState::new(FamilyKind::s(r));
                    (lo..=hi).all(|p| st.insert(self.idxs[p]))
                })
            }
        }
    }

    /// Best Σ_c N(E_c) over F_n-admissible start selections inside
    /// [lo, hi]; pieces tile from the first start to hi. A selection with a
    /// single piece covering the whole interval is permitted only when
    /// `allow_trivial` (used for weight-pinned norms).
    fn split_best(
        &mut self,
        lo: usize,
        hi: usize,
        n: u32,
        allow_trivial: bool,
    ) -> (Q, Vec<usize>) {
        let fam = self.space.family(n);
        let mut best = Q::zero();
        let mut best_starts: Vec<usize> = Vec::new();
        for s1 in lo..=hi {
            // Later first starts only see a smaller tail.
            if self.l1(s1, hi) <= best {
                break;
            }
            let mut st = FamilyState::new(fam);
            if !st.insert(self.idxs[s1]) {
                continue; // rank-0 arity or A(0): no non-trivial split
            }
            if s1 == lo && !allow_trivial {
                // First piece must be cut before hi.
                for t in (lo + 1)..=hi {
                    let mut st2 = st.clone();
                    if !st2.insert(self.idxs[t]) {
                        break;
                    }
                    let optimistic = self.quick_upper(lo, t - 1) + self.l1(t, hi);
                    if optimistic <= best {
                        continue;
                    }
                    let piece = self.norm_interval(lo, t - 1);
                    let (rest, rest_starts) = self.split_tail(t, hi, n, st2);
                    let cand = piece + rest;
                    if cand > best {
                        best = cand;
                        let mut starts = vec![lo, t];
                        starts.extend(rest_starts);
                        best_starts = starts;
                    }
                }
            } else {
                let (cand, starts) = self.split_tail(s1, hi, n, st);
                if cand > best {
                    best = cand;
                    let mut all = vec![s1];
                    all.extend(starts);
                    best_starts = all;
                }
            }
        }
        (best, best_starts)
    }

    /// A piece begins at `s` with acceptor state `st` (already updated for
    /// `s`); returns the best total over completions up to `hi`, plus the
    /// positions of the remaining starts after `s`.
    fn split_tail(&mut self, s: usize, hi: usize, n: u32, mut st: FamilyState) -> (Q, Vec<usize>) {
        st.clamp((hi - s) as u32);
        let key = (n, s, hi, st.clone());
        if let Some(v) = self.split_memo.get(&key) {
            return v.clone();
        }
        // If the whole tail fits as singleton pieces, that selection
        // attains the l1 ceiling and nothing can exceed it.
        {
            let mut sim = st.clone();
            if ((s + 1)..=hi).all(|p| sim.insert(self.idxs[p])) {
                let out = (self.l1(s, hi), ((s + 1)..=hi).collect::<Vec<_>>());
                self.split_memo.insert(key, out.clone());
                return out;
            }
        }
        let mut best = self.norm_interval(s, hi);
        let mut best_starts: Vec<usize> = Vec::new();
        for t in (s + 1)..=hi {
            let mut st2 = st.clone();
            if !st2.insert(self.idxs[t]) {
                break; // acceptance is value-independent: exhausted for good
            }
            let optimistic = self.quick_upper(s, t - 1) + self.l1(t, hi);
            if optimistic <= best {
                continue;
            }
            let piece = self.norm_interval(s, t - 1);
            let (rest, rest_starts) = self.split_tail(t, hi, n, st2);
            let cand = piece + rest;
            if cand > best {
                best = cand;
                let mut starts = vec![t];
                starts.extend(rest_starts);
                best_starts = starts;
            }
        }
        let out = (best, best_starts);
        self.split_memo.insert(key, out.clone());
        out
    }

    /// Reconstruct an optimizer tree for the memoized interval.
    fn witness(&mut self, lo: usize, hi: usize) -> NormingTree {
        self.norm_interval(lo, hi);
        let (_, prov) = self.memo.get(&(lo, hi)).expect("just computed").clone();
        match prov {
            Prov::Sup(pos) => NormingTree::leaf(self.signs[pos], self.idxs[pos]),
            Prov::Split { weight, starts } => {
                let mut children = Vec::with_capacity(starts.len());
                for (c, &sc) in starts.iter().enumerate() {
                    let end = if c + 1 < starts.len() { starts[c + 1] - 1 } else { hi };
                    children.push(self.witness(sc, end));
                }
                NormingTree::internal(weight, children)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::q;

    fn s_space() -> SpaceSpec {
        SpaceSpec::schreier_reciprocal()
    }

    fn vec_of(pairs: &[(u32, Q)]) -> FiniteVector {
        FiniteVector::from_pairs(pairs.iter().cloned())
    }

    #[test]
    fn unit_vectors_are_normalized() {
        let sp = s_space();
        assert_eq!(norm(&FiniteVector::unit(5), &sp), NormBounds::point(q_int(1)));
        assert_eq!(
            norm(&FiniteVector::unit(5).scale(&q_int(2)), &sp),
            NormBounds::point(q_int(2))
        );
        assert_eq!(norm(&FiniteVector::zero(), &sp), NormBounds::point(q_int(0)));
    }

    #[test]
    fn norm_examples() {
        let sp = s_space();
        let e23 = FiniteVector::unit(2).add(&FiniteVector::unit(3));
        assert_eq!(norm(&e23, &sp).exact().unwrap(), &q_int(1));

        let e12 = FiniteVector::unit(1).add(&FiniteVector::unit(2));
        assert_eq!(norm(&e12, &sp).exact().unwrap(), &q_int(1));
    }

    #[test]
    fn weighted_norm_examples() {
        let sp = s_space();
        let e23 = FiniteVector::unit(2).add(&FiniteVector::unit(3));
        assert_eq!(weighted_norm(&e23, 1, &sp).exact().unwrap(), &q_int(1));
        assert_eq!(weighted_norm(&e23, 2, &sp).exact().unwrap(), &q(2, 3));
        assert_eq!(
            weighted_norm(&FiniteVector::unit(1), 1, &sp).exact().unwrap(),
            &q(1, 2)
        );
    }

    #[test]
    fn norm_is_max_of_weighted_norms() {
        let sp = s_space();
        let x = vec_of(&[(2, q(1, 2)), (3, q_int(1)), (5, q(3, 4)), (6, q(1, 3))]);
        let n = norm(&x, &sp).exact().unwrap().clone();
        let mut m = x.sup_abs();
        for j in 1..=8 {
            let wj = weighted_norm(&x, j, &sp).exact().unwrap().clone();
            assert!(wj <= n);
            if wj > m {
                m = wj;
            }
        }
        assert_eq!(m, n);
    }

    #[test]
    fn matches_brute_force_small() {
        let sp = s_space();
        let cases = [
            vec![(2u32, q(1, 2)), (3, q(-1, 3)), (4, q_int(2))],
            vec![(1, q_int(1)), (2, q_int(1)), (3, q_int(1))],
            vec![(3, q(2, 3)), (5, q(2, 3)), (6, q(2, 3)), (9, q(1, 5))],
            vec![(2, q(1, 4)), (4, q(5, 2)), (7, q(-3, 2)), (8, q(1, 6)), (9, q_int(1))],
        ];
        for pairs in cases {
            let x = vec_of(&pairs);
            let fast = norm(&x, &sp);
            let slow = brute_force_norm(&x, &sp).unwrap();
            assert_eq!(fast, slow, "mismatch on {x:?}");
        }
    }

    #[test]
    fn matches_brute_force_schlumprecht() {
        let sp = SpaceSpec::schlumprecht(48);
        let cases = [
            vec![(1u32, q_int(1)), (2, q(1, 2))],
            vec![(2, q(1, 2)), (3, q(-1, 3)), (5, q_int(1))],
            vec![(1, q(1, 3)), (3, q(1, 3)), (4, q(1, 3)), (6, q(2, 3))],
        ];
        for pairs in cases {
            let x = vec_of(&pairs);
            let fast = norm(&x, &sp);
            let slow = brute_force_norm(&x, &sp).unwrap();
            assert_eq!(fast, slow, "mismatch on {x:?}");
        }
    }

    #[test]
    fn matches_brute_force_randomized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let spaces = [s_space(), SpaceSpec::schlumprecht(48)];
        for case in 0..60 {
            let sp = &spaces[case % 2];
            let len = rng.gen_range(1..=6);
            let mut idxs: Vec<u32> = (0..len).map(|_| rng.gen_range(1..=14)).collect();
            idxs.sort_unstable();
            idxs.dedup();
            let pairs: Vec<(u32, Q)> = idxs
                .iter()
                .map(|&i| {
                    let d = rng.gen_range(1..=6i64);
                    let n = rng.gen_range(-3 * d..=3 * d);
                    (i, q(n, d))
                })
                .collect();
            let x = FiniteVector::from_pairs(pairs);
            let fast = norm(&x, sp);
            let slow = brute_force_norm(&x, sp).unwrap();
            assert_eq!(fast, slow, "case {case} on {x:?}");
        }
    }

    #[test]
    fn witness_attains_norm() {
        let sp = s_space();
        let x = vec_of(&[(2, q(1, 2)), (3, q(-1, 3)), (4, q_int(2)), (7, q(1, 5))]);
        let (b, w) = norm_with_witness(&x, &sp);
        let f = w.unwrap();
        f.validate(&sp).unwrap();
        assert_eq!(&f.eval(&x, &sp, Round::Down), b.exact().unwrap());
    }

    #[test]
    fn oracle_rejects_large_support() {
        let sp = s_space();
        let x = vec_of(&(1..=11).map(|i| (i as u32 + 1, q_int(1))).collect::<Vec<_>>());
        assert!(matches!(
            brute_force_norm(&x, &sp),
            Err(NormError::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn family_seminorm_examples() {
        let sp = s_space();
        let x = FiniteVector::unit(2).add(&FiniteVector::unit(3));
        let g = vec![NormingTree::leaf(1, 2), NormingTree::leaf(1, 3)];
        let v = family_seminorm(&x, &g, FamilyKind::s(1), &sp).unwrap();
        assert_eq!(v.exact().unwrap(), &q_int(2));

        let zero = family_seminorm(&FiniteVector::zero(), &g, FamilyKind::s(1), &sp).unwrap();
        assert_eq!(zero.exact().unwrap(), &q_int(0));

        let single = family_seminorm(&x, &g[..1].to_vec(), FamilyKind::s(2), &sp).unwrap();
        assert_eq!(single.exact().unwrap(), &q_int(1));
    }

    #[test]
    fn coordinate_bound_example() {
        let sp = s_space();
        let x = FiniteVector::unit(2).add(&FiniteVector::unit(3));
        let f2 = NormingTree::leaf(1, 2);
        let f3 = NormingTree::leaf(1, 3);
        let b = coordinate_functional_bound(&[&f2, &f3], &x, &sp).unwrap();
        // ||e_1 + e_2|| = 1
        assert_eq!(b.exact().unwrap(), &q_int(1));

        let empty: [&NormingTree; 0] = [];
        let z = coordinate_functional_bound(&empty, &x, &sp).unwrap();
        assert_eq!(z.exact().unwrap(), &q_int(0));
    }

    #[test]
    fn unconditional_and_monotone_spot() {
        let sp = s_space();
        let x = vec_of(&[(2, q(1, 2)), (3, q(-2, 3)), (5, q_int(1))]);
        assert_eq!(norm(&x, &sp), norm(&x.abs(), &sp));
        let smaller = vec_of(&[(2, q(1, 4)), (3, q(1, 3)), (5, q(1, 2))]);
        assert!(norm(&smaller, &sp).lo <= norm(&x, &sp).lo);
    }
}
