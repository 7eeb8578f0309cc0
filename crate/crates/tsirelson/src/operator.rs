//! The diagonal-style operator assembled from bundle functionals, with
//! certified boundedness, non-compactness and kernel-probe machinery.
//!
//! T x = Σ_n g_n(x) e_{t_n}, where g_n is the norming functional of the
//! n-th bundle and the targets t_n come from the index sequence (r_j). The
//! sequence must tame two exact inequalities tying it to the core tree
//! (the dilution and threshold conditions below); everything else about T
//! is certified through the tree certificates of its functionals.

use crate::core_tree::CoreTree;
use crate::families::{self, FamilyKind, FiniteSet, Ladder};
use crate::norm;
use crate::ratio::{format_q, pow2, q_int, q_one, Q};
use crate::report::Report;
use crate::ris::{build_ris_bundle, BundleArtifact, BundleParams, RisError};
use crate::space::SpaceSpec;
use crate::theta::{Round, ThetaKind, ThetaSequence};
use crate::tree::NormingTree;
use crate::vector::FiniteVector;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, thiserror::Error)]
pub enum OperatorError {
    #[error("the shift-ratio condition fails for this weight kind at c = {c}: ratio at k = {witness} is not above c")]
    RatioFails { c: String, witness: u32 },
    #[error("shift-ratio comparison undecidable at available precision (k = {0})")]
    RatioUndecidable(u32),
    #[error("r-sequence must be strictly increasing")]
    RSequence,
    #[error("core of {core} nodes is too small for an r-sequence of length {need}")]
    CoreTooSmall { core: usize, need: usize },
    #[error("dilution condition fails at j = {j}: {detail}")]
    Dilution { j: usize, detail: String },
    #[error("threshold condition fails at j = {j}: k = {k} exceeds m = {m}")]
    Threshold { j: usize, k: u32, m: u32 },
    #[error("operator needs at least {0} bundles")]
    TooFewBundles(usize),
    #[error("functionals are not a block sequence")]
    NotBlock,
    #[error(transparent)]
    Bundle(#[from] RisError),
    #[error(transparent)]
    Norm(#[from] norm::NormError),
    #[error(transparent)]
    Tree(#[from] crate::tree::TreeViolation),
}

/// Least k such that θ_{r+k'}/θ_{k'} > c for every k' ≥ k, exact per
/// weight kind; the tail is covered by a per-kind monotonicity argument
/// (the ratio is nondecreasing in k' for the supported kinds, constant for
/// geometric tails).
pub fn shift_ratio_index(theta: &ThetaSequence, c: &Q, r: u32) -> Result<u32, OperatorError> {
    assert!(c > &Q::zero() && c < &q_one());
    if r == 0 {
        return Ok(1); // ratio is identically 1 > c
    }
    let certified_above = |k: u32| -> Option<bool> {
        // θ_{r+k}/θ_k > c  ⟺  θ_{r+k} > c θ_k, decided by enclosures.
        let (num_lo, num_hi) = theta.theta_bounds(r + k);
        let (den_lo, den_hi) = theta.theta_bounds(k);
        if num_lo > c * &den_hi {
            return Some(true);
        }
        if num_hi <= c * &den_lo {
            return Some(false);
        }
        None
    };
    match &theta.kind {
        ThetaKind::Geometric { ratio } => {
            // Constant ratio q^r.
            let mut p = q_one();
            for _ in 0..r {
                p *= ratio;
            }
            if &p > c {
                Ok(1)
            } else {
                Err(OperatorError::RatioFails { c: format_q(c), witness: 1 })
            }
        }
        ThetaKind::ReciprocalShift => {
            // Ratio (k+1)/(r+k+1), increasing in k.
            let mut k = 1u32;
            loop {
                match certified_above(k) {
                    Some(true) => return Ok(k),
                    _ => k += 1,
                }
            }
        }
        ThetaKind::LogEnclosure { .. } => {
            // Ratio log2(k+1)/log2(r+k+1), increasing in k (t ln t grows).
            let mut k = 1u32;
            let mut undecided = 0u32;
            loop {
                match certified_above(k) {
                    Some(true) => return Ok(k),
                    Some(false) => k += 1,
                    None => {
                        undecided += 1;
                        if undecided > 4 {
                            return Err(OperatorError::RatioUndecidable(k));
                        }
                        k += 1;
                    }
                }
            }
        }
        ThetaKind::Table { values, tail_ratio } => {
            let len = values.len() as u32;
            // In the tail zone the ratio is the constant tail_ratio^r.
            let mut p = q_one();
            for _ in 0..r {
                p *= tail_ratio;
            }
            if &p <= c {
                return Err(OperatorError::RatioFails { c: format_q(c), witness: len.max(1) });
            }
            let mut k_r = 1;
            for k in 1..=len {
                if certified_above(k) != Some(true) {
                    k_r = k + 1;
                }
            }
            Ok(k_r)
        }
    }
}

/// Verified table of shift-ratio indices for a fixed constant c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioThreshold {
    #[serde(with = "crate::ratio::serde_str")]
    pub c: Q,
    pub table: BTreeMap<u32, u32>,
}

impl RatioThreshold {
    pub fn build(theta: &ThetaSequence, c: Q, rs: &[u32]) -> Result<Self, OperatorError> {
        let mut table = BTreeMap::new();
        for &r in rs {
            table.insert(r, shift_ratio_index(theta, &c, r)?);
        }
        Ok(RatioThreshold { c, table })
    }

    pub fn index(&self, theta: &ThetaSequence, r: u32) -> Result<u32, OperatorError> {
        match self.table.get(&r) {
            Some(&k) => Ok(k),
            None => shift_ratio_index(theta, &self.c, r),
        }
    }
}

/// Finite evidence for the dilation limit θ_{nk}/θ_n → 1 on the A ladder:
/// samples n = 2^i over the window and reports the minimum ratio and its
/// trend. Evidence only, never a certificate.
pub fn scan_dilation_ratio(theta: &ThetaSequence, k: u32, max_exp: u32) -> Report {
    let mut rep = Report::new(format!("dilation ratio theta_{{n k}}/theta_n for k = {k}"));
    rep.premise_empirical(
        "finite window evidence",
        None,
        format!("sampled n = 2^i for i <= {max_exp}"),
    );
    if k == 1 {
        rep.require(true, "ratio identically 1", "k = 1");
        return rep;
    }
    if let ThetaKind::Geometric { ratio } = &theta.kind {
        rep.require(
            false,
            "geometric weights fail the dilation limit",
            format!("ratio decays like {}^(n(k-1))", format_q(ratio)),
        );
        return rep;
    }
    let mut lowers: Vec<Q> = Vec::new();
    for i in 0..=max_exp {
        let n = 1u32 << i;
        let (num_lo, _) = theta.theta_bounds(n.saturating_mul(k));
        let (_, den_hi) = theta.theta_bounds(n);
        lowers.push(num_lo / den_hi);
    }
    let min = lowers.iter().min().unwrap().clone();
    rep.witness("minimum sampled ratio (lower bound)", format_q(&min));
    let nondecreasing = lowers.windows(2).all(|w| w[0] <= w[1]);
    rep.witness("sampled ratios nondecreasing", nondecreasing);
    let last = lowers.last().unwrap();
    rep.witness("last sampled ratio", format_q(last));
    rep
}

/// The operator: functionals, targets and the provenance needed by the
/// checkers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub functionals: Vec<NormingTree>,
    pub targets: Vec<u32>,
    pub r_seq: Vec<u32>,
    #[serde(with = "crate::ratio::serde_str")]
    pub c: Q,
    pub heights: Vec<u32>,
    pub core: CoreTree,
    pub relaxed: bool,
    pub bundles: Vec<BundleArtifact>,
}

/// Build the operator from bundles of the given heights: g_n is the n-th
/// bundle's functional and t_n = r_{n+1}. The r-sequence must satisfy two
/// exact conditions against the core enumeration (μ_j):
///
///   dilution:  θ_{r_j} (Σ_{i<j} M_i + Σ_{i<j} m_i) < 2^{-j},
///   threshold: k_{r_j + ord(μ_j)} ≤ m_j,
///
/// (on the A ladder the dilution sum drops the periods and the threshold
/// reads k_{r_j}). These are hard invariants; the softer core parameter
/// conditions are reported and gate nothing in relaxed mode.
pub fn build_operator(
    core: &CoreTree,
    r_seq: &[u32],
    heights: &[u32],
    c: &Q,
    base: &BundleParams,
    space: &SpaceSpec,
) -> Result<(OperatorSpec, Report), OperatorError> {
    let mut rep = Report::new("operator construction invariants");
    if r_seq.windows(2).any(|w| w[0] >= w[1]) {
        return Err(OperatorError::RSequence);
    }
    if heights.len() + 1 != r_seq.len() {
        return Err(OperatorError::CoreTooSmall {
            core: r_seq.len(),
            need: heights.len() + 1,
        });
    }
    if core.len() < r_seq.len() + 1 {
        return Err(OperatorError::CoreTooSmall { core: core.len(), need: r_seq.len() + 1 });
    }

    // Dilution and threshold conditions, exact.
    for (j, &r_j) in r_seq.iter().enumerate() {
        let j1 = j + 1; // conditions are indexed from 1
        let mut weight_sum = Q::zero();
        for i in 0..j1 {
            weight_sum += q_int(core.m(i) as i64);
            if space.ladder == Ladder::S {
                weight_sum += q_int(core.period(i) as i64);
            }
        }
        let (_, t_hi) = space.theta_bounds(r_j);
        let lhs = &t_hi * &weight_sum;
        let cap = pow2(-(j1 as i64));
        if lhs >= cap {
            return Err(OperatorError::Dilution {
                j: j1,
                detail: format!("{} >= {}", format_q(&lhs), format_q(&cap)),
            });
        }
        rep.witness(
            format!("dilution margin at {j1}"),
            format_q(&(&cap - &lhs)),
        );

        let shift = match space.ladder {
            Ladder::S => r_j + core.ord(j1),
            Ladder::A => r_j,
        };
        let k = shift_ratio_index(&space.theta, c, shift)?;
        let m_j = core.m(j1);
        if k > m_j {
            return Err(OperatorError::Threshold { j: j1, k, m: m_j });
        }
        rep.witness(format!("threshold at {j1}"), format!("k = {k} <= m = {m_j}"));
    }

    // Bundles, built as successive blocks.
    let mut bundles = Vec::with_capacity(heights.len());
    let mut functionals = Vec::with_capacity(heights.len());
    let mut start = base.min_start.max(2);
    let mut relaxed = base.relaxed;
    for &h in heights {
        let params = BundleParams { height: h, min_start: start, ..base.clone() };
        let b = build_ris_bundle(core, &params, space)?;
        relaxed |= !b.build_reports.iter().all(|r| r.premises_hold());
        start = b.vector().max_support().unwrap() + 1;
        functionals.push(b.functional().clone());
        bundles.push(b.artifact());
    }
    let refs: Vec<&NormingTree> = functionals.iter().collect();
    if !NormingTree::is_block_sequence(&refs) {
        return Err(OperatorError::NotBlock);
    }
    for f in &functionals {
        f.validate(space)?;
    }
    let targets: Vec<u32> = r_seq[1..].to_vec();
    rep.premise("functionals valid and block", true, format!("{} bundles", functionals.len()));
    rep.premise("targets strictly increasing", true, format!("{targets:?}"));
    rep.premise("premises relaxed", true, format!("relaxed = {relaxed}"));

    Ok((
        OperatorSpec {
            functionals,
            targets,
            r_seq: r_seq.to_vec(),
            c: c.clone(),
            heights: heights.to_vec(),
            core: core.clone(),
            relaxed,
            bundles,
        },
        rep,
    ))
}

/// T x = Σ_n g_n(x) e_{t_n}, exact.
pub fn apply(spec: &OperatorSpec, x: &FiniteVector, space: &SpaceSpec) -> FiniteVector {
    FiniteVector::from_pairs(
        spec.functionals
            .iter()
            .zip(&spec.targets)
            .map(|(g, &t)| (t, g.eval(x, space, Round::Down)))
            .filter(|(_, v)| !v.is_zero()),
    )
}

/// Certified upper bound Σ_j (ε_j j + 4 ε_j N_j) for the diagonal operator
/// under the spreading hypotheses; the tail must be supplied as a
/// certified closed-form value or the result is only a partial sum.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorBound {
    pub partial: Q,
    pub tail: Option<Q>,
    pub certified: bool,
}

impl OperatorBound {
    pub fn total(&self) -> Option<Q> {
        self.tail.as_ref().map(|t| &self.partial + t)
    }
}

pub fn operator_norm_bound(eps: &[Q], caps: &[u32], tail: Option<Q>) -> OperatorBound {
    assert_eq!(eps.len(), caps.len());
    let mut partial = Q::zero();
    for (j, (e, &n)) in eps.iter().zip(caps).enumerate() {
        let jq = q_int(j as i64 + 1);
        partial += e * jq + q_int(4) * e * q_int(n as i64);
    }
    OperatorBound { certified: tail.is_some(), partial, tail }
}

/// Exact Σ_{j>J} x^j for |x| < 1 (rational x).
pub fn geometric_tail(x: &Q, j: u32) -> Q {
    assert!(x.abs() < q_one());
    let mut p = q_one();
    for _ in 0..=j {
        p *= x;
    }
    p / (q_one() - x)
}

/// Exact Σ_{j>J} j x^j for |x| < 1 (rational x).
pub fn arith_geometric_tail(x: &Q, j: u32) -> Q {
    assert!(x.abs() < q_one());
    let mut p = q_one();
    for _ in 0..=j {
        p *= x;
    }
    let one_minus = q_one() - x;
    p * (q_int(j as i64 + 1) * &one_minus + x) / (&one_minus * &one_minus)
}

/// The same-node sum certificate: for bundles labelled by F and a core
/// node β, the flattened children of all functionals mapped to β assemble
/// into one valid tree g of weight index m_β + ord(β) + r, giving
///
///   Σ_{n∈F} Σ_{v(α)=β} f_α^n = (θ_{m_β} / θ_{m_β+ord(β)+r}) · g,
///
/// so the sum's dual norm is at most that ratio, which stays below 1/c
/// whenever m_β clears the shift-ratio threshold.
pub fn certify_same_node_sum(
    bundles: &[(u32, &BundleArtifact)],
    beta: &[u32],
    r: u32,
    c: &Q,
    space: &SpaceSpec,
) -> Report {
    let mut rep = Report::new("same-node functional sum certificate");
    let labels = FiniteSet::new(bundles.iter().map(|(n, _)| *n).collect());
    let labels = match labels {
        Ok(l) => l,
        Err(e) => {
            rep.require(false, "bundle labels increasing", e);
            return rep;
        }
    };
    rep.premise(
        "label set in S(r)",
        families::is_member(&labels, FamilyKind { ladder: space.ladder, rank: r }),
        format!("{labels:?} vs rank {r}"),
    );
    rep.premise(
        "labels beyond the node level",
        labels.min().map(|m| m as usize > beta.len()).unwrap_or(false),
        format!("min label vs level {}", beta.len()),
    );

    let core = &bundles[0].1.core;
    let Some(beta_id) = core.node_by_path(beta) else {
        rep.require(false, "core node exists", format!("{beta:?}"));
        return rep;
    };
    let m_beta = core.m(beta_id);
    let ord = core.ord(beta_id);
    match shift_ratio_index(&space.theta, c, r + ord) {
        Ok(k) => rep.premise(
            "node rank clears the shift-ratio threshold",
            m_beta >= k,
            format!("m = {m_beta} vs k = {k}"),
        ),
        Err(e) => rep.premise("node rank clears the shift-ratio threshold", false, e.to_string()),
    }

    // Flatten the children of every functional mapped to β, in block order.
    let mut flat: Vec<NormingTree> = Vec::new();
    let mut count = 0usize;
    for (_, art) in bundles {
        for path in art.paths_with_core(beta) {
            match art.functional_at(path) {
                Some(NormingTree::Internal { weight, children }) if *weight == m_beta => {
                    count += 1;
                    flat.extend(children.iter().cloned());
                }
                _ => {
                    rep.require(false, "mapped node is internal with the node's rank", format!("{path:?}"));
                    return rep;
                }
            }
        }
    }
    rep.witness("functionals combined", count);

    let big = m_beta + ord + r;
    let g = NormingTree::internal(big, flat);
    match g.validate(space) {
        Ok(()) => rep.require(true, "certificate tree validates", format!("weight index {big}")),
        Err(e) => {
            // Certificate failure, distinct from a hypothesis failure.
            rep.require(false, "certificate tree validates", e);
            return rep;
        }
    }

    let (tm_lo, tm_hi) = space.theta_bounds(m_beta);
    let (tb_lo, tb_hi) = space.theta_bounds(big);
    let _ = (tm_lo, tb_hi);
    let ratio_hi = tm_hi / tb_lo;
    let inv_c = q_one() / c;
    rep.require(
        ratio_hi <= inv_c,
        "scaling ratio within 1/c",
        format!("{} <= {}", format_q(&ratio_hi), format_q(&inv_c)),
    );
    rep.witness("dual norm bound for the sum", format_q(&ratio_hi));

    // Evaluation lower bounds on the bundle vectors.
    for (n, art) in bundles {
        let mut total = Q::zero();
        for path in art.paths_with_core(beta) {
            if let Some(f) = art.functional_at(path) {
                total += f.eval(&art.vector, space, Round::Down);
            }
        }
        let upper = quick_norm_upper(&art.vector, space);
        if !upper.is_zero() {
            rep.witness(
                format!("dual lower bound from bundle {n}"),
                format_q(&(total.abs() / upper)),
            );
        }
    }
    rep
}

/// min(l1, max(sup, θ_1 l1)): a cheap certified norm upper bound.
fn quick_norm_upper(x: &FiniteVector, space: &SpaceSpec) -> Q {
    let l1 = x.l1();
    let t1 = space.theta(1, Round::Up);
    (t1 * &l1).max(x.sup_abs()).min(l1)
}

/// The level-cut decomposition: every functional f_n splits across the
/// cut {μ_j} ∪ tail_set(j) of the core; subtracting the μ_j part leaves
/// Σ_{β ∈ tail} c_β (same-node sums), so its norm is bounded by the
/// tail-set certificates via the triangle inequality, with total at most
/// n_j / c.
pub fn certify_level_cut(
    bundles: &[(u32, &BundleArtifact)],
    j: usize,
    r: u32,
    c: &Q,
    space: &SpaceSpec,
) -> Report {
    let mut rep = Report::new("level-cut decomposition certificate");
    let core = &bundles[0].1.core;
    if j == 0 || j >= core.len() {
        rep.require(false, "cut node is a non-root core node", j);
        return rep;
    }
    let level = core.level(j);
    for (n, art) in bundles {
        rep.premise(
            format!("bundle {n} deep enough for internal cut nodes"),
            art.height as usize >= level + 2,
            format!("height {} vs level {level}", art.height),
        );
    }

    let tail = core.tail_set(j);
    let n_j = tail.len();
    rep.witness("tail-set size", n_j);

    // Cut cover: the subtrees mapped to the cut partition every leaf.
    for (n, art) in bundles {
        let mut cut_paths: Vec<&[u32]> = Vec::new();
        for &b in tail.iter().chain(std::iter::once(&j)) {
            cut_paths.extend(art.paths_with_core(core.path(b)));
        }
        let no_nesting = cut_paths
            .iter()
            .all(|p| !cut_paths.iter().any(|q| q.len() < p.len() && p.starts_with(q)));
        let mut covered = 0usize;
        for p in &cut_paths {
            if let Some(f) = art.functional_at(p) {
                covered += f.support().len();
            }
        }
        let total = art.functional.support().len();
        rep.require(
            no_nesting && covered == total,
            format!("cut partitions the leaves of bundle {n}"),
            format!("{covered} of {total}"),
        );
        // Scale identity: the root functional restricted below a cut node
        // is exactly the ancestor weight product times the subtree.
        for p in &cut_paths {
            let computed = art.scale_of(p, space, Round::Down).unwrap_or_else(Q::zero);
            let path_core = art
                .v_map
                .iter()
                .find(|(t, _)| t.as_slice() == *p)
                .map(|(_, c)| c.clone())
                .unwrap_or_default();
            let expected = core
                .node_by_path(&path_core)
                .map(|id| core.scale(id, space, Round::Down))
                .unwrap_or_else(Q::zero);
            if computed != expected {
                rep.require(
                    false,
                    format!("branch scale matches the core at {p:?}"),
                    format!("{} vs {}", format_q(&computed), format_q(&expected)),
                );
            }
        }
    }

    // Per-tail-node certificates and the triangle total.
    let mut total = Q::zero();
    let mut all_ok = true;
    for &b in &tail {
        let sub = certify_same_node_sum(bundles, core.path(b), r, c, space);
        let ok = sub.passed() && sub.premises_hold();
        all_ok &= ok;
        let scale = core.scale(b, space, Round::Up);
        let (tm_hi, tb_lo) = {
            let (_, tm_hi) = space.theta_bounds(core.m(b));
            let (tb_lo, _) = space.theta_bounds(core.m(b) + core.ord(b) + r);
            (tm_hi, tb_lo)
        };
        let contribution = scale * (tm_hi / tb_lo);
        rep.witness(
            format!("tail node {:?} contribution", core.path(b)),
            format_q(&contribution),
        );
        total += contribution;
        if !ok {
            rep.require(false, format!("tail node {:?} certificate", core.path(b)), "failed");
        }
    }
    let cap = q_int(n_j as i64) / c;
    rep.require(
        all_ok && total <= cap,
        "triangle total within n_j / c",
        format!("{} <= {}", format_q(&total), format_q(&cap)),
    );
    rep
}

/// δ = min over bundle pairs of ||T u_n − T u_m|| for the normalized
/// bundle vectors; strictly positive because the targets are distinct and
/// the diagonal coefficients equal 1/||x_n||, and at least 1/3 whenever
/// every bundle norm stays at most 3.
pub fn noncompactness_witness(
    spec: &OperatorSpec,
    space: &SpaceSpec,
) -> Result<(Q, Report), OperatorError> {
    if spec.bundles.len() < 2 {
        return Err(OperatorError::TooFewBundles(2));
    }
    let mut rep = Report::new("non-compactness witness");
    let mut images: Vec<FiniteVector> = Vec::new();
    let mut norms_le_3 = true;
    for art in &spec.bundles {
        let nb = norm::norm(&art.vector, space);
        let n = nb.exact().cloned().unwrap_or(nb.hi.clone());
        norms_le_3 &= n <= q_int(3);
        let u = art.vector.scale(&(q_one() / &n));
        images.push(apply(spec, &u, space));
        rep.witness("bundle norm", format_q(&n));
    }
    rep.premise(
        "all bundle norms at most 3",
        norms_le_3,
        "the seminormalization window",
    );
    let mut delta: Option<Q> = None;
    for a in 0..images.len() {
        for b in (a + 1)..images.len() {
            let diff = images[a].sub(&images[b]);
            let nb = norm::norm(&diff, space);
            let v = nb.lo;
            if delta.as_ref().map(|d| v < *d).unwrap_or(true) {
                delta = Some(v);
            }
        }
    }
    let delta = delta.expect("at least one pair");
    rep.require(delta > Q::zero(), "separation positive", format_q(&delta));
    if norms_le_3 {
        rep.require(
            delta >= crate::ratio::q(1, 3),
            "separation at least 1/3",
            format_q(&delta),
        );
    }
    Ok((delta, rep))
}

/// Search parameters for the kernel probe.
#[derive(Debug, Clone)]
pub struct ProbeBudget {
    pub passes: u32,
    pub steps: Vec<Q>,
}

impl Default for ProbeBudget {
    fn default() -> Self {
        ProbeBudget {
            passes: 2,
            steps: vec![q_int(1), crate::ratio::q(1, 2)],
        }
    }
}

/// Coordinate-descent probe for strict-singularity evidence: minimizes the
/// family seminorm of normalized probe combinations and reports the pair
/// (seminorm, ||T x||) next to the assembled right side
/// 1/j0 + 8/(c 2^{j0-1}) + C/(c 2^{k0-1}) with C = 1. Finite evidence.
pub fn singularity_probe(
    spec: &OperatorSpec,
    probes: &[FiniteVector],
    j0: u32,
    space: &SpaceSpec,
    budget: &ProbeBudget,
) -> Report {
    let mut rep = Report::new(format!("kernel probe at j0 = {j0}"));
    rep.premise_empirical("finite probe evidence", None, "search over probe combinations");
    if probes.is_empty() || j0 == 0 {
        rep.require(false, "probes present and j0 >= 1", "");
        return rep;
    }
    let r_index = j0 as usize; // r_{j0+1} is r_seq[j0] (r_seq starts at r_1)
    let fam_rank = spec.r_seq.get(r_index).copied().unwrap_or_else(|| {
        *spec.r_seq.last().expect("non-empty r-sequence")
    });
    let fam = FamilyKind { ladder: space.ladder, rank: fam_rank };

    let objective = |coeffs: &[Q]| -> Option<(Q, FiniteVector)> {
        let mut x = FiniteVector::zero();
        for (c, p) in coeffs.iter().zip(probes) {
            x = x.add(&p.scale(c));
        }
        if x.is_zero() {
            return None;
        }
        let n = norm::norm(&x, space);
        let n = n.exact().cloned().unwrap_or(n.hi.clone());
        let x = x.scale(&(q_one() / n));
        let g = norm::family_seminorm(&x, &spec.functionals, fam, space).ok()?;
        Some((g.hi, x))
    };

    let mut coeffs: Vec<Q> = vec![Q::zero(); probes.len()];
    coeffs[0] = q_one();
    let (mut best_val, mut best_x) = objective(&coeffs).expect("non-zero start");
    for (i, _) in probes.iter().enumerate().skip(1) {
        let mut alt = vec![Q::zero(); probes.len()];
        alt[i] = q_one();
        if let Some((v, x)) = objective(&alt) {
            if v < best_val {
                best_val = v;
                best_x = x;
                coeffs = alt;
            }
        }
    }
    for _ in 0..budget.passes {
        for i in 0..coeffs.len() {
            for step in &budget.steps {
                for dir in [q_one(), q_int(-1)] {
                    let mut cand = coeffs.clone();
                    cand[i] = &cand[i] + &(step * &dir);
                    if let Some((v, x)) = objective(&cand) {
                        if v < best_val {
                            best_val = v;
                            best_x = x;
                            coeffs = cand;
                        }
                    }
                }
            }
        }
    }

    let image = apply(spec, &best_x, space);
    let image_norm = norm::norm(&image, space);
    rep.witness("family seminorm at the best probe", format_q(&best_val));
    rep.witness("||T x|| at the best probe", &image_norm);

    // Assembled right side with C = 1 and k0 the parent index of μ_{j0}.
    if (j0 as usize) < spec.core.len() {
        let k0 = spec.core.parent(j0 as usize).unwrap_or(0);
        let rhs = q_one() / q_int(j0 as i64)
            + q_int(8) / (&spec.c * pow2(j0 as i64 - 1))
            + q_one() / (&spec.c * pow2(k0 as i64 - 1));
        rep.witness("estimate right side", format_q(&rhs));
        rep.require(
            image_norm.hi <= rhs || best_val > Q::zero(),
            "image norm within the estimate when the seminorm vanishes",
            format!("{} vs {}", image_norm.hi, format_q(&rhs)),
        );
    }
    rep
}

/// The right side of the probe estimate alone, for monotonicity checks.
pub fn probe_estimate(spec: &OperatorSpec, j0: u32) -> Option<Q> {
    if j0 == 0 || (j0 as usize) >= spec.core.len() {
        return None;
    }
    let k0 = spec.core.parent(j0 as usize).unwrap_or(0);
    Some(
        q_one() / q_int(j0 as i64)
            + q_int(8) / (&spec.c * pow2(j0 as i64 - 1))
            + q_one() / (&spec.c * pow2(k0 as i64 - 1)),
    )
}
