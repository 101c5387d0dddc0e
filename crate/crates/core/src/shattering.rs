//! Shattering pairs of parts that carry few partite copies of a pattern.
//!
//! An `(α, c, t)`-shattering of `(A, B)` is a pair of partitions of `A` and
//! `B` with at most `t` parts each such that the pairs `(A_p, B_q)` of
//! density below `α` cover at least `c|A||B|` of `A × B`.
//!
//! [`shatter_pair`] follows the induction on `h`: either the auxiliary
//! hypergraph of `H'`-copies on the first `h-1` parts has a sparse large
//! sub-tuple (recurse into it), or it splits into superregular blocks and the
//! last part is cut up by how many neighbours each vertex has in each block.
//! Every returned shattering is recomputed by [`verify_shattering`].

use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::hypergraph::{HypergraphError, KUniformHypergraph};
use crate::partition::{check_partition_of, PartitionError};
use crate::pattern::{count_partite_copies, partite_copies, Pattern, PatternError};
use crate::rational::{ceil_mul, format_rational, serde_rational, serde_rational_opt, serde_rational_vec, to_f64, Density, Rational};
use crate::regularity::{
    equalize_local, matching_local, mix, to_global_sets, witness_local, Direction, MatchingOutcome, Precondition, RegularityError,
    SearchConfig, Verdict,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShatterError {
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("parts must be nonempty and of equal size, got {0:?}")]
    UnequalParts(Vec<usize>),
    #[error("scale infeasible: {0}")]
    ScaleInfeasible(String),
    #[error("pattern has no edge among its first {0} vertices")]
    NoEdge(usize),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error(transparent)]
    Regularity(#[from] RegularityError),
}

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// Desk-scale replacements for the copy-density thresholds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideConstants {
    /// `copy_density[l - 2]` stands in for `d_l`, `l = 2..=h`. Levels beyond
    /// the list reuse its last entry.
    #[serde(with = "serde_rational_vec")]
    pub copy_density: Vec<Rational>,
    /// Replaces `β = d_{h-1}/2` in the matching step.
    #[serde(with = "serde_rational_opt", default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Rational>,
    /// Matching blocks are checked against `⌈γ n⌉`; the outcome is recorded only.
    #[serde(with = "serde_rational_opt", default, skip_serializing_if = "Option::is_none")]
    pub gamma_floor: Option<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Constants {
    /// `d_h = 2^{-(2/α)^{h²}}`.
    Theoretical,
    Override(OverrideConstants),
}

impl Constants {
    pub fn uniform(d: Rational) -> Self {
        Constants::Override(OverrideConstants { copy_density: vec![d], beta: None, gamma_floor: None })
    }

    fn validate(&self) -> Result<(), ShatterError> {
        if let Constants::Override(o) = self {
            if o.copy_density.is_empty() {
                return Err(ShatterError::Parameter("at least one copy density is required".into()));
            }
            for d in &o.copy_density {
                if !d.is_positive() || *d >= Rational::new(1, 2) {
                    return Err(ShatterError::Parameter(format!("copy density {d} must lie in (0, 1/2)")));
                }
            }
            if let Some(b) = &o.beta {
                if !b.is_positive() || *b >= Rational::new(1, 4) {
                    return Err(ShatterError::Parameter(format!("beta {b} must lie in (0, 1/4)")));
                }
            }
        }
        Ok(())
    }

    fn copy_density(&self, level: usize) -> Option<Rational> {
        match self {
            Constants::Override(o) => Some(*o.copy_density.get(level - 2).unwrap_or_else(|| o.copy_density.last().unwrap())),
            Constants::Theoretical => None,
        }
    }
}

/// `log₂ d_h = -(2/α)^{h²}` as an f64, for reporting.
fn theoretical_log2_density(alpha: &Rational, h: usize) -> f64 {
    -(2.0 / to_f64(alpha)).powi((h * h) as i32)
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    Part,
    /// `V_i ∖ W_i` appended after recursing into a sparse sub-tuple.
    Residual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Base,
    /// Sparse large sub-tuple found; recursed.
    Sparse,
    /// Superregular matching plus neighbourhood signatures.
    Matching,
    /// Matching branch with no neighbour of the last vertex: trivial partitions.
    Isolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub h: usize,
    pub case: CaseKind,
    /// Density of the auxiliary hypergraph on the first `h-1` parts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux_density: Option<Density>,
    /// Witness search verdict used to choose the case.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    pub blocks: usize,
    pub residual: usize,
    pub certified: bool,
    /// Matching stopped early because a remainder fell below `2β`.
    pub stalled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_floor_met: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shattering {
    /// Pattern edge `(i, j)`; `a_parts` partitions `V_i`, `b_parts` partitions `V_j`.
    pub edge: (usize, usize),
    pub a_parts: Vec<Vec<usize>>,
    pub b_parts: Vec<Vec<usize>>,
    pub a_kinds: Vec<PartKind>,
    pub b_kinds: Vec<PartKind>,
    #[serde(with = "serde_rational")]
    pub alpha: Rational,
    #[serde(with = "serde_rational")]
    pub c_achieved: Rational,
    pub t: usize,
    /// `block_densities[p][q] = d(A_p, B_q)`.
    pub block_densities: Vec<Vec<Density>>,
    pub levels: Vec<LevelRecord>,
}

impl Shattering {
    /// Re-verifies against `g` and checks the `(α', c', t')` claim.
    pub fn satisfies(&self, g: &Graph, alpha: &Rational, c: &Rational, t: usize) -> Result<bool, ShatterError> {
        let a: Vec<usize> = self.a_parts.concat();
        let b: Vec<usize> = self.b_parts.concat();
        let check = verify_shattering(g, &a, &b, &self.a_parts, &self.b_parts, *alpha)?;
        Ok(check.c_achieved >= *c && check.t <= t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopyCertificate {
    pub count: u64,
    /// `d_h n^h`, or its log₂ for theoretical constants.
    pub threshold: String,
    /// Distinct partite copies, more than the threshold.
    pub copies: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ShatterOutcome {
    Shattered(Shattering),
    ManyCopies(CopyCertificate),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShatterCheck {
    #[serde(with = "serde_rational")]
    pub c_achieved: Rational,
    pub t: usize,
    pub low_mass: u64,
    pub block_densities: Vec<Vec<Density>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShatterConfig {
    pub constants: Constants,
    pub search: SearchConfig,
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Hypergraph on `parts` whose edges are the partite copies of `h_prime`.
pub fn build_pattern_hypergraph(g: &Graph, h_prime: &Pattern, parts: &[Vec<usize>]) -> Result<KUniformHypergraph, ShatterError> {
    let copies = partite_copies(g, h_prime, parts, usize::MAX)?;
    Ok(KUniformHypergraph::new(parts.to_vec(), copies)?)
}

/// Exact `c_achieved` and `t` for the partitions `a_parts` of `a` and `b_parts` of `b`.
pub fn verify_shattering(
    g: &Graph,
    a: &[usize],
    b: &[usize],
    a_parts: &[Vec<usize>],
    b_parts: &[Vec<usize>],
    alpha: Rational,
) -> Result<ShatterCheck, ShatterError> {
    check_partition_of(a, a_parts)?;
    check_partition_of(b, b_parts)?;
    let b_masks: Vec<_> = b_parts.iter().map(|q| g.mask(q)).collect();
    let mut low = 0u64;
    let mut block_densities = Vec::with_capacity(a_parts.len());
    for p in a_parts {
        let row: Vec<Density> =
            b_parts.iter().zip(&b_masks).map(|(q, m)| Density::new(g.pair_count(p, m), (p.len() * q.len()) as u64)).collect();
        for d in &row {
            if d.lt(&alpha) {
                low += d.pairs;
            }
        }
        block_densities.push(row);
    }
    let total = (a.len() * b.len()) as i128;
    Ok(ShatterCheck { c_achieved: Rational::new(low as i128, total), t: a_parts.len().max(b_parts.len()), low_mass: low, block_densities })
}

/// A block `V_{i,j}` used for neighbourhood signatures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureBlock {
    pub i: usize,
    pub j: usize,
    pub vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignaturePart {
    /// Blocks `(i, j)` where the vertices have fewer than `α|V_{i,j}|` neighbours.
    pub low: Vec<(usize, usize)>,
    pub vertices: Vec<usize>,
}

/// Groups `target` by the set of blocks in which a vertex has fewer than
/// `α|V_{i,j}|` neighbours. Parts are ordered by signature.
pub fn degree_signature_partition(g: &Graph, target: &[usize], blocks: &[SignatureBlock], alpha: Rational) -> Vec<SignaturePart> {
    let masks: Vec<_> = blocks.iter().map(|b| g.mask(&b.vertices)).collect();
    let mut classes: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for &v in target {
        let sig: Vec<bool> = blocks
            .iter()
            .zip(&masks)
            .map(|(b, m)| {
                let deg = g.neighbors(v).intersection_count(m) as i128;
                // deg < α|V_ij|
                deg * alpha.denom() < alpha.numer() * b.vertices.len() as i128
            })
            .collect();
        classes.entry(sig).or_default().push(v);
    }
    classes
        .into_iter()
        .map(|(sig, mut vertices)| {
            vertices.sort_unstable();
            let low = blocks.iter().zip(&sig).filter(|(_, &l)| l).map(|(b, _)| (b.i, b.j)).collect();
            SignaturePart { low, vertices }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// The key lemma
// ---------------------------------------------------------------------------

fn validate_parts(g: &Graph, h: &Pattern, parts: &[Vec<usize>]) -> Result<usize, ShatterError> {
    if parts.len() != h.h() {
        return Err(PatternError::Arity { expected: h.h(), got: parts.len() }.into());
    }
    let n = parts[0].len();
    if n == 0 || parts.iter().any(|p| p.len() != n) {
        return Err(ShatterError::UnequalParts(parts.iter().map(Vec::len).collect()));
    }
    let mut seen = vec![false; g.n()];
    for p in parts {
        for &v in p {
            if v >= g.n() {
                return Err(PatternError::OutOfRange { vertex: v, n: g.n() }.into());
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(PatternError::OverlappingParts(v).into());
            }
        }
    }
    Ok(n)
}

/// Either a verified shattering of some pattern edge, or more than
/// `d_h n^h` partite copies listed explicitly.
pub fn shatter_pair(
    g: &Graph,
    h: &Pattern,
    parts: &[Vec<usize>],
    alpha: Rational,
    cfg: &ShatterConfig,
) -> Result<ShatterOutcome, ShatterError> {
    if !alpha.is_positive() || alpha >= Rational::new(1, 4) {
        return Err(ShatterError::Parameter(format!("alpha = {alpha} must lie in (0, 1/4)")));
    }
    cfg.constants.validate()?;
    let n = validate_parts(g, h, parts)?;
    let parts: Vec<Vec<usize>> = parts
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.sort_unstable();
            p
        })
        .collect();
    let count = count_partite_copies(g, h, &parts)?;

    let (exceeds, threshold, listed) = match cfg.constants.copy_density(h.h()) {
        Some(d) => {
            let t = d * Rational::from_integer((n as i128).pow(h.h() as u32));
            let exceeds = Rational::from_integer(count as i128) > t;
            (exceeds, format_rational(&t), t.floor().to_integer() as usize + 1)
        }
        None => {
            if h.h() > 2 {
                let e = -theoretical_log2_density(&alpha, h.h() - 1);
                return Err(ShatterError::ScaleInfeasible(format!(
                    "theoretical d_{} = 2^-{e:.0} has no exact desk-scale representation; use override constants",
                    h.h() - 1
                )));
            }
            // count ≤ n^h 2^{log₂ d_h}; with log₂ d_h ≤ -4096 this admits only 0.
            let log_t = (h.h() as f64) * (n as f64).log2() + theoretical_log2_density(&alpha, h.h());
            let exceeds = count > 0 && (count as f64).log2() > log_t;
            (exceeds, format!("2^{log_t}"), 1)
        }
    };
    if exceeds {
        let copies = partite_copies(g, h, &parts, listed)?;
        debug_assert!(copies.iter().all(|c| h.is_copy(g, c)));
        return Ok(ShatterOutcome::ManyCopies(CopyCertificate { count, threshold, copies }));
    }
    let mut levels = Vec::new();
    let (edge, a_parts, a_kinds, b_parts, b_kinds) = shatter_rec(g, h, &parts, &alpha, cfg, &mut levels)?;
    let check = verify_shattering(g, &parts[edge.0], &parts[edge.1], &a_parts, &b_parts, alpha)?;
    Ok(ShatterOutcome::Shattered(Shattering {
        edge,
        a_parts,
        b_parts,
        a_kinds,
        b_kinds,
        alpha,
        c_achieved: check.c_achieved,
        t: check.t,
        block_densities: check.block_densities,
        levels,
    }))
}

/// Checks a failure certificate: enough distinct, genuine partite copies.
pub fn verify_certificate(g: &Graph, h: &Pattern, parts: &[Vec<usize>], cert: &CopyCertificate) -> bool {
    let masks: Vec<_> = parts.iter().map(|p| g.mask(p)).collect();
    let distinct: std::collections::BTreeSet<&Vec<usize>> = cert.copies.iter().collect();
    let genuine = cert.copies.iter().all(|c| {
        c.len() == h.h() && c.iter().zip(&masks).all(|(&v, m)| m.contains(v)) && h.edges().iter().all(|&(i, j)| g.has_edge(c[i], c[j]))
    });
    let enough = match crate::rational::parse_rational(&cert.threshold) {
        Ok(t) => Rational::from_integer(cert.copies.len() as i128) > t,
        Err(_) => !cert.copies.is_empty(),
    };
    genuine && distinct.len() == cert.copies.len() && enough
}

type RecResult = ((usize, usize), Vec<Vec<usize>>, Vec<PartKind>, Vec<Vec<usize>>, Vec<PartKind>);

fn shatter_rec(
    g: &Graph,
    h: &Pattern,
    parts: &[Vec<usize>],
    alpha: &Rational,
    cfg: &ShatterConfig,
    levels: &mut Vec<LevelRecord>,
) -> Result<RecResult, ShatterError> {
    let level = h.h();
    let n = parts[0].len();
    let record = |case, aux_density, verdict| LevelRecord {
        h: level,
        case,
        aux_density,
        verdict,
        blocks: 0,
        residual: 0,
        certified: true,
        stalled: false,
        gamma_floor_met: None,
    };
    if level == 2 {
        if !h.adjacent(0, 1) {
            return Err(ShatterError::NoEdge(2));
        }
        levels.push(record(CaseKind::Base, None, None));
        return Ok(((0, 1), vec![parts[0].clone()], vec![PartKind::Part], vec![parts[1].clone()], vec![PartKind::Part]));
    }

    let h_prime = h.induced_prefix(level - 1);
    let prefix = &parts[..level - 1];
    let gamma = build_pattern_hypergraph(g, &h_prime, prefix)?;
    let d_prev = cfg.constants.copy_density(level - 1).expect("override constants at recursive levels");
    let keep = Rational::one() - Rational::new(1, level as i128);
    let n_keep = ceil_mul(&keep, n);
    let local: Vec<Vec<usize>> = (0..level - 1).map(|_| (0..n).collect()).collect();
    let aux_density = gamma.density_local(&local);
    let search_cfg = cfg.search.derive(level as u64);

    // Case selection: a sparse sub-tuple of size ⌈(1-1/h)n⌉, if one is found.
    let (sparse, verdict) = if aux_density.lt(&d_prev) {
        let w = equalize_local(&gamma, &local, &vec![n_keep; level - 1], Direction::Low, mix(search_cfg.seed, 7));
        (Some(w), None)
    } else {
        let search = witness_local(&gamma, &local, &keep, &d_prev, &search_cfg)?;
        (search.witness.map(|(w, _)| w), Some(search.verdict))
    };

    if let Some(w_local) = sparse {
        let w = to_global_sets(&gamma, &w_local);
        let mut rec = record(CaseKind::Sparse, Some(aux_density), verdict);
        rec.residual = n - n_keep;
        levels.push(rec);
        let (edge, mut a, mut ak, mut b, mut bk) = shatter_rec(g, &h_prime, &w, alpha, cfg, levels)?;
        for (idx, (pp, kinds)) in [(edge.0, (&mut a, &mut ak)), (edge.1, (&mut b, &mut bk))] {
            let inner: std::collections::BTreeSet<usize> = w[idx].iter().copied().collect();
            let rest: Vec<usize> = parts[idx].iter().copied().filter(|v| !inner.contains(v)).collect();
            if !rest.is_empty() {
                pp.push(rest);
                kinds.push(PartKind::Residual);
            }
        }
        return Ok((edge, a, ak, b, bk));
    }

    // Superregular matching of the first h-1 parts.
    let beta = match &cfg.constants {
        Constants::Override(o) => o.beta.unwrap_or(d_prev / Rational::from_integer(2)),
        Constants::Theoretical => unreachable!(),
    };
    let mut rec = record(CaseKind::Matching, Some(aux_density), verdict);
    let matching = match matching_local(&gamma, &local, &keep, &d_prev, alpha, &beta, &search_cfg, Precondition::Assume) {
        Ok(m) => m,
        Err(RegularityError::MatchingStalled { partial, .. }) => {
            rec.stalled = true;
            *partial
        }
        Err(e) => return Err(e.into()),
    };
    let MatchingOutcome { residual, blocks, certified, .. } = matching;
    let residual = to_global_sets(&gamma, &residual);
    let blocks: Vec<Vec<Vec<usize>>> = blocks.iter().map(|b| to_global_sets(&gamma, b)).collect();
    rec.blocks = blocks.len();
    rec.residual = residual[0].len();
    rec.certified = certified && !rec.stalled;
    if let Constants::Override(OverrideConstants { gamma_floor: Some(gf), .. }) = &cfg.constants {
        let floor = ceil_mul(gf, n);
        rec.gamma_floor_met = Some(blocks.iter().all(|b| b[0].len() >= floor));
    }

    let last = level - 1;
    let nbrs: Vec<usize> = h.neighbors(last);
    if nbrs.is_empty() {
        rec.case = CaseKind::Isolated;
        levels.push(rec);
        let &(i, j) = h_prime.edges().first().ok_or(ShatterError::NoEdge(level))?;
        return Ok(((i, j), vec![parts[i].clone()], vec![PartKind::Part], vec![parts[j].clone()], vec![PartKind::Part]));
    }
    levels.push(rec);

    let sig_blocks: Vec<SignatureBlock> = nbrs
        .iter()
        .flat_map(|&i| blocks.iter().enumerate().map(move |(j, b)| SignatureBlock { i, j: j + 1, vertices: b[i].clone() }))
        .collect();
    let sig_parts: Vec<Vec<usize>> =
        degree_signature_partition(g, &parts[last], &sig_blocks, *alpha).into_iter().map(|p| p.vertices).collect();

    let mut best: Option<(Rational, usize, Vec<Vec<usize>>)> = None;
    for &i in &nbrs {
        let mut a_parts: Vec<Vec<usize>> = Vec::with_capacity(blocks.len() + 1);
        if !residual[i].is_empty() {
            a_parts.push(residual[i].clone());
        }
        a_parts.extend(blocks.iter().map(|b| b[i].clone()));
        let check = verify_shattering(g, &parts[i], &parts[last], &a_parts, &sig_parts, *alpha)?;
        if best.as_ref().is_none_or(|(c, _, _)| check.c_achieved > *c) {
            best = Some((check.c_achieved, i, a_parts));
        }
    }
    let (_, i, a_parts) = best.expect("nonempty neighbourhood");
    let a_kinds = vec![PartKind::Part; a_parts.len()];
    let b_kinds = vec![PartKind::Part; sig_parts.len()];
    Ok(((i, last), a_parts, a_kinds, sig_parts, b_kinds))
}

/// `c = h⁻²`, the fraction the lemma guarantees.
pub fn lemma_fraction(h: usize) -> Rational {
    Rational::new(1, (h * h) as i128)
}

impl ShatterOutcome {
    pub fn shattering(&self) -> Option<&Shattering> {
        match self {
            ShatterOutcome::Shattered(s) => Some(s),
            ShatterOutcome::ManyCopies(_) => None,
        }
    }
}

/// Total low-density mass is zero exactly when `c_achieved` is.
pub fn is_trivial(s: &Shattering) -> bool {
    s.c_achieved.is_zero()
}
