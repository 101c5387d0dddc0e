//! Superregular tuples in k-partite hypergraphs: witness search, the
//! averaging step, densification, extraction and superregular matchings,
//! plus the ε-regularity diagnostic for graph pairs.
//!
//! A tuple `(V₁,…,V_k)` is `(α,β)`-superregular if `d(U₁,…,U_k) ≥ β` for
//! every `U_i ⊆ V_i` with `|U_i| ≥ α|V_i|`. Adding vertices to a sub-tuple
//! can only average the density upward towards a larger tuple, so it
//! suffices to inspect sub-tuples with `|U_i| = ⌈α|V_i|⌉` exactly. For a
//! fixed choice of `U₁…U_{k-1}` the sparsest `U_k` is the set of lowest-degree
//! vertices, which makes the search exact over the first `k-1` blocks only.

use fixedbitset::FixedBitSet;
use itertools::Itertools;
use num::bigint::BigInt;
use num::{BigRational, One, Signed};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::hypergraph::{HypergraphError, KUniformHypergraph};
use crate::rational::{ceil_mul, serde_rational, to_f64, Density, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("exhaustive search refused: block of size {size} exceeds threshold {threshold}")]
    ExhaustiveTooLarge { size: usize, threshold: usize },
    #[error("blocks must have equal sizes, got {0:?}")]
    UnequalBlocks(Vec<usize>),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid witness: {0}")]
    InvalidWitness(String),
    #[error("remaining tuple has density {density} < 2β; stopped after {} blocks", .partial.blocks.len())]
    MatchingStalled { partial: Box<MatchingOutcome>, density: Density },
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

// ---------------------------------------------------------------------------
// Search configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    Exhaustive,
    Randomized,
    /// Exhaustive when every block fits under the threshold, else randomized.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: ModeChoice,
    pub exhaustive_threshold: usize,
    pub samples: usize,
    pub descent_passes: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { mode: ModeChoice::Auto, exhaustive_threshold: 14, samples: 10_000, descent_passes: 4, seed: 0 }
    }
}

impl SearchConfig {
    pub fn exhaustive() -> Self {
        SearchConfig { mode: ModeChoice::Exhaustive, ..Self::default() }
    }

    pub fn randomized(samples: usize, seed: u64) -> Self {
        SearchConfig { mode: ModeChoice::Randomized, samples, seed, ..Self::default() }
    }

    /// Same configuration with a seed derived from `tag`.
    pub fn derive(&self, tag: u64) -> Self {
        SearchConfig { seed: mix(self.seed, tag), ..*self }
    }

    fn resolve(&self, largest_block: usize) -> Result<SearchMode, RegularityError> {
        let fits = largest_block <= self.exhaustive_threshold;
        match self.mode {
            ModeChoice::Exhaustive if !fits => {
                Err(RegularityError::ExhaustiveTooLarge { size: largest_block, threshold: self.exhaustive_threshold })
            }
            ModeChoice::Exhaustive => Ok(SearchMode::Exhaustive),
            ModeChoice::Auto if fits => Ok(SearchMode::Exhaustive),
            _ => Ok(SearchMode::Randomized { samples: self.samples, seed: self.seed }),
        }
    }
}

/// splitmix64 finalizer over `seed ⊕ tag`.
pub(crate) fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The mode a search actually ran in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SearchMode {
    Exhaustive,
    Randomized { samples: usize, seed: u64 },
}

// ---------------------------------------------------------------------------
// Superregularity witnesses
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Certified by exhaustive search.
    Superregular,
    Witness,
    /// Randomized search found nothing; superregularity is not certified.
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperregularityReport {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<Density>,
    pub mode: SearchMode,
    #[serde(with = "serde_rational")]
    pub alpha: Rational,
    #[serde(with = "serde_rational")]
    pub beta: Rational,
}

/// Local-coordinate search outcome.
#[derive(Clone, Debug)]
pub(crate) struct LocalSearch {
    pub verdict: Verdict,
    pub witness: Option<(Vec<Vec<usize>>, Density)>,
    pub mode: SearchMode,
}

fn check_open(name: &str, r: &Rational, bound: Rational) -> Result<(), RegularityError> {
    if r.is_positive() && *r < bound {
        Ok(())
    } else {
        Err(RegularityError::Parameter(format!("{name} = {r} must lie in (0, {bound})")))
    }
}

/// Sparsest completion of the last block given masks for the others.
fn complete_last(gamma: &KUniformHypergraph, masks: &[FixedBitSet], last_set: &[usize], m: usize) -> (u64, Vec<usize>) {
    let last = masks.len() - 1;
    let deg = gamma.degrees_into(last, masks);
    let mut cand = last_set.to_vec();
    cand.sort_by_key(|&p| (deg[p], p));
    cand.truncate(m);
    let edges = cand.iter().map(|&p| deg[p]).sum();
    cand.sort_unstable();
    (edges, cand)
}

fn masks_for(gamma: &KUniformHypergraph, sets: &[Vec<usize>]) -> Vec<FixedBitSet> {
    sets.iter().enumerate().map(|(i, s)| gamma.local_mask(i, s)).collect()
}

/// Witness search on block-local sets. `sets[i]` lists positions of block `i`.
pub(crate) fn witness_local(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    alpha: &Rational,
    beta: &Rational,
    cfg: &SearchConfig,
) -> Result<LocalSearch, RegularityError> {
    let k = sets.len();
    let sizes: Vec<usize> = sets.iter().map(|s| ceil_mul(alpha, s.len()).clamp(1, s.len())).collect();
    let tuples: u64 = sizes.iter().map(|&m| m as u64).product();
    let mode = cfg.resolve(sets.iter().map(Vec::len).max().unwrap_or(0))?;
    let is_witness = |edges: u64| Density::new(edges, tuples).lt(beta);

    let prefix_masks = |choice: &[Vec<usize>]| -> Vec<FixedBitSet> {
        let mut masks: Vec<FixedBitSet> = choice.iter().enumerate().map(|(i, s)| gamma.local_mask(i, s)).collect();
        masks.push(FixedBitSet::with_capacity(gamma.block_len(k - 1)));
        masks
    };
    let evaluate = |choice: &[Vec<usize>]| -> (u64, Vec<Vec<usize>>) {
        let masks = prefix_masks(choice);
        let (e, last) = complete_last(gamma, &masks, &sets[k - 1], sizes[k - 1]);
        let mut full = choice.to_vec();
        full.push(last);
        (e, full)
    };
    let found =
        |e: u64, full: Vec<Vec<usize>>| LocalSearch { verdict: Verdict::Witness, witness: Some((full, Density::new(e, tuples))), mode };

    match mode {
        SearchMode::Exhaustive => {
            if k == 1 {
                let (e, full) = evaluate(&[]);
                return Ok(if is_witness(e) {
                    found(e, full)
                } else {
                    LocalSearch { verdict: Verdict::Superregular, witness: None, mode }
                });
            }
            let firsts: Vec<Vec<usize>> = sets[0].iter().copied().combinations(sizes[0]).collect();
            let hit = firsts.par_iter().find_map_first(|first| {
                let rest = (1..k - 1).map(|i| sets[i].iter().copied().combinations(sizes[i]));
                let mut iter: Box<dyn Iterator<Item = Vec<Vec<usize>>>> = if k == 2 {
                    Box::new(std::iter::once(vec![first.clone()]))
                } else {
                    Box::new(rest.multi_cartesian_product().map(|mut tail| {
                        tail.insert(0, first.clone());
                        tail
                    }))
                };
                iter.find_map(|choice| {
                    let (e, full) = evaluate(&choice);
                    is_witness(e).then_some((e, full))
                })
            });
            Ok(match hit {
                Some((e, full)) => found(e, full),
                None => LocalSearch { verdict: Verdict::Superregular, witness: None, mode },
            })
        }
        SearchMode::Randomized { samples, seed } => {
            let sample = |s: usize| -> (u64, Vec<Vec<usize>>) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                let choice: Vec<Vec<usize>> = (0..k - 1)
                    .map(|i| {
                        let mut c: Vec<usize> = sets[i].choose_multiple(&mut rng, sizes[i]).copied().collect();
                        c.sort_unstable();
                        c
                    })
                    .collect();
                evaluate(&choice)
            };
            let mut best: Option<(u64, Vec<Vec<usize>>)> = None;
            const CHUNK: usize = 256;
            for start in (0..samples).step_by(CHUNK) {
                let batch: Vec<(u64, Vec<Vec<usize>>)> = (start..(start + CHUNK).min(samples)).into_par_iter().map(sample).collect();
                for (e, full) in batch {
                    if is_witness(e) {
                        return Ok(found(e, full));
                    }
                    if best.as_ref().is_none_or(|(b, _)| e < *b) {
                        best = Some((e, full));
                    }
                }
            }
            // Single-swap descent on the first k-1 blocks from the best sample.
            if let Some((mut cur_e, mut cur)) = best.filter(|_| k > 1) {
                for _ in 0..cfg.descent_passes {
                    let mut improved = false;
                    for i in 0..k - 1 {
                        let outside: Vec<usize> = sets[i].iter().copied().filter(|p| !cur[i].contains(p)).collect();
                        for slot in 0..cur[i].len() {
                            for &w in &outside {
                                if cur[i].contains(&w) {
                                    continue;
                                }
                                let mut choice: Vec<Vec<usize>> = cur[..k - 1].to_vec();
                                choice[i][slot] = w;
                                choice[i].sort_unstable();
                                let (e, full) = evaluate(&choice);
                                if e < cur_e {
                                    if is_witness(e) {
                                        return Ok(found(e, full));
                                    }
                                    cur_e = e;
                                    cur = full;
                                    improved = true;
                                    break;
                                }
                            }
                        }
                    }
                    if !improved {
                        break;
                    }
                }
            }
            Ok(LocalSearch { verdict: Verdict::Undecided, witness: None, mode })
        }
    }
}

/// Searches for `U_i ⊆ V_i` with `|U_i| ≥ α|V_i|` and `d(U) < β`.
pub fn superregular_witness(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    alpha: Rational,
    beta: Rational,
    cfg: &SearchConfig,
) -> Result<SuperregularityReport, RegularityError> {
    check_open("alpha", &alpha, Rational::one())?;
    check_open("beta", &beta, Rational::one())?;
    let local = to_local_sets(gamma, sets)?;
    let res = witness_local(gamma, &local, &alpha, &beta, cfg)?;
    let (witness, density) = match res.witness {
        Some((w, d)) => (Some(to_global_sets(gamma, &w)), Some(d)),
        None => (None, None),
    };
    Ok(SuperregularityReport { verdict: res.verdict, witness, density, mode: res.mode, alpha, beta })
}

fn to_local_sets(gamma: &KUniformHypergraph, sets: &[Vec<usize>]) -> Result<Vec<Vec<usize>>, RegularityError> {
    if sets.len() != gamma.k() {
        return Err(HypergraphError::Arity { expected: gamma.k(), got: sets.len() }.into());
    }
    Ok(sets.iter().enumerate().map(|(i, s)| gamma.to_local(i, s)).collect::<Result<_, _>>()?)
}

pub(crate) fn to_global_sets(gamma: &KUniformHypergraph, sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    sets.iter().enumerate().map(|(i, s)| gamma.to_global(i, s)).collect()
}

// ---------------------------------------------------------------------------
// Averaging
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    High,
    Low,
}

const EQUALIZE_TRIES: usize = 32;

/// Subsets of the requested sizes whose density is at least (`High`) or at
/// most (`Low`) that of the input tuple. Random samples are tried first;
/// if none certifies, vertices are peeled greedily (lowest degree for `High`,
/// highest for `Low`), which never moves the density the wrong way.
pub(crate) fn equalize_local(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    sizes: &[usize],
    dir: Direction,
    seed: u64,
) -> Vec<Vec<usize>> {
    if sets.iter().zip(sizes).all(|(s, &a)| s.len() == a) {
        return sets.to_vec();
    }
    let base = gamma.density_local(sets);
    let accept = |d: Density| match dir {
        Direction::High => d >= base,
        Direction::Low => d <= base,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..EQUALIZE_TRIES {
        let cand: Vec<Vec<usize>> = sets
            .iter()
            .zip(sizes)
            .map(|(s, &a)| {
                let mut c: Vec<usize> = s.choose_multiple(&mut rng, a).copied().collect();
                c.sort_unstable();
                c
            })
            .collect();
        if accept(gamma.density_local(&cand)) {
            return cand;
        }
    }
    peel(gamma, sets, sizes, dir)
}

fn peel(gamma: &KUniformHypergraph, sets: &[Vec<usize>], sizes: &[usize], dir: Direction) -> Vec<Vec<usize>> {
    let mut cur = sets.to_vec();
    let mut masks = masks_for(gamma, &cur);
    for i in 0..cur.len() {
        while cur[i].len() > sizes[i] {
            let deg = gamma.degrees_into(i, &masks);
            let pos = match dir {
                Direction::High => (0..cur[i].len()).min_by_key(|&q| (deg[cur[i][q]], cur[i][q])),
                Direction::Low => (0..cur[i].len()).max_by_key(|&q| (deg[cur[i][q]], std::cmp::Reverse(cur[i][q]))),
            }
            .unwrap();
            let v = cur[i].remove(pos);
            masks[i].set(v, false);
        }
    }
    cur
}

/// Subsets `B_i ⊆ A_i` with `|B_i| = a_i` and `d(B) ≥ d(A)` (high) or `≤` (low).
pub fn equalize_density_subsets(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    sizes: &[usize],
    dir: Direction,
    seed: u64,
) -> Result<Vec<Vec<usize>>, RegularityError> {
    let local = to_local_sets(gamma, sets)?;
    for (i, (s, &a)) in local.iter().zip(sizes).enumerate() {
        if a == 0 || a > s.len() {
            return Err(RegularityError::Parameter(format!("size {a} for block {i} must lie in [1, {}]", s.len())));
        }
    }
    if sizes.len() != local.len() {
        return Err(RegularityError::Parameter("one size per block required".into()));
    }
    Ok(to_global_sets(gamma, &equalize_local(gamma, &local, sizes, dir, seed)))
}

// ---------------------------------------------------------------------------
// Densification and extraction
// ---------------------------------------------------------------------------

/// Exact check `d_new ≥ (1 + αᵏ/2)·d_old`.
pub fn meets_growth(d_new: Density, d_old: Density, alpha: &Rational, k: usize) -> bool {
    let a = BigRational::new(BigInt::from(*alpha.numer()), BigInt::from(*alpha.denom()));
    let mut ak = BigRational::one();
    for _ in 0..k {
        ak *= &a;
    }
    let factor = BigRational::one() + ak / BigInt::from(2);
    let new = BigRational::new(BigInt::from(d_new.edges), BigInt::from(d_new.pairs));
    let old = BigRational::new(BigInt::from(d_old.edges), BigInt::from(d_old.pairs));
    new >= old * factor
}

fn equal_sizes(sets: &[Vec<usize>]) -> Result<usize, RegularityError> {
    let n = sets.first().map_or(0, Vec::len);
    if sets.iter().any(|s| s.len() != n) || n == 0 {
        return Err(RegularityError::UnequalBlocks(sets.iter().map(Vec::len).collect()));
    }
    Ok(n)
}

fn two_beta(beta: &Rational) -> Rational {
    beta * Rational::from_integer(2)
}

pub(crate) fn densify_local(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    alpha: &Rational,
    beta: &Rational,
    witness: &[Vec<usize>],
    seed: u64,
) -> Result<(Vec<Vec<usize>>, Density), RegularityError> {
    let quarter = Rational::new(1, 4);
    check_open("alpha", alpha, quarter)?;
    check_open("beta", beta, quarter)?;
    let n = equal_sizes(sets)?;
    let k = sets.len();
    let d_a = gamma.density_local(sets);
    if d_a.lt(&two_beta(beta)) {
        return Err(RegularityError::Precondition(format!("d(A) = {d_a} < 2β = {}", two_beta(beta))));
    }
    let m = ceil_mul(alpha, n);
    if witness.len() != k {
        return Err(RegularityError::InvalidWitness(format!("expected {k} subsets")));
    }
    for (i, (w, s)) in witness.iter().zip(sets).enumerate() {
        if w.len() < m || w.iter().any(|p| s.binary_search(p).is_err()) {
            return Err(RegularityError::InvalidWitness(format!("subset {i} is not an α-fraction of its block")));
        }
    }
    let d_w = gamma.density_local(witness);
    if !d_w.lt(beta) {
        return Err(RegularityError::InvalidWitness(format!("density {d_w} is not below β = {beta}")));
    }

    let first = equalize_local(gamma, witness, &vec![m; k], Direction::Low, mix(seed, 1));
    let second: Vec<Vec<usize>> =
        sets.iter().zip(&first).map(|(s, f)| s.iter().copied().filter(|p| f.binary_search(p).is_err()).collect()).collect();
    // Bit i of `combo` selects the second half of block i; combo 0 is excluded.
    let mut best: Option<(Density, u32)> = None;
    for combo in 1u32..(1 << k) {
        let parts: Vec<Vec<usize>> = (0..k).map(|i| if combo >> i & 1 == 1 { second[i].clone() } else { first[i].clone() }).collect();
        if parts.iter().any(Vec::is_empty) {
            continue;
        }
        let d = gamma.density_local(&parts);
        if best.is_none_or(|(b, _)| d > b) {
            best = Some((d, combo));
        }
    }
    let (_, combo) = best.ok_or_else(|| RegularityError::Precondition("blocks too small to split".into()))?;
    let chosen: Vec<Vec<usize>> = (0..k).map(|i| if combo >> i & 1 == 1 { second[i].clone() } else { first[i].clone() }).collect();
    let out = equalize_local(gamma, &chosen, &vec![m; k], Direction::High, mix(seed, 2));
    let d_b = gamma.density_local(&out);
    if !meets_growth(d_b, d_a, alpha, k) {
        return Err(RegularityError::Precondition(format!("densification reached only {d_b} from {d_a}")));
    }
    Ok((out, d_b))
}

/// One densification round: from a witness of non-superregularity, subsets
/// of size `⌈αn⌉` with density at least `(1 + αᵏ/2)·d(A)`.
pub fn densify_step(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    alpha: Rational,
    beta: Rational,
    witness: &[Vec<usize>],
    seed: u64,
) -> Result<(Vec<Vec<usize>>, Density), RegularityError> {
    let local = to_local_sets(gamma, sets)?;
    let wl = witness.iter().enumerate().map(|(i, w)| gamma.to_local(i, w)).collect::<Result<Vec<_>, _>>()?;
    let (out, d) = densify_local(gamma, &local, &alpha, &beta, &wl, seed)?;
    Ok((to_global_sets(gamma, &out), d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRound {
    pub sets: Vec<Vec<usize>>,
    pub density: Density,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionTrace {
    /// Entry 0 is the input tuple; entry t is the tuple after round t.
    pub rounds: Vec<ExtractionRound>,
    pub round_bound: usize,
    /// False when the last witness search was randomized and found nothing.
    pub certified: bool,
    pub mode: SearchMode,
}

impl ExtractionTrace {
    pub fn round_count(&self) -> usize {
        self.rounds.len() - 1
    }

    pub fn final_sets(&self) -> &[Vec<usize>] {
        &self.rounds.last().unwrap().sets
    }
}

/// `⌈3 α⁻ᵏ ln β⁻¹⌉`.
pub fn extraction_round_bound(alpha: &Rational, beta: &Rational, k: usize) -> usize {
    (3.0 * to_f64(alpha).powi(-(k as i32)) * (1.0 / to_f64(beta)).ln()).ceil() as usize
}

pub(crate) fn extract_local(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    alpha: &Rational,
    beta: &Rational,
    cfg: &SearchConfig,
) -> Result<ExtractionTrace, RegularityError> {
    let quarter = Rational::new(1, 4);
    check_open("alpha", alpha, quarter)?;
    check_open("beta", beta, quarter)?;
    equal_sizes(sets)?;
    let k = sets.len();
    let d0 = gamma.density_local(sets);
    if d0.lt(&two_beta(beta)) {
        return Err(RegularityError::Precondition(format!("d(A) = {d0} < 2β = {}", two_beta(beta))));
    }
    let bound = extraction_round_bound(alpha, beta, k);
    let mut rounds = vec![ExtractionRound { sets: sets.to_vec(), density: d0 }];
    loop {
        let cur = &rounds.last().unwrap().sets;
        let round = rounds.len() as u64;
        let search = witness_local(gamma, cur, alpha, beta, &cfg.derive(round))?;
        match (search.verdict, search.witness) {
            (Verdict::Witness, Some((w, _))) => {
                if rounds.len() > bound {
                    return Err(RegularityError::Precondition(format!("more than {bound} densification rounds")));
                }
                let (next, d) = densify_local(gamma, cur, alpha, beta, &w, mix(cfg.seed, round))?;
                rounds.push(ExtractionRound { sets: next, density: d });
            }
            (verdict, _) => {
                return Ok(ExtractionTrace { rounds, round_bound: bound, certified: verdict == Verdict::Superregular, mode: search.mode });
            }
        }
    }
}

/// Repeated densification until no witness is found. Trace sets are global ids.
pub fn extract_superregular(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    alpha: Rational,
    beta: Rational,
    cfg: &SearchConfig,
) -> Result<ExtractionTrace, RegularityError> {
    let local = to_local_sets(gamma, sets)?;
    let mut trace = extract_local(gamma, &local, &alpha, &beta, cfg)?;
    for r in &mut trace.rounds {
        r.sets = to_global_sets(gamma, &r.sets);
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Superregular matching
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precondition {
    /// Run a witness search for `(c, d)`-superregularity first.
    Certify,
    /// Take it on trust; failures surface as a stalled matching.
    Assume,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingOutcome {
    /// `residual[i]` = `A_{i,0}`.
    pub residual: Vec<Vec<usize>>,
    /// `blocks[j][i]` = `A_{i,j+1}`.
    pub blocks: Vec<Vec<Vec<usize>>>,
    pub traces: Vec<ExtractionTrace>,
    /// Every block certified superregular (exhaustive searches only).
    pub certified: bool,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn matching_local(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    c: &Rational,
    d: &Rational,
    alpha: &Rational,
    beta: &Rational,
    cfg: &SearchConfig,
    pre: Precondition,
) -> Result<MatchingOutcome, RegularityError> {
    let quarter = Rational::new(1, 4);
    check_open("alpha", alpha, quarter)?;
    check_open("beta", beta, quarter)?;
    if !c.is_positive() || *c > Rational::one() {
        return Err(RegularityError::Parameter(format!("c = {c} must lie in (0, 1]")));
    }
    if *d < two_beta(beta) {
        return Err(RegularityError::Parameter(format!("d = {d} must be at least 2β")));
    }
    let n = equal_sizes(sets)?;
    let whole = gamma.density_local(sets);
    if whole.lt(d) {
        return Err(RegularityError::Precondition(format!("d(A) = {whole} < d = {d}")));
    }
    if pre == Precondition::Certify {
        let search = witness_local(gamma, sets, c, d, &cfg.derive(u64::MAX))?;
        match search.verdict {
            Verdict::Superregular => {}
            Verdict::Witness => {
                return Err(RegularityError::Precondition(format!("tuple is not ({c}, {d})-superregular")));
            }
            Verdict::Undecided => {
                return Err(RegularityError::Precondition("(c, d)-superregularity could not be certified".into()));
            }
        }
    }
    let mut remaining = sets.to_vec();
    let mut out = MatchingOutcome { residual: Vec::new(), blocks: Vec::new(), traces: Vec::new(), certified: true };
    // |B| < cN, exactly.
    let below = |len: usize| Rational::from_integer(len as i128) < c * Rational::from_integer(n as i128);
    while !below(remaining[0].len()) {
        let dens = gamma.density_local(&remaining);
        if dens.lt(&two_beta(beta)) {
            out.residual = remaining;
            return Err(RegularityError::MatchingStalled { partial: Box::new(out), density: dens });
        }
        let trace = extract_local(gamma, &remaining, alpha, beta, &cfg.derive(out.blocks.len() as u64))?;
        let block = trace.final_sets().to_vec();
        for (r, b) in remaining.iter_mut().zip(&block) {
            r.retain(|p| b.binary_search(p).is_err());
        }
        out.certified &= trace.certified;
        out.blocks.push(block);
        out.traces.push(trace);
    }
    out.residual = remaining;
    Ok(out)
}

/// Partitions each `A_i` into a residual of size `< cN` and blocks that are
/// `(α, β)`-superregular (certified when the search is exhaustive).
#[allow(clippy::too_many_arguments)]
pub fn superregular_matching(
    gamma: &KUniformHypergraph,
    sets: &[Vec<usize>],
    c: Rational,
    d: Rational,
    alpha: Rational,
    beta: Rational,
    cfg: &SearchConfig,
    pre: Precondition,
) -> Result<MatchingOutcome, RegularityError> {
    let local = to_local_sets(gamma, sets)?;
    let globalize = |mut o: MatchingOutcome| {
        o.residual = to_global_sets(gamma, &o.residual);
        for b in &mut o.blocks {
            *b = to_global_sets(gamma, b);
        }
        for t in &mut o.traces {
            for r in &mut t.rounds {
                r.sets = to_global_sets(gamma, &r.sets);
            }
        }
        o
    };
    match matching_local(gamma, &local, &c, &d, &alpha, &beta, cfg, pre) {
        Ok(o) => Ok(globalize(o)),
        Err(RegularityError::MatchingStalled { partial, density }) => {
            Err(RegularityError::MatchingStalled { partial: Box::new(globalize(*partial)), density })
        }
        Err(e) => Err(e),
    }
}

/// `c⁻¹ α^(−3α⁻ᵏ ln β⁻¹)`, the block-count bound for a matching (as f64).
pub fn matching_block_bound(c: &Rational, alpha: &Rational, beta: &Rational, k: usize) -> f64 {
    let exponent = 3.0 * to_f64(alpha).powi(-(k as i32)) * (1.0 / to_f64(beta)).ln();
    to_f64(alpha).powf(-exponent) / to_f64(c)
}

// ---------------------------------------------------------------------------
// ε-regularity of graph pairs
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityWitness {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub density: Density,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub verdict: Verdict,
    pub pair_density: Density,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<RegularityWitness>,
    pub mode: SearchMode,
    #[serde(with = "serde_rational")]
    pub epsilon: Rational,
}

/// Exact check `|d' − d| ≥ ε`.
fn deviates(d_sub: Density, d: Density, eps: &Rational) -> bool {
    // |e'/p' − e/p| ≥ a/b  ⇔  |e'p − ep'|·b ≥ a·p·p'
    let lhs = (d_sub.edges as i128 * d.pairs as i128 - d.edges as i128 * d_sub.pairs as i128).abs();
    let lhs = BigInt::from(lhs) * BigInt::from(*eps.denom());
    let rhs = BigInt::from(*eps.numer()) * BigInt::from(d.pairs) * BigInt::from(d_sub.pairs);
    lhs >= rhs
}

/// For a fixed `X'`, the extreme `Y'` of each admissible size are the
/// lowest- and highest-degree vertices; returns a deviating `Y'` if any.
fn extreme_y(g: &Graph, xs: &[usize], y: &[usize], min_y: usize, d: Density, eps: &Rational) -> Option<(Vec<usize>, Density)> {
    let xm = g.mask(xs);
    let mut by_deg: Vec<(u64, usize)> = y.iter().map(|&v| (g.neighbors(v).intersection_count(&xm) as u64, v)).collect();
    by_deg.sort_unstable();
    let mut low_prefix = vec![0u64; y.len() + 1];
    for (i, &(dg, _)) in by_deg.iter().enumerate() {
        low_prefix[i + 1] = low_prefix[i] + dg;
    }
    let total = low_prefix[y.len()];
    for b in min_y..=y.len() {
        let pairs = (xs.len() * b) as u64;
        let low = Density::new(low_prefix[b], pairs);
        if deviates(low, d, eps) {
            let mut ys: Vec<usize> = by_deg[..b].iter().map(|&(_, v)| v).collect();
            ys.sort_unstable();
            return Some((ys, low));
        }
        let high = Density::new(total - low_prefix[y.len() - b], pairs);
        if deviates(high, d, eps) {
            let mut ys: Vec<usize> = by_deg[y.len() - b..].iter().map(|&(_, v)| v).collect();
            ys.sort_unstable();
            return Some((ys, high));
        }
    }
    None
}

/// Looks for `X' ⊆ X`, `Y' ⊆ Y` with `|X'| ≥ ε|X|`, `|Y'| ≥ ε|Y|` and
/// `|d(X',Y') − d(X,Y)| ≥ ε`.
pub fn is_epsilon_regular(
    g: &Graph,
    x: &[usize],
    y: &[usize],
    eps: Rational,
    cfg: &SearchConfig,
) -> Result<RegularityReport, RegularityError> {
    check_open("epsilon", &eps, Rational::one() + Rational::one())?;
    let d = crate::graph::density(g, x, y)?;
    let ym = g.mask(y);
    if let Some(&v) = x.iter().find(|&&v| ym.contains(v)) {
        return Err(RegularityError::Parameter(format!("X and Y share vertex {v}")));
    }
    let min_x = ceil_mul(&eps, x.len()).max(1);
    let min_y = ceil_mul(&eps, y.len()).max(1);
    let mode = cfg.resolve(x.len().max(y.len()))?;
    let report = |witness: Option<RegularityWitness>, verdict| RegularityReport { verdict, pair_density: d, witness, mode, epsilon: eps };
    let mut x_sorted = x.to_vec();
    x_sorted.sort_unstable();
    if min_x > x.len() || min_y > y.len() {
        return Ok(report(None, Verdict::Superregular));
    }
    let check = |xs: Vec<usize>| extreme_y(g, &xs, y, min_y, d, &eps).map(|(ys, dens)| RegularityWitness { x: xs, y: ys, density: dens });
    match mode {
        SearchMode::Exhaustive => {
            let hit = (min_x..=x.len()).find_map(|a| x_sorted.iter().copied().combinations(a).find_map(&check));
            Ok(match hit {
                Some(w) => report(Some(w), Verdict::Witness),
                None => report(None, Verdict::Superregular),
            })
        }
        SearchMode::Randomized { samples, seed } => {
            let hit = (0..samples).into_par_iter().find_map_first(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                let a = min_x + (s % (x.len() - min_x + 1));
                let mut xs: Vec<usize> = x_sorted.choose_multiple(&mut rng, a).copied().collect();
                xs.sort_unstable();
                check(xs)
            });
            Ok(match hit {
                Some(w) => report(Some(w), Verdict::Witness),
                None => report(None, Verdict::Undecided),
            })
        }
    }
}

/// True for `Verdict::Superregular` on a regularity report.
impl RegularityReport {
    pub fn is_regular(&self) -> bool {
        self.verdict == Verdict::Superregular
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    /// Two complete 2×2 blocks: {0,1}×{4,5} and {2,3}×{6,7}.
    fn two_blocks() -> (Graph, KUniformHypergraph) {
        let edges = [(0, 4), (0, 5), (1, 4), (1, 5), (2, 6), (2, 7), (3, 6), (3, 7)];
        let g = Graph::from_edges(8, edges).unwrap();
        let gamma = KUniformHypergraph::new(vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]], edges.iter().map(|&(a, b)| vec![a, b])).unwrap();
        (g, gamma)
    }

    fn complete(blocks: Vec<Vec<usize>>) -> KUniformHypergraph {
        let edges: Vec<Vec<usize>> = blocks.iter().cloned().multi_cartesian_product().collect();
        KUniformHypergraph::new(blocks, edges).unwrap()
    }

    #[test]
    fn epsilon_regularity_examples() {
        let (g, _) = two_blocks();
        let cfg = SearchConfig::exhaustive();
        let k = crate::instances::gen_blowup(&crate::pattern::Pattern::complete(2), &[4, 4]);
        assert!(is_epsilon_regular(&k, &[0, 1, 2, 3], &[4, 5, 6, 7], ratio(1, 10), &cfg).unwrap().is_regular());
        assert!(is_epsilon_regular(&Graph::empty(8), &[0, 1, 2, 3], &[4, 5, 6, 7], ratio(1, 10), &cfg).unwrap().is_regular());
        let r = is_epsilon_regular(&g, &[0, 1, 2, 3], &[4, 5, 6, 7], ratio(1, 4), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Witness);
        let w = r.witness.unwrap();
        let d = crate::graph::density(&g, &w.x, &w.y).unwrap();
        assert_eq!(d, w.density);
        assert!(deviates(d, Density::new(8, 16), &ratio(1, 4)));
        let rnd = is_epsilon_regular(&g, &[0, 1, 2, 3], &[4, 5, 6, 7], ratio(1, 4), &SearchConfig::randomized(50, 3)).unwrap();
        assert_eq!(rnd.verdict, Verdict::Witness);
    }

    #[test]
    fn witness_examples() {
        let cfg = SearchConfig::exhaustive();
        let blocks = vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7]];
        let full = complete(blocks.clone());
        let r = superregular_witness(&full, &blocks, ratio(1, 3), ratio(99, 100), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Superregular);

        let empty = KUniformHypergraph::new(blocks.clone(), vec![]).unwrap();
        let r = superregular_witness(&empty, &blocks, ratio(1, 3), ratio(1, 100), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Witness);

        let (_, gamma) = two_blocks();
        let r = superregular_witness(&gamma, gamma.blocks(), ratio(1, 2), ratio(1, 4), &cfg).unwrap();
        assert_eq!(r.witness.unwrap(), vec![vec![0, 1], vec![6, 7]]);
        assert_eq!(r.density.unwrap().edges, 0);
    }

    #[test]
    fn exhaustive_threshold_is_enforced() {
        let blocks = vec![(0..20).collect::<Vec<_>>(), (20..40).collect()];
        let g = KUniformHypergraph::new(blocks.clone(), vec![]).unwrap();
        assert!(matches!(
            superregular_witness(&g, &blocks, ratio(1, 2), ratio(1, 4), &SearchConfig::exhaustive()),
            Err(RegularityError::ExhaustiveTooLarge { size: 20, threshold: 14 })
        ));
        let r = superregular_witness(&g, &blocks, ratio(1, 2), ratio(1, 4), &SearchConfig::randomized(10, 1)).unwrap();
        assert_eq!(r.verdict, Verdict::Witness);
    }

    #[test]
    fn equalize_examples() {
        let blocks = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let single = KUniformHypergraph::new(blocks.clone(), vec![vec![1, 3, 4]]).unwrap();
        // Oracle: the only singleton tuple of density 1 is the edge itself.
        let hi = equalize_density_subsets(&single, &blocks, &[1, 1, 1], Direction::High, 5).unwrap();
        assert_eq!(hi, vec![vec![1], vec![3], vec![4]]);
        let lo = equalize_density_subsets(&single, &blocks, &[1, 1, 1], Direction::Low, 5).unwrap();
        assert!(hyper(&single, &lo).is_zero());
        let same = equalize_density_subsets(&single, &blocks, &[2, 2, 2], Direction::Low, 5).unwrap();
        assert_eq!(same, blocks);
    }

    fn hyper(g: &KUniformHypergraph, sets: &[Vec<usize>]) -> Density {
        crate::hypergraph::hyperdensity(g, sets).unwrap()
    }

    #[test]
    fn peeling_respects_direction() {
        for seed in 0..20 {
            let g = crate::instances::gen_random(16, ratio(2, 5), seed);
            let blocks = vec![(0..8).collect::<Vec<_>>(), (8..16).collect()];
            let edges = g.edges().iter().filter(|&&(a, b)| a < 8 && b >= 8).map(|&(a, b)| vec![a, b]);
            let gamma = KUniformHypergraph::new(blocks.clone(), edges).unwrap();
            let base = hyper(&gamma, &blocks);
            let local = to_local_sets(&gamma, &blocks).unwrap();
            let hi = peel(&gamma, &local, &[3, 5], Direction::High);
            let lo = peel(&gamma, &local, &[3, 5], Direction::Low);
            assert!(gamma.density_local(&hi) >= base);
            assert!(gamma.density_local(&lo) <= base);
        }
    }

    #[test]
    fn densify_two_block_instance() {
        let (_, gamma) = two_blocks();
        let sets = gamma.blocks().to_vec();
        let alpha = ratio(1, 5);
        let beta = ratio(1, 5);
        // ⌈αn⌉ = 1; the witness {0}×{6} has density 0.
        let (out, d) = densify_step(&gamma, &sets, alpha, beta, &[vec![0], vec![6]], 1).unwrap();
        assert_eq!(out.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 1]);
        assert!(meets_growth(d, Density::new(8, 16), &alpha, 2));
        assert!(matches!(densify_step(&gamma, &sets, alpha, beta, &[vec![0], vec![4]], 1), Err(RegularityError::InvalidWitness(_))));
    }

    #[test]
    fn extraction_on_two_blocks_reaches_a_complete_block() {
        let (_, gamma) = two_blocks();
        let trace = extract_superregular(&gamma, gamma.blocks(), ratio(1, 5), ratio(1, 5), &SearchConfig::exhaustive()).unwrap();
        assert!(trace.certified);
        assert!(trace.round_count() >= 1 && trace.round_count() <= trace.round_bound);
        assert_eq!(trace.rounds.last().unwrap().density.value(), Rational::one());
        for w in trace.rounds.windows(2) {
            assert!(meets_growth(w[1].density, w[0].density, &ratio(1, 5), 2));
        }
    }

    #[test]
    fn already_superregular_needs_no_rounds() {
        let blocks = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let full = complete(blocks.clone());
        let trace = extract_superregular(&full, &blocks, ratio(1, 5), ratio(1, 5), &SearchConfig::exhaustive()).unwrap();
        assert_eq!(trace.round_count(), 0);
        assert_eq!(trace.final_sets(), &blocks[..]);
    }

    #[test]
    fn matching_examples() {
        let blocks = vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]];
        let full = complete(blocks.clone());
        let cfg = SearchConfig::exhaustive();
        let m =
            superregular_matching(&full, &blocks, ratio(1, 2), ratio(1, 2), ratio(1, 5), ratio(1, 5), &cfg, Precondition::Certify).unwrap();
        assert_eq!(m.blocks.len(), 1);
        assert!(m.residual.iter().all(Vec::is_empty));

        let empty = KUniformHypergraph::new(blocks.clone(), vec![]).unwrap();
        assert!(matches!(
            superregular_matching(&empty, &blocks, ratio(1, 2), ratio(1, 2), ratio(1, 5), ratio(1, 5), &cfg, Precondition::Assume),
            Err(RegularityError::Precondition(_))
        ));
    }

    #[test]
    fn matching_on_random_dense_pairs() {
        let cfg = SearchConfig::exhaustive();
        for seed in 0..10 {
            let g = crate::instances::gen_random(24, ratio(4, 5), seed);
            let blocks = vec![(0..12).collect::<Vec<_>>(), (12..24).collect()];
            let edges = g.edges().iter().filter(|&&(a, b)| a < 12 && b >= 12).map(|&(a, b)| vec![a, b]);
            let gamma = KUniformHypergraph::new(blocks.clone(), edges).unwrap();
            let (alpha, beta) = (ratio(1, 5), ratio(1, 5));
            match superregular_matching(&gamma, &blocks, ratio(1, 3), ratio(2, 5), alpha, beta, &cfg, Precondition::Assume) {
                Ok(m) => {
                    for i in 0..2 {
                        let mut parts: Vec<Vec<usize>> = m.blocks.iter().map(|b| b[i].clone()).collect();
                        parts.push(m.residual[i].clone());
                        let all: Vec<usize> = parts.concat();
                        let mut sorted = all.clone();
                        sorted.sort_unstable();
                        assert_eq!(sorted, blocks[i]);
                        assert!(m.residual[i].len() * 3 < 12);
                    }
                    for b in &m.blocks {
                        assert_eq!(b[0].len(), b[1].len());
                        let r = superregular_witness(&gamma, b, alpha, beta, &cfg).unwrap();
                        assert_eq!(r.verdict, Verdict::Superregular);
                    }
                }
                Err(RegularityError::MatchingStalled { partial, density }) => {
                    assert!(density.lt(&(beta * Rational::from_integer(2))));
                    assert!(!partial.residual.is_empty());
                }
                Err(e) => panic!("{e}"),
            }
        }
    }
}
