//! Instance generators: random graphs, blow-ups, 3-AP-free sets,
//! Ruzsa–Szemerédi graphs and planted copies.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::pattern::Pattern;
use crate::rational::{is_probability, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(String),
    #[error("blow-up needs one positive size per pattern vertex")]
    BadBlowup,
    #[error("exhaustive 3-AP-free search only supports N <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("range bound must be at least 1")]
    EmptyRange,
    #[error("{0}, {1}, {2} is a 3-term arithmetic progression")]
    ContainsProgression(u64, u64, u64),
    #[error("element {element} outside [1, {bound}]")]
    OutOfRange { element: u64, bound: u64 },
    #[error("{needed} vertices needed to plant the copies, only {available} available")]
    InsufficientVertices { needed: usize, available: usize },
}

/// `G(n, p)`; pair `u < v` is decided in lexicographic order.
pub fn gen_random(n: usize, p: Rational, seed: u64) -> Graph {
    assert!(is_probability(&p), "p must lie in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (num, den) = (*p.numer() as u128, *p.denom() as u128);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_range(0..den) < num {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

/// Checked variant of [`gen_random`].
pub fn try_gen_random(n: usize, p: Rational, seed: u64) -> Result<Graph, InstanceError> {
    if !is_probability(&p) {
        return Err(InstanceError::BadProbability(p.to_string()));
    }
    Ok(gen_random(n, p, seed))
}

/// Vertex `i` of `f` becomes an independent set of `sizes[i]` consecutive
/// vertices; edges of `f` become complete bipartite graphs.
pub fn gen_blowup(f: &Pattern, sizes: &[usize]) -> Graph {
    try_gen_blowup(f, sizes).expect("one positive size per pattern vertex")
}

pub fn try_gen_blowup(f: &Pattern, sizes: &[usize]) -> Result<Graph, InstanceError> {
    if sizes.len() != f.h() || sizes.contains(&0) {
        return Err(InstanceError::BadBlowup);
    }
    let parts = blowup_parts(sizes);
    let mut edges = Vec::new();
    for &(i, j) in f.edges() {
        for &u in &parts[i] {
            for &v in &parts[j] {
                edges.push((u, v));
            }
        }
    }
    Ok(Graph::from_edges(sizes.iter().sum(), edges).unwrap())
}

/// Vertex blocks used by [`gen_blowup`].
pub fn blowup_parts(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&a| {
            let part = (start..start + a).collect();
            start += a;
            part
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 3-AP-free sets
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehrendSet {
    pub bound: u64,
    pub elements: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehrendStrategy {
    Sphere,
    Exhaustive,
}

pub const EXHAUSTIVE_MAX: usize = 30;

/// First progression `a < b < c` with `b - a = c - b` found in `set`, if any.
pub fn find_progression(set: &[u64]) -> Option<(u64, u64, u64)> {
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let members: std::collections::HashSet<u64> = sorted.iter().copied().collect();
    for (i, &a) in sorted.iter().enumerate() {
        for &c in &sorted[i + 1..] {
            if (a + c) % 2 == 0 && members.contains(&((a + c) / 2)) {
                return Some((a, (a + c) / 2, c));
            }
        }
    }
    None
}

pub fn is_progression_free(set: &[u64]) -> bool {
    find_progression(set).is_none()
}

impl BehrendSet {
    /// Validates range and progression-freeness.
    pub fn new(bound: u64, mut elements: Vec<u64>) -> Result<Self, InstanceError> {
        elements.sort_unstable();
        elements.dedup();
        if let Some(&e) = elements.iter().find(|&&e| e == 0 || e > bound) {
            return Err(InstanceError::OutOfRange { element: e, bound });
        }
        if let Some((a, b, c)) = find_progression(&elements) {
            return Err(InstanceError::ContainsProgression(a, b, c));
        }
        Ok(BehrendSet { bound, elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

pub fn gen_behrend_set(n: usize, strategy: BehrendStrategy) -> Result<BehrendSet, InstanceError> {
    if n == 0 {
        return Err(InstanceError::EmptyRange);
    }
    let elements = match strategy {
        BehrendStrategy::Exhaustive => {
            if n > EXHAUSTIVE_MAX {
                return Err(InstanceError::TooLarge { n, max: EXHAUSTIVE_MAX });
            }
            max_progression_free(n)
        }
        BehrendStrategy::Sphere => sphere_set(n as u64),
    };
    BehrendSet::new(n as u64, elements)
}

/// Digits in `[0, d)` written in base `2d - 1`, so sums of two elements never
/// carry; a sphere `Σ digit² = r` then contains no progression. Scans
/// `d ∈ 2..=10` and keeps the largest sphere.
fn sphere_set(n: u64) -> Vec<u64> {
    let mut best: Vec<u64> = vec![1];
    for d in 2u64..=10 {
        let base = 2 * d - 1;
        // largest k with max element ((base^k - 1) / 2) + 1 <= n
        let mut k = 0u32;
        while let Some(p) = base.checked_pow(k + 1) {
            if (p - 1) / 2 < n {
                k += 1;
            } else {
                break;
            }
        }
        let mut spheres: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        let count = d.pow(k);
        for idx in 0..count {
            let (mut rest, mut value, mut radius, mut place) = (idx, 0u64, 0u64, 1u64);
            for _ in 0..k {
                let digit = rest % d;
                rest /= d;
                value += digit * place;
                radius += digit * digit;
                place *= base;
            }
            spheres.entry(radius).or_default().push(value + 1);
        }
        if let Some(set) = spheres.into_values().max_by_key(|s| s.len()) {
            if set.len() > best.len() && is_progression_free(&set) {
                best = set;
            }
        }
    }
    best.sort_unstable();
    best
}

/// Maximum progression-free subset of `[1, n]` by branch and bound, using the
/// maxima for shorter intervals as the bound on the undecided suffix.
fn max_progression_free(n: usize) -> Vec<u64> {
    let mut r3 = vec![0usize; n + 1];
    let mut best_set = Vec::new();
    for len in 1..=n {
        let mut best = Vec::new();
        let mut cur = Vec::new();
        let mut member = vec![false; len + 1];
        progression_branch(1, len, &r3, &mut cur, &mut member, &mut best);
        r3[len] = best.len();
        best_set = best;
    }
    best_set.into_iter().map(|x| x as u64).collect()
}

fn progression_branch(next: usize, len: usize, r3: &[usize], cur: &mut Vec<usize>, member: &mut [bool], best: &mut Vec<usize>) {
    if next > len {
        if cur.len() > best.len() {
            *best = cur.clone();
        }
        return;
    }
    let rest = len - next + 1;
    let cap = if rest < len { r3[rest] } else { rest };
    if cur.len() + cap <= best.len() {
        return;
    }
    // `next` can join unless it closes a progression a, b, next.
    let closes = cur.iter().any(|&b| 2 * b > next && member[2 * b - next]);
    if !closes {
        cur.push(next);
        member[next] = true;
        progression_branch(next + 1, len, r3, cur, member, best);
        member[next] = false;
        cur.pop();
    }
    progression_branch(next + 1, len, r3, cur, member, best);
}

// ---------------------------------------------------------------------------
// Ruzsa–Szemerédi graphs
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuzsaSzemerediGraph {
    pub graph: Graph,
    /// `X = [m]`, `Y = [2m]`, `Z = [3m]` as vertex ids.
    pub parts: [Vec<usize>; 3],
}

/// Vertex ids: `x ↦ x-1`, `y ↦ m+y-1`, `z ↦ 3m+z-1`; `n = 6m`. For each
/// `x ∈ [m]` and `s ∈ S` the triangle `x, x+s, x+2s` is planted.
pub fn gen_ruzsa_szemeredi(m: usize, s: &BehrendSet) -> Result<RuzsaSzemerediGraph, InstanceError> {
    BehrendSet::new(m as u64, s.elements.clone())?;
    let xid = |x: usize| x - 1;
    let yid = |y: usize| m + y - 1;
    let zid = |z: usize| 3 * m + z - 1;
    let mut edges = Vec::new();
    for x in 1..=m {
        for &step in &s.elements {
            let step = step as usize;
            edges.push((xid(x), yid(x + step)));
            edges.push((yid(x + step), zid(x + 2 * step)));
            edges.push((xid(x), zid(x + 2 * step)));
        }
    }
    let graph = Graph::from_edges(6 * m, edges).expect("progression-free steps give distinct edges");
    let parts = [(0..m).collect(), (m..3 * m).collect(), (3 * m..6 * m).collect()];
    Ok(RuzsaSzemerediGraph { graph, parts })
}

// ---------------------------------------------------------------------------
// Planted copies
// ---------------------------------------------------------------------------

/// Adds `copies` vertex-disjoint copies of `h` at random positions. Returns
/// the new graph and the planted tuples.
pub fn gen_planted(base: &Graph, h: &Pattern, copies: usize, seed: u64) -> Result<(Graph, Vec<Vec<usize>>), InstanceError> {
    let needed = copies * h.h();
    if needed > base.n() {
        return Err(InstanceError::InsufficientVertices { needed, available: base.n() });
    }
    let mut order: Vec<usize> = (0..base.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let log: Vec<Vec<usize>> = order[..needed].chunks(h.h()).map(<[usize]>::to_vec).collect();
    let planted = log.iter().flat_map(|c| h.image_edges(c));
    let graph = Graph::from_edges_dedup(base.n(), base.edges().iter().copied().chain(planted)).unwrap();
    Ok((graph, log))
}

/// JSON companion written next to a generated edge list.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Sidecar {
    pub generator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planted: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behrend: Option<BehrendSet>,
}
