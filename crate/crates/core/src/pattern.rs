//! Patterns `H` on `[h]`, exact copy counting, edge-disjoint packings and
//! exact removal distance.
//!
//! Pattern vertices are 0-based internally (`0..h`). A *labeled copy* is an
//! injective map `φ: [h] → V(G)` with `φ(i)φ(j) ∈ E(G)` for every edge `ij`
//! of `H`; it is stored as the vertex tuple `(φ(0), …, φ(h-1))`.

use std::collections::{BTreeSet, HashMap};
use std::ops::ControlFlow;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatternError {
    #[error("pattern needs at least 2 vertices, got {0}")]
    TooSmall(usize),
    #[error("pattern needs at least one edge")]
    NoEdges,
    #[error("invalid pattern edge ({0}, {1})")]
    BadEdge(usize, usize),
    #[error("unknown pattern {0:?}")]
    Unknown(String),
    #[error("expected {expected} vertex sets, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("vertex {0} lies in more than one part")]
    OverlappingParts(usize),
    #[error("vertex {vertex} out of range for n = {n}")]
    OutOfRange { vertex: usize, n: usize },
    #[error("exact search over {needed} items exceeds the budget of {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("packing copy {index} is not a copy of the pattern in the graph")]
    InvalidCopy { index: usize },
    #[error("packing copies {0} and {1} share an edge")]
    NotEdgeDisjoint(usize, usize),
}

/// Simple graph `H` on `0..h`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    h: usize,
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    adj: Vec<Vec<bool>>,
}

impl Pattern {
    /// A valid pattern: `h ≥ 2`, simple, at least one edge.
    pub fn new(h: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, PatternError> {
        if h < 2 {
            return Err(PatternError::TooSmall(h));
        }
        let p = Self::build(h, edges)?;
        if p.edges.is_empty() {
            return Err(PatternError::NoEdges);
        }
        Ok(p)
    }

    /// Like [`Pattern::new`] but edgeless and one-vertex patterns are allowed.
    /// The key lemma recurses through such induced subpatterns.
    pub fn new_unchecked_size(h: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, PatternError> {
        Self::build(h, edges)
    }

    fn build(h: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, PatternError> {
        let mut adj = vec![vec![false; h]; h];
        let mut list = BTreeSet::new();
        for (u, v) in edges {
            if u >= h || v >= h || u == v || adj[u][v] {
                return Err(PatternError::BadEdge(u, v));
            }
            adj[u][v] = true;
            adj[v][u] = true;
            list.insert((u.min(v), u.max(v)));
        }
        Ok(Pattern { h, edges: list.into_iter().collect(), adj })
    }

    pub fn triangle() -> Self {
        Self::complete(3)
    }

    pub fn complete(h: usize) -> Self {
        Self::new(h, (0..h).flat_map(|u| (u + 1..h).map(move |v| (u, v)))).expect("h >= 2")
    }

    pub fn cycle(h: usize) -> Self {
        Self::new(h, (0..h).map(|i| (i, (i + 1) % h))).expect("h >= 3")
    }

    pub fn path(h: usize) -> Self {
        Self::new(h, (0..h - 1).map(|i| (i, i + 1))).expect("h >= 2")
    }

    /// Presets `triangle`, `K<h>`, `C<h>`, `path<h>`/`path_<h>`, or an
    /// explicit list such as `"0-1,1-2,2-0"`.
    pub fn parse(spec: &str) -> Result<Self, PatternError> {
        let s = spec.trim();
        let unknown = || PatternError::Unknown(s.to_string());
        let size = |rest: &str| rest.trim_start_matches('_').parse::<usize>().map_err(|_| unknown());
        match s {
            "triangle" => return Ok(Self::triangle()),
            "edge" => return Ok(Self::complete(2)),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("path") {
            let h = size(rest)?;
            return if h >= 2 { Ok(Self::path(h)) } else { Err(PatternError::TooSmall(h)) };
        }
        if let Some(rest) = s.strip_prefix('K') {
            let h = size(rest)?;
            return if h >= 2 { Ok(Self::complete(h)) } else { Err(PatternError::TooSmall(h)) };
        }
        if let Some(rest) = s.strip_prefix('C') {
            let h = size(rest)?;
            return if h >= 3 { Ok(Self::cycle(h)) } else { Err(unknown()) };
        }
        if s.contains('-') {
            let mut edges = Vec::new();
            for tok in s.split(',') {
                let (a, b) = tok.trim().split_once('-').ok_or_else(unknown)?;
                let a: usize = a.trim().parse().map_err(|_| unknown())?;
                let b: usize = b.trim().parse().map_err(|_| unknown())?;
                edges.push((a, b));
            }
            let h = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
            return Self::new(h, edges);
        }
        Err(unknown())
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adj[i][j]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].iter().filter(|&&b| b).count()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.h).filter(|&j| self.adj[i][j]).collect()
    }

    /// Induced subpattern on `0..len`.
    pub fn induced_prefix(&self, len: usize) -> Pattern {
        let edges = self.edges.iter().copied().filter(|&(u, v)| u < len && v < len);
        Pattern::build(len, edges).expect("subpattern of a valid pattern")
    }

    pub fn to_graph(&self) -> Graph {
        Graph::from_edges(self.h, self.edges.iter().copied()).expect("pattern is simple")
    }

    /// `|Aut(H)|`, counted as injective edge-preserving maps `H → H`.
    pub fn automorphism_count(&self) -> u64 {
        count_labeled(&self.to_graph(), self)
    }

    /// Image edges of a copy, normalized `(min, max)`.
    pub fn image_edges(&self, copy: &[usize]) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (copy[i], copy[j]);
                (a.min(b), a.max(b))
            })
            .collect()
    }

    /// True iff `copy` is an injective, adjacency-preserving tuple in `g`.
    pub fn is_copy(&self, g: &Graph, copy: &[usize]) -> bool {
        if copy.len() != self.h || copy.iter().any(|&v| v >= g.n()) {
            return false;
        }
        let distinct: BTreeSet<_> = copy.iter().collect();
        distinct.len() == self.h && self.edges.iter().all(|&(i, j)| g.has_edge(copy[i], copy[j]))
    }
}

// ---------------------------------------------------------------------------
// Backtracking embedder
// ---------------------------------------------------------------------------

struct Embedder<'a> {
    g: &'a Graph,
    /// Pattern vertices in search order.
    order: Vec<usize>,
    /// For search position `t`, the earlier positions adjacent in `H`.
    back: Vec<Vec<usize>>,
    domains: Vec<FixedBitSet>,
    injective: bool,
}

impl<'a> Embedder<'a> {
    /// `domains[i]` restricts the image of pattern vertex `i`.
    fn new(g: &'a Graph, h: &Pattern, domains: Vec<FixedBitSet>, injective: bool) -> Self {
        // Degree-descending static order; ties prefer vertices already
        // attached to the placed prefix, then the smaller label.
        let mut order: Vec<usize> = Vec::with_capacity(h.h());
        let mut placed = vec![false; h.h()];
        for _ in 0..h.h() {
            let next = (0..h.h())
                .filter(|&v| !placed[v])
                .max_by_key(|&v| {
                    let attached = order.iter().filter(|&&u| h.adjacent(u, v)).count();
                    (h.degree(v), attached, std::cmp::Reverse(v))
                })
                .unwrap();
            placed[next] = true;
            order.push(next);
        }
        let back = (0..order.len()).map(|t| (0..t).filter(|&s| h.adjacent(order[s], order[t])).collect()).collect();
        Embedder { g, order, back, domains, injective }
    }

    fn candidates(&self, t: usize, assign: &[usize]) -> FixedBitSet {
        let mut c = self.domains[self.order[t]].clone();
        for &s in &self.back[t] {
            c.intersect_with(self.g.neighbors(assign[s]));
        }
        if self.injective {
            for &v in &assign[..t] {
                c.set(v, false);
            }
        }
        c
    }

    fn count_from(&self, t: usize, assign: &mut Vec<usize>) -> u64 {
        let c = self.candidates(t, assign);
        if t + 1 == self.order.len() {
            return c.count_ones(..) as u64;
        }
        let mut total = 0;
        for v in c.ones() {
            assign.push(v);
            total += self.count_from(t + 1, assign);
            assign.pop();
        }
        total
    }

    fn count(&self) -> u64 {
        if self.order.is_empty() {
            return 1;
        }
        let first = self.candidates(0, &[]);
        let firsts: Vec<usize> = first.ones().collect();
        if self.order.len() == 1 {
            return firsts.len() as u64;
        }
        firsts
            .par_iter()
            .map(|&v| {
                let mut assign = Vec::with_capacity(self.order.len());
                assign.push(v);
                self.count_from(1, &mut assign)
            })
            .sum()
    }

    /// Visits embeddings in deterministic order as tuples indexed by pattern vertex.
    fn for_each<F>(&self, f: &mut F)
    where
        F: FnMut(&[usize]) -> ControlFlow<()>,
    {
        let mut assign = Vec::with_capacity(self.order.len());
        let mut tuple = vec![0usize; self.order.len()];
        let _ = self.visit(0, &mut assign, &mut tuple, f);
    }

    fn visit<F>(&self, t: usize, assign: &mut Vec<usize>, tuple: &mut [usize], f: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&[usize]) -> ControlFlow<()>,
    {
        if t == self.order.len() {
            for (s, &v) in assign.iter().enumerate() {
                tuple[self.order[s]] = v;
            }
            return f(tuple);
        }
        for v in self.candidates(t, assign).ones() {
            assign.push(v);
            let flow = self.visit(t + 1, assign, tuple, f);
            assign.pop();
            flow?;
        }
        ControlFlow::Continue(())
    }
}

fn full_domains(g: &Graph, h: usize) -> Vec<FixedBitSet> {
    let mut all = FixedBitSet::with_capacity(g.n());
    all.insert_range(..);
    vec![all; h]
}

fn partite_domains(g: &Graph, h: &Pattern, parts: &[Vec<usize>]) -> Result<Vec<FixedBitSet>, PatternError> {
    if parts.len() != h.h() {
        return Err(PatternError::Arity { expected: h.h(), got: parts.len() });
    }
    let mut seen = FixedBitSet::with_capacity(g.n());
    let mut domains = Vec::with_capacity(parts.len());
    for p in parts {
        let mut m = FixedBitSet::with_capacity(g.n());
        for &v in p {
            if v >= g.n() {
                return Err(PatternError::OutOfRange { vertex: v, n: g.n() });
            }
            if seen.put(v) {
                return Err(PatternError::OverlappingParts(v));
            }
            m.insert(v);
        }
        domains.push(m);
    }
    Ok(domains)
}

/// Tuples `(v₁…v_h) ∈ V₁×…×V_h` with `v_i v_j ∈ E(G)` for every `ij ∈ E(H)`.
pub fn count_partite_copies(g: &Graph, h: &Pattern, parts: &[Vec<usize>]) -> Result<u64, PatternError> {
    let domains = partite_domains(g, h, parts)?;
    Ok(Embedder::new(g, h, domains, false).count())
}

/// Lists up to `limit` partite copies in enumeration order.
pub fn partite_copies(g: &Graph, h: &Pattern, parts: &[Vec<usize>], limit: usize) -> Result<Vec<Vec<usize>>, PatternError> {
    let domains = partite_domains(g, h, parts)?;
    let mut out = Vec::new();
    if limit == 0 {
        return Ok(out);
    }
    Embedder::new(g, h, domains, false).for_each(&mut |t| {
        out.push(t.to_vec());
        if out.len() >= limit {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    Ok(out)
}

pub(crate) fn count_labeled(g: &Graph, h: &Pattern) -> u64 {
    Embedder::new(g, h, full_domains(g, h.h()), true).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyCount {
    pub labeled: u64,
    pub unlabeled: u64,
}

/// Labeled (injective maps) and unlabeled (`labeled / |Aut(H)|`) copy counts.
pub fn count_copies(g: &Graph, h: &Pattern) -> CopyCount {
    let labeled = count_labeled(g, h);
    CopyCount { labeled, unlabeled: labeled / h.automorphism_count() }
}

/// One representative labeled tuple per distinct copy (distinct image edge
/// set), in enumeration order.
pub fn distinct_copies(g: &Graph, h: &Pattern) -> Vec<Vec<usize>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    Embedder::new(g, h, full_domains(g, h.h()), true).for_each(&mut |t| {
        let mut key = h.image_edges(t);
        key.sort_unstable();
        let mut verts = t.to_vec();
        verts.sort_unstable();
        if seen.insert((verts, key)) {
            out.push(t.to_vec());
        }
        ControlFlow::Continue(())
    });
    out
}

/// True iff `g` contains at least one copy of `h`.
pub fn contains_copy(g: &Graph, h: &Pattern) -> bool {
    let mut found = false;
    Embedder::new(g, h, full_domains(g, h.h()), true).for_each(&mut |_| {
        found = true;
        ControlFlow::Break(())
    });
    found
}

// ---------------------------------------------------------------------------
// Packings
// ---------------------------------------------------------------------------

/// Pairwise edge-disjoint copies of a pattern.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Packing {
    pub copies: Vec<Vec<usize>>,
}

impl Packing {
    pub fn len(&self) -> usize {
        self.copies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.copies.is_empty()
    }

    /// Checks every copy against `g` and pairwise edge-disjointness.
    pub fn validate(&self, g: &Graph, h: &Pattern) -> Result<(), PatternError> {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, c) in self.copies.iter().enumerate() {
            if !h.is_copy(g, c) {
                return Err(PatternError::InvalidCopy { index: i });
            }
            for e in h.image_edges(c) {
                if let Some(&j) = owner.get(&e) {
                    return Err(PatternError::NotEdgeDisjoint(j, i));
                }
                owner.insert(e, i);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PackingMode {
    /// Maximal packing; the seed permutes the vertex order.
    Greedy { seed: u64 },
    /// Maximum packing by branch and bound, refused above `budget` copies.
    Exact { budget: usize },
}

pub fn packing(g: &Graph, h: &Pattern, mode: PackingMode) -> Result<Packing, PatternError> {
    match mode {
        PackingMode::Greedy { seed } => Ok(greedy_packing(g, h, seed)),
        PackingMode::Exact { budget } => exact_packing(g, h, budget),
    }
}

fn greedy_packing(g: &Graph, h: &Pattern, seed: u64) -> Packing {
    let mut perm: Vec<usize> = (0..g.n()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // perm[new] = old
    let mut new_of = vec![0; g.n()];
    for (new, &old) in perm.iter().enumerate() {
        new_of[old] = new;
    }
    let relabeled = Graph::from_edges(g.n(), g.edges().iter().map(|&(u, v)| (new_of[u], new_of[v]))).unwrap();

    // Scanning the enumeration once and keeping the copies that are disjoint
    // from everything accepted so far is equivalent to restarting against the
    // residual graph: a rejected copy stays blocked forever.
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut copies = Vec::new();
    Embedder::new(&relabeled, h, full_domains(&relabeled, h.h()), true).for_each(&mut |t| {
        let edges = h.image_edges(t);
        if edges.iter().all(|e| !used.contains(e)) {
            used.extend(edges);
            copies.push(t.iter().map(|&v| perm[v]).collect());
        }
        ControlFlow::Continue(())
    });
    Packing { copies }
}

/// Edge-id bitsets for each distinct copy.
struct CopySystem {
    copies: Vec<Vec<usize>>,
    sets: Vec<FixedBitSet>,
    edge_ids: HashMap<(usize, usize), usize>,
    edge_list: Vec<(usize, usize)>,
}

impl CopySystem {
    fn new(g: &Graph, h: &Pattern) -> Self {
        let edge_list = g.edges().to_vec();
        let edge_ids: HashMap<_, _> = edge_list.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let copies = distinct_copies(g, h);
        let sets = copies
            .iter()
            .map(|c| {
                let mut s = FixedBitSet::with_capacity(edge_list.len());
                for e in h.image_edges(c) {
                    s.insert(edge_ids[&e]);
                }
                s
            })
            .collect();
        CopySystem { copies, sets, edge_ids, edge_list }
    }
}

fn exact_packing(g: &Graph, h: &Pattern, budget: usize) -> Result<Packing, PatternError> {
    let sys = CopySystem::new(g, h);
    if sys.copies.len() > budget {
        return Err(PatternError::BudgetExceeded { needed: sys.copies.len(), budget });
    }
    let initial = greedy_packing(g, h, 0);
    let mut best: Vec<usize> = initial
        .copies
        .iter()
        .map(|c| {
            let key = {
                let mut k = h.image_edges(c);
                k.sort_unstable();
                k
            };
            sys.copies
                .iter()
                .position(|d| {
                    let mut k = h.image_edges(d);
                    k.sort_unstable();
                    k == key
                })
                .expect("greedy copies are enumerated copies")
        })
        .collect();
    let eh = h.edge_count();
    let mut chosen = Vec::new();
    let avail: Vec<usize> = (0..sys.copies.len()).collect();
    pack_branch(&sys, eh, &avail, &mut chosen, &mut best);
    best.sort_unstable();
    Ok(Packing { copies: best.into_iter().map(|i| sys.copies[i].clone()).collect() })
}

/// Branches on the available edge covered by the fewest available copies:
/// either one of those copies is packed, or that edge stays unused.
fn pack_branch(sys: &CopySystem, eh: usize, avail: &[usize], chosen: &mut Vec<usize>, best: &mut Vec<usize>) {
    if avail.is_empty() {
        if chosen.len() > best.len() {
            *best = chosen.clone();
        }
        return;
    }
    let mut covered = FixedBitSet::with_capacity(sys.edge_list.len());
    for &c in avail {
        covered.union_with(&sys.sets[c]);
    }
    let bound = chosen.len() + avail.len().min(covered.count_ones(..) / eh);
    if bound <= best.len() {
        return;
    }
    let mut load = vec![0usize; sys.edge_list.len()];
    for &c in avail {
        for e in sys.sets[c].ones() {
            load[e] += 1;
        }
    }
    let pivot = covered.ones().min_by_key(|&e| (load[e], e)).unwrap();
    for &c in avail.iter().filter(|&&c| sys.sets[c].contains(pivot)) {
        let rest: Vec<usize> = avail.iter().copied().filter(|&d| d != c && sys.sets[d].is_disjoint(&sys.sets[c])).collect();
        chosen.push(c);
        pack_branch(sys, eh, &rest, chosen, best);
        chosen.pop();
    }
    let rest: Vec<usize> = avail.iter().copied().filter(|&d| !sys.sets[d].contains(pivot)).collect();
    pack_branch(sys, eh, &rest, chosen, best);
}

/// Subgraph consisting exactly of the packing's edges.
pub fn packing_union(g: &Graph, h: &Pattern, p: &Packing) -> Result<Graph, PatternError> {
    p.validate(g, h)?;
    let edges: Vec<(usize, usize)> = p.copies.iter().flat_map(|c| h.image_edges(c)).collect();
    Ok(Graph::from_edges(g.n(), edges).expect("packing edges are distinct edges of g"))
}

// ---------------------------------------------------------------------------
// Removal distance
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalCertificate {
    pub distance: usize,
    pub deleted: Vec<(usize, usize)>,
}

/// Minimum number of edge deletions that destroy every copy of `h`, with a
/// witness deletion set. Refused when `g` has more than `edge_budget` edges.
pub fn removal_distance_exact(g: &Graph, h: &Pattern, edge_budget: usize) -> Result<RemovalCertificate, PatternError> {
    if g.edge_count() > edge_budget {
        return Err(PatternError::BudgetExceeded { needed: g.edge_count(), budget: edge_budget });
    }
    let sys = CopySystem::new(g, h);
    let m = sys.edge_list.len();
    let mut best = FixedBitSet::with_capacity(m);
    for c in &greedy_packing(g, h, 0).copies {
        for e in h.image_edges(c) {
            best.insert(sys.edge_ids[&e]);
        }
    }
    let mut best_size = best.count_ones(..);
    let mut deleted = FixedBitSet::with_capacity(m);
    let mut kept = FixedBitSet::with_capacity(m);
    hit_branch(&sys, 0, &mut deleted, &mut kept, &mut best, &mut best_size);
    let deleted_edges: Vec<(usize, usize)> = best.ones().map(|e| sys.edge_list[e]).collect();
    Ok(RemovalCertificate { distance: deleted_edges.len(), deleted: deleted_edges })
}

fn hit_branch(
    sys: &CopySystem,
    depth: usize,
    deleted: &mut FixedBitSet,
    kept: &mut FixedBitSet,
    best: &mut FixedBitSet,
    best_size: &mut usize,
) {
    let unhit: Vec<usize> = (0..sys.sets.len()).filter(|&c| sys.sets[c].is_disjoint(deleted)).collect();
    if unhit.is_empty() {
        if depth < *best_size {
            *best_size = depth;
            *best = deleted.clone();
        }
        return;
    }
    // Pairwise edge-disjoint unhit copies each need their own deletion.
    let mut blocked = FixedBitSet::with_capacity(sys.edge_list.len());
    let mut disjoint = 0;
    for &c in &unhit {
        if sys.sets[c].is_disjoint(&blocked) {
            blocked.union_with(&sys.sets[c]);
            disjoint += 1;
        }
    }
    if depth + disjoint >= *best_size {
        return;
    }
    let free = |c: usize| sys.sets[c].difference_count(kept);
    let pivot = *unhit.iter().min_by_key(|&&c| (free(c), c)).unwrap();
    let options: Vec<usize> = sys.sets[pivot].ones().filter(|&e| !kept.contains(e)).collect();
    let mut newly_kept = Vec::new();
    for e in options {
        deleted.insert(e);
        hit_branch(sys, depth + 1, deleted, kept, best, best_size);
        deleted.set(e, false);
        kept.insert(e);
        newly_kept.push(e);
    }
    for e in newly_kept {
        kept.set(e, false);
    }
}
