//! Simple undirected graphs, the edge-list text format, and edge density.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Density;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: malformed input: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: vertex {vertex} out of range for n = {n}")]
    OutOfRange { line: usize, vertex: usize, n: usize },
    #[error("line {line}: duplicate edge ({u}, {v})")]
    DuplicateEdge { line: usize, u: usize, v: usize },
    #[error("line {line}: self-loop at vertex {vertex}")]
    SelfLoop { line: usize, vertex: usize },
    #[error("header declares {declared} edges but {found} were listed")]
    EdgeCountMismatch { declared: usize, found: usize },
    #[error("vertex set is empty")]
    EmptySet,
    #[error("vertex {vertex} not in graph with n = {n}")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("vertex {vertex} listed twice in a vertex set")]
    RepeatedVertex { vertex: usize },
}

/// Simple undirected graph on `0..n` with O(1) adjacency queries.
#[derive(Clone, Debug)]
pub struct Graph {
    n: usize,
    adj: Vec<FixedBitSet>,
    edges: Vec<(usize, usize)>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.edges == other.edges
    }
}

impl Eq for Graph {}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph { n, adj: vec![FixedBitSet::with_capacity(n); n], edges: Vec::new() }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Self::from_edges(n, edges).expect("complete graph edges are valid")
    }

    /// Builds a graph, rejecting loops, out-of-range endpoints and duplicates.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::empty(n);
        for (i, (u, v)) in edges.into_iter().enumerate() {
            let line = i + 2;
            for w in [u, v] {
                if w >= n {
                    return Err(GraphError::OutOfRange { line, vertex: w, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop { line, vertex: u });
            }
            if g.adj[u].contains(v) {
                return Err(GraphError::DuplicateEdge { line, u, v });
            }
            g.adj[u].insert(v);
            g.adj[v].insert(u);
            g.edges.push((u.min(v), u.max(v)));
        }
        g.edges.sort_unstable();
        Ok(g)
    }

    /// Same as [`Graph::from_edges`] but silently merges duplicates.
    pub fn from_edges_dedup<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let set: BTreeSet<(usize, usize)> = edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect();
        Self::from_edges(n, set)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(v)
    }

    pub fn neighbors(&self, v: usize) -> &FixedBitSet {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].count_ones(..)
    }

    /// Membership mask for a vertex list.
    pub fn mask(&self, set: &[usize]) -> FixedBitSet {
        let mut m = FixedBitSet::with_capacity(self.n);
        for &v in set {
            m.insert(v);
        }
        m
    }

    /// Number of ordered pairs `(a, b) ∈ A × B` that are edges.
    pub fn pair_count(&self, a: &[usize], b_mask: &FixedBitSet) -> u64 {
        a.iter().map(|&u| self.adj[u].intersection_count(b_mask) as u64).sum()
    }

    /// Graph with the given edges removed. Unknown edges are ignored.
    pub fn without_edges(&self, remove: &[(usize, usize)]) -> Graph {
        let drop: BTreeSet<(usize, usize)> = remove.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        let kept = self.edges.iter().copied().filter(|e| !drop.contains(e));
        Graph::from_edges(self.n, kept).expect("subgraph of a valid graph")
    }

    /// Subgraph on the same vertex set keeping only `keep` edges.
    pub fn spanning_subgraph(&self, keep: impl IntoIterator<Item = (usize, usize)>) -> Graph {
        Graph::from_edges_dedup(self.n, keep).expect("edges of a valid graph")
    }

    /// Renders the edge-list text format accepted by [`parse_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(8 * (self.edges.len() + 1));
        let _ = writeln!(out, "{} {}", self.n, self.edges.len());
        for (u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    fn check_set(&self, set: &[usize]) -> Result<(), GraphError> {
        if set.is_empty() {
            return Err(GraphError::EmptySet);
        }
        let mut seen = FixedBitSet::with_capacity(self.n);
        for &v in set {
            if v >= self.n {
                return Err(GraphError::VertexOutOfRange { vertex: v, n: self.n });
            }
            if seen.put(v) {
                return Err(GraphError::RepeatedVertex { vertex: v });
            }
        }
        Ok(())
    }
}

/// Serializable form used by sidecar files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeListRepr {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl From<&Graph> for EdgeListRepr {
    fn from(g: &Graph) -> Self {
        EdgeListRepr { n: g.n, edges: g.edges.clone() }
    }
}

/// Parses `"n m"` followed by `m` lines `"u v"`.
///
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(GraphError::Malformed { line: 1, reason: "missing header".into() })?;
    let (n, m) = parse_pair(hline, header)?;

    let mut g = Graph::empty(n);
    let mut found = 0usize;
    for (line, l) in lines {
        let (u, v) = parse_pair(line, l)?;
        for w in [u, v] {
            if w >= n {
                return Err(GraphError::OutOfRange { line, vertex: w, n });
            }
        }
        if u == v {
            return Err(GraphError::SelfLoop { line, vertex: u });
        }
        if g.adj[u].contains(v) {
            return Err(GraphError::DuplicateEdge { line, u, v });
        }
        g.adj[u].insert(v);
        g.adj[v].insert(u);
        g.edges.push((u.min(v), u.max(v)));
        found += 1;
    }
    if found != m {
        return Err(GraphError::EdgeCountMismatch { declared: m, found });
    }
    g.edges.sort_unstable();
    Ok(g)
}

fn parse_pair(line: usize, text: &str) -> Result<(usize, usize), GraphError> {
    let mut it = text.split_whitespace();
    let mut next = |what: &str| -> Result<usize, GraphError> {
        let tok = it.next().ok_or_else(|| GraphError::Malformed { line, reason: format!("missing {what}") })?;
        tok.parse().map_err(|_| GraphError::Malformed { line, reason: format!("{what} {tok:?} is not a nonnegative integer") })
    };
    let a = next("first field")?;
    let b = next("second field")?;
    if let Some(extra) = it.next() {
        return Err(GraphError::Malformed { line, reason: format!("unexpected trailing token {extra:?}") });
    }
    Ok((a, b))
}

/// `d(A, B) = e(A, B) / (|A||B|)` over ordered pairs; `(x, x)` is never an edge.
pub fn density(g: &Graph, a: &[usize], b: &[usize]) -> Result<Density, GraphError> {
    g.check_set(a)?;
    g.check_set(b)?;
    let bm = g.mask(b);
    Ok(Density::new(g.pair_count(a, &bm), (a.len() * b.len()) as u64))
}

/// Unchecked density for internal hot paths. `a` and `b` must be nonempty.
pub(crate) fn density_masked(g: &Graph, a: &[usize], b_mask: &FixedBitSet, b_len: usize) -> Density {
    Density::new(g.pair_count(a, b_mask), (a.len() * b_len) as u64)
}
