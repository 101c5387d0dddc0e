//! k-partite k-uniform hypergraphs over designated vertex blocks.
//!
//! Vertices carry global ids (usually vertices of an underlying [`Graph`](crate::graph::Graph));
//! internally every edge is stored as a tuple of block-local positions so the
//! superregularity searches can work on dense bitmasks.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::rational::Density;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HypergraphError {
    #[error("expected {expected} blocks, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("block {0} is empty")]
    EmptyBlock(usize),
    #[error("vertex {0} appears in more than one block")]
    OverlappingBlocks(usize),
    #[error("edge {edge:?} does not have exactly one vertex per block")]
    NotPartite { edge: Vec<usize> },
    #[error("duplicate edge {0:?}")]
    DuplicateEdge(Vec<usize>),
    #[error("subset {index} is empty")]
    EmptySubset { index: usize },
    #[error("vertex {vertex} of subset {index} is not in block {index}")]
    OutsideBlock { index: usize, vertex: usize },
}

#[derive(Clone, Debug)]
pub struct KUniformHypergraph {
    blocks: Vec<Vec<usize>>,
    local_of: Vec<HashMap<usize, usize>>,
    edges: Vec<Vec<u32>>,
    /// For k = 2: `pair_rows[j]` = block-0 positions adjacent to block-1 position `j`.
    pair_rows: Option<Vec<FixedBitSet>>,
}

impl KUniformHypergraph {
    /// `edges` are given as global vertex tuples, coordinate `i` in block `i`.
    pub fn new(blocks: Vec<Vec<usize>>, edges: impl IntoIterator<Item = Vec<usize>>) -> Result<Self, HypergraphError> {
        let k = blocks.len();
        let mut local_of = Vec::with_capacity(k);
        let mut owner: HashMap<usize, usize> = HashMap::new();
        for (i, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(HypergraphError::EmptyBlock(i));
            }
            let mut m = HashMap::with_capacity(b.len());
            for (pos, &v) in b.iter().enumerate() {
                if owner.insert(v, i).is_some() {
                    return Err(HypergraphError::OverlappingBlocks(v));
                }
                m.insert(v, pos);
            }
            local_of.push(m);
        }
        let mut local_edges = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for e in edges {
            if e.len() != k {
                return Err(HypergraphError::NotPartite { edge: e });
            }
            let mut le = Vec::with_capacity(k);
            for (i, &v) in e.iter().enumerate() {
                match local_of[i].get(&v) {
                    Some(&p) => le.push(p as u32),
                    None => return Err(HypergraphError::NotPartite { edge: e.clone() }),
                }
            }
            if !seen.insert(le.clone()) {
                return Err(HypergraphError::DuplicateEdge(e));
            }
            local_edges.push(le);
        }
        local_edges.sort_unstable();
        Ok(Self::from_local_parts(blocks, local_of, local_edges))
    }

    fn from_local_parts(blocks: Vec<Vec<usize>>, local_of: Vec<HashMap<usize, usize>>, edges: Vec<Vec<u32>>) -> Self {
        let pair_rows = (blocks.len() == 2).then(|| {
            let mut rows = vec![FixedBitSet::with_capacity(blocks[0].len()); blocks[1].len()];
            for e in &edges {
                rows[e[1] as usize].insert(e[0] as usize);
            }
            rows
        });
        KUniformHypergraph { blocks, local_of, edges, pair_rows }
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_len(&self, i: usize) -> usize {
        self.blocks[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as global vertex tuples.
    pub fn edges(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        self.edges.iter().map(|e| e.iter().enumerate().map(|(i, &p)| self.blocks[i][p as usize]).collect())
    }

    /// Maps a global subset of block `i` to sorted local positions.
    pub fn to_local(&self, i: usize, set: &[usize]) -> Result<Vec<usize>, HypergraphError> {
        if set.is_empty() {
            return Err(HypergraphError::EmptySubset { index: i });
        }
        let mut out = set
            .iter()
            .map(|v| self.local_of[i].get(v).copied().ok_or(HypergraphError::OutsideBlock { index: i, vertex: *v }))
            .collect::<Result<Vec<_>, _>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn to_global(&self, i: usize, local: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = local.iter().map(|&p| self.blocks[i][p]).collect();
        out.sort_unstable();
        out
    }

    pub(crate) fn local_mask(&self, i: usize, local: &[usize]) -> FixedBitSet {
        let mut m = FixedBitSet::with_capacity(self.blocks[i].len());
        for &p in local {
            m.insert(p);
        }
        m
    }

    /// Edge count of `U₁ × … × U_k` given block-local masks.
    pub(crate) fn count_masked(&self, masks: &[FixedBitSet]) -> u64 {
        if let Some(rows) = &self.pair_rows {
            return masks[1].ones().map(|j| rows[j].intersection_count(&masks[0]) as u64).sum();
        }
        self.edges.iter().filter(|e| e.iter().enumerate().all(|(i, &p)| masks[i].contains(p as usize))).count() as u64
    }

    /// Degree of every position of block `target` into the product of the
    /// other masks (`masks[target]` is ignored).
    pub(crate) fn degrees_into(&self, target: usize, masks: &[FixedBitSet]) -> Vec<u64> {
        let len = self.blocks[target].len();
        if let Some(rows) = &self.pair_rows {
            if target == 1 {
                return (0..len).map(|j| rows[j].intersection_count(&masks[0]) as u64).collect();
            }
            let mut deg = vec![0u64; len];
            for j in masks[1].ones() {
                for p in rows[j].ones() {
                    deg[p] += 1;
                }
            }
            return deg;
        }
        let mut deg = vec![0u64; len];
        for e in &self.edges {
            if e.iter().enumerate().all(|(i, &p)| i == target || masks[i].contains(p as usize)) {
                deg[e[target] as usize] += 1;
            }
        }
        deg
    }

    pub(crate) fn density_local(&self, local: &[Vec<usize>]) -> Density {
        let masks: Vec<FixedBitSet> = local.iter().enumerate().map(|(i, s)| self.local_mask(i, s)).collect();
        let tuples: u64 = local.iter().map(|s| s.len() as u64).product();
        Density::new(self.count_masked(&masks), tuples)
    }
}

/// `d(A₁,…,A_k) = e(A₁,…,A_k) / (|A₁|⋯|A_k|)` with `A_i ⊆` block `i`.
pub fn hyperdensity(gamma: &KUniformHypergraph, sets: &[Vec<usize>]) -> Result<Density, HypergraphError> {
    if sets.len() != gamma.k() {
        return Err(HypergraphError::Arity { expected: gamma.k(), got: sets.len() });
    }
    let local = sets.iter().enumerate().map(|(i, s)| gamma.to_local(i, s)).collect::<Result<Vec<_>, _>>()?;
    Ok(gamma.density_local(&local))
}
