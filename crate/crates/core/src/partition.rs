//! Vertex partitions `V = V₁ ∪ … ∪ V_k` with stable part indices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("part {0} is empty")]
    EmptyPart(usize),
    #[error("vertex {0} appears in more than one part")]
    Overlap(usize),
    #[error("vertex {0} is not covered by any part")]
    Uncovered(usize),
    #[error("vertex {vertex} out of range for n = {n}")]
    OutOfRange { vertex: usize, n: usize },
    #[error("partitions are over different vertex sets ({0} vs {1} vertices)")]
    Mismatch(usize, usize),
}

/// Partition of `0..n`. Each part is sorted; part order is significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    parts: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    assignment: Vec<usize>,
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PartitionRepr { assignment: self.assignment.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PartitionRepr::deserialize(d)?;
        Partition::from_assignment(repr.assignment).map_err(serde::de::Error::custom)
    }
}

impl Partition {
    pub fn from_parts(n: usize, parts: Vec<Vec<usize>>) -> Result<Self, PartitionError> {
        let mut assignment = vec![usize::MAX; n];
        let mut sorted = Vec::with_capacity(parts.len());
        for (i, mut part) in parts.into_iter().enumerate() {
            if part.is_empty() {
                return Err(PartitionError::EmptyPart(i));
            }
            part.sort_unstable();
            for &v in &part {
                if v >= n {
                    return Err(PartitionError::OutOfRange { vertex: v, n });
                }
                if assignment[v] != usize::MAX {
                    return Err(PartitionError::Overlap(v));
                }
                assignment[v] = i;
            }
            sorted.push(part);
        }
        if let Some(v) = assignment.iter().position(|&a| a == usize::MAX) {
            return Err(PartitionError::Uncovered(v));
        }
        Ok(Partition { assignment, parts: sorted })
    }

    /// Part labels must be exactly `0..k`, each used at least once.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self, PartitionError> {
        let k = assignment.iter().map(|&a| a + 1).max().unwrap_or(0);
        let mut parts = vec![Vec::new(); k];
        for (v, &a) in assignment.iter().enumerate() {
            parts[a].push(v);
        }
        if let Some(i) = parts.iter().position(Vec::is_empty) {
            return Err(PartitionError::EmptyPart(i));
        }
        Ok(Partition { assignment, parts })
    }

    pub fn trivial(n: usize) -> Self {
        Self::from_parts(n, if n == 0 { vec![] } else { vec![(0..n).collect()] }).unwrap()
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_parts(n, (0..n).map(|v| vec![v]).collect()).unwrap()
    }

    /// Consecutive blocks of `size` vertices; the last block may be shorter.
    pub fn chunks(n: usize, size: usize) -> Self {
        let size = size.max(1);
        let parts = (0..n).collect::<Vec<_>>().chunks(size).map(<[usize]>::to_vec).collect();
        Self::from_parts(n, parts).unwrap()
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub fn part(&self, i: usize) -> &[usize] {
        &self.parts[i]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn part_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    /// `p_i = |V_i| / n`.
    pub fn weight(&self, i: usize) -> Rational {
        Rational::new(self.parts[i].len() as i128, self.n() as i128)
    }

    pub fn max_part_size(&self) -> usize {
        self.parts.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// True iff every part of `q` lies inside a single part of `p`.
pub fn is_refinement(p: &Partition, q: &Partition) -> Result<bool, PartitionError> {
    if p.n() != q.n() {
        return Err(PartitionError::Mismatch(p.n(), q.n()));
    }
    Ok(q.parts.iter().all(|part| {
        let owner = p.assignment[part[0]];
        part.iter().all(|&v| p.assignment[v] == owner)
    }))
}

/// Checks that `parts` partition exactly the vertex set `whole`.
pub fn check_partition_of(whole: &[usize], parts: &[Vec<usize>]) -> Result<(), PartitionError> {
    use std::collections::BTreeSet;
    let target: BTreeSet<usize> = whole.iter().copied().collect();
    let mut seen = BTreeSet::new();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(PartitionError::EmptyPart(i));
        }
        for &v in part {
            if !target.contains(&v) {
                return Err(PartitionError::OutOfRange { vertex: v, n: whole.len() });
            }
            if !seen.insert(v) {
                return Err(PartitionError::Overlap(v));
            }
        }
    }
    if let Some(&v) = target.difference(&seen).next() {
        return Err(PartitionError::Uncovered(v));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn refinement_examples() {
        let p = Partition::from_parts(3, vec![vec![0, 1], vec![2]]).unwrap();
        let q = Partition::from_parts(3, vec![vec![0, 2], vec![1]]).unwrap();
        assert!(!is_refinement(&p, &q).unwrap());
        assert!(is_refinement(&p, &Partition::singletons(3)).unwrap());
        assert!(is_refinement(&Partition::trivial(3), &q).unwrap());
        assert!(matches!(is_refinement(&p, &Partition::trivial(4)), Err(PartitionError::Mismatch(3, 4))));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(Partition::from_parts(3, vec![vec![0, 1], vec![]]), Err(PartitionError::EmptyPart(1)));
        assert_eq!(Partition::from_parts(3, vec![vec![0, 1], vec![1, 2]]), Err(PartitionError::Overlap(1)));
        assert_eq!(Partition::from_parts(3, vec![vec![0, 1]]), Err(PartitionError::Uncovered(2)));
        assert_eq!(Partition::from_assignment(vec![0, 2, 0]), Err(PartitionError::EmptyPart(1)));
    }

    #[test]
    fn serializes_as_assignment() {
        let p = Partition::from_parts(4, vec![vec![1, 3], vec![0, 2]]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"assignment":[1,0,1,0]}"#);
        let back: Partition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    fn arb_partition(n: usize) -> impl Strategy<Value = Partition> {
        proptest::collection::vec(0usize..4, n).prop_map(|labels| {
            // compact labels to 0..k in first-appearance order
            let mut map = std::collections::HashMap::new();
            let assignment = labels
                .into_iter()
                .map(|l| {
                    let next = map.len();
                    *map.entry(l).or_insert(next)
                })
                .collect();
            Partition::from_assignment(assignment).unwrap()
        })
    }

    proptest! {
        #[test]
        fn refinement_is_reflexive_and_transitive(p in arb_partition(9), splits in proptest::collection::vec(any::<bool>(), 9)) {
            prop_assert!(is_refinement(&p, &p).unwrap());
            // q splits p's parts by a coin per vertex; r is singletons
            let q = Partition::from_assignment({
                let mut map = std::collections::HashMap::new();
                (0..9).map(|v| { let key = (p.part_of(v), splits[v]); let next = map.len(); *map.entry(key).or_insert(next) }).collect()
            }).unwrap();
            let r = Partition::singletons(9);
            prop_assert!(is_refinement(&p, &q).unwrap());
            prop_assert!(is_refinement(&q, &r).unwrap());
            prop_assert!(is_refinement(&p, &r).unwrap());
        }
    }
}
