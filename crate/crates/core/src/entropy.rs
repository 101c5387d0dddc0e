//! The entropy functional `f(x) = x ln x`, mean entropy and mean square
//! densities of partitions, and the two Jensen defect inequalities.
//!
//! Densities stay rational until `f` is evaluated. Inequality checks accept
//! an absolute slack of [`SLACK`] in the inequality's favour.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{density_masked, Graph};
use crate::partition::{Partition, PartitionError};
use crate::rational::{serde_rational_vec, to_f64, Rational};
use crate::shattering::{verify_shattering, ShatterError};

pub const SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("f is defined on [0, ∞), got {0}")]
    Negative(f64),
    #[error("weights and values differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("weight {0} is negative")]
    NegativeWeight(Rational),
    #[error("value {0} is negative")]
    NegativeValue(Rational),
    #[error("weights sum to {0}, not 1")]
    WeightSum(Rational),
    #[error("index {0} out of range")]
    Index(usize),
    #[error("split weight c = {0} must lie strictly between 0 and 1")]
    Degenerate(Rational),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("partition covers {got} vertices, graph has {n}")]
    Size { got: usize, n: usize },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Shatter(#[from] ShatterError),
}

/// `x ln x`, with `f(0) = 0`.
pub fn f_entropy(x: f64) -> Result<f64, EntropyError> {
    if x < 0.0 || x.is_nan() {
        return Err(EntropyError::Negative(x));
    }
    Ok(entropy_unchecked(x))
}

fn entropy_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `f` at a nonnegative rational.
pub fn f_rational(x: &Rational) -> f64 {
    entropy_unchecked(to_f64(x))
}

/// `(|A||B| / n²) f(e / (|A||B|))`, written as `(e/n²) ln(e / |A||B|)` to
/// avoid dividing twice.
fn weighted_entropy(edges: u64, pairs: u64, n: usize) -> f64 {
    if edges == 0 {
        return 0.0;
    }
    let n2 = (n as f64) * (n as f64);
    (edges as f64 / n2) * (edges as f64 / pairs as f64).ln()
}

fn weighted_square(edges: u64, pairs: u64, n: usize) -> f64 {
    let n2 = (n as f64) * (n as f64);
    (edges as f64) * (edges as f64) / (pairs as f64 * n2)
}

/// `e(V_i, V_j)` over ordered pairs for every pair of parts.
pub fn part_pair_counts(g: &Graph, p: &Partition) -> Result<Vec<Vec<u64>>, EntropyError> {
    if p.n() != g.n() {
        return Err(EntropyError::Size { got: p.n(), n: g.n() });
    }
    let k = p.len();
    let mut counts = vec![vec![0u64; k]; k];
    for &(u, v) in g.edges() {
        let (a, b) = (p.part_of(u), p.part_of(v));
        counts[a][b] += 1;
        counts[b][a] += 1;
    }
    Ok(counts)
}

/// `Σ_{i,j} p_i p_j f(d(V_i, V_j))` over ordered pairs, diagonal included.
pub fn mean_entropy_density(g: &Graph, p: &Partition) -> Result<f64, EntropyError> {
    partition_sum(g, p, weighted_entropy)
}

/// `Σ_{i,j} p_i p_j d(V_i, V_j)²`.
pub fn mean_square_density(g: &Graph, p: &Partition) -> Result<f64, EntropyError> {
    partition_sum(g, p, weighted_square)
}

fn partition_sum(g: &Graph, p: &Partition, term: fn(u64, u64, usize) -> f64) -> Result<f64, EntropyError> {
    let counts = part_pair_counts(g, p)?;
    let sizes: Vec<u64> = p.parts().iter().map(|q| q.len() as u64).collect();
    let mut total = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            total += term(e, sizes[i] * sizes[j], g.n());
        }
    }
    Ok(total)
}

/// `f(A, B) = (|A||B| / |V|²) f(d(A, B))`.
pub fn pair_entropy(g: &Graph, a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let d = density_masked(g, a, &g.mask(b), b.len());
    weighted_entropy(d.edges, d.pairs, g.n())
}

/// `f(𝒜, ℬ) = Σ f(A', B')`.
pub fn split_entropy(g: &Graph, a_parts: &[Vec<usize>], b_parts: &[Vec<usize>]) -> f64 {
    let masks: Vec<_> = b_parts.iter().map(|q| g.mask(q)).collect();
    a_parts
        .iter()
        .flat_map(|p| b_parts.iter().zip(&masks).map(move |(q, m)| (p, q, m)))
        .map(|(p, q, m)| {
            let d = density_masked(g, p, m, q.len());
            weighted_entropy(d.edges, d.pairs, g.n())
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Defect inequalities
// ---------------------------------------------------------------------------

/// Nonnegative values `x_i` with nonnegative rational weights `ε_i` summing to one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedValues {
    #[serde(with = "serde_rational_vec")]
    weights: Vec<Rational>,
    #[serde(with = "serde_rational_vec")]
    values: Vec<Rational>,
}

impl WeightedValues {
    pub fn new(weights: Vec<Rational>, values: Vec<Rational>) -> Result<Self, EntropyError> {
        if weights.len() != values.len() {
            return Err(EntropyError::LengthMismatch(weights.len(), values.len()));
        }
        if let Some(w) = weights.iter().find(|w| w.is_negative()) {
            return Err(EntropyError::NegativeWeight(*w));
        }
        if let Some(x) = values.iter().find(|x| x.is_negative()) {
            return Err(EntropyError::NegativeValue(*x));
        }
        let sum: Rational = weights.iter().sum();
        if !sum.is_one() {
            return Err(EntropyError::WeightSum(sum));
        }
        Ok(WeightedValues { weights, values })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    /// `a = Σ ε_i x_i`.
    pub fn mean(&self) -> Rational {
        self.weights.iter().zip(&self.values).map(|(w, x)| w * x).sum()
    }

    /// `Σ ε_i f(x_i)` with `f` evaluated in floating point.
    pub fn weighted_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.weights.iter().zip(&self.values).map(|(w, x)| to_f64(w) * f(to_f64(x))).sum()
    }

    fn membership(&self, index: &[usize]) -> Result<Vec<bool>, EntropyError> {
        let mut inside = vec![false; self.len()];
        for &i in index {
            *inside.get_mut(i).ok_or(EntropyError::Index(i))? = true;
        }
        Ok(inside)
    }

    /// `(c, u, v)` for the split by `index`; `u` (resp. `v`) is zero when `c`
    /// (resp. `1 - c`) is.
    fn split(&self, inside: &[bool]) -> (Rational, Rational, Rational) {
        let (mut c, mut su, mut sv) = (Rational::zero(), Rational::zero(), Rational::zero());
        for ((w, x), &ins) in self.weights.iter().zip(&self.values).zip(inside) {
            if ins {
                c += w;
                su += w * x;
            } else {
                sv += w * x;
            }
        }
        let rest = Rational::one() - c;
        let u = if c.is_zero() { Rational::zero() } else { su / c };
        let v = if rest.is_zero() { Rational::zero() } else { sv / rest };
        (c, u, v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(lhs: f64, bound: f64) -> Self {
        BoundCheck { lhs, bound, holds: lhs >= bound - SLACK }
    }
}

/// `Σ ε_i f(x_i) ≥ c f(u) + (1-c) f(v)` for the split of the weights by `index`.
pub fn jensen_split_lower_bound(w: &WeightedValues, index: &[usize], f: impl Fn(f64) -> f64) -> Result<BoundCheck, EntropyError> {
    let inside = w.membership(index)?;
    let (c, u, v) = w.split(&inside);
    if c.is_zero() || c.is_one() {
        return Err(EntropyError::Degenerate(c));
    }
    let cf = to_f64(&c);
    let bound = cf * f(to_f64(&u)) + (1.0 - cf) * f(to_f64(&v));
    Ok(BoundCheck::new(w.weighted_sum(&f), bound))
}

/// `Σ ε_i f(x_i) ≥ f(a) + (1 - β + f(β)) c a` for `f(x) = x ln x`, where
/// `x_i ≤ βa` for every `i` in `index`.
pub fn defect_lower_bound(w: &WeightedValues, beta: &Rational, index: &[usize]) -> Result<BoundCheck, EntropyError> {
    if !beta.is_positive() || *beta >= Rational::one() {
        return Err(EntropyError::Precondition(format!("beta = {beta} must lie in (0, 1)")));
    }
    let inside = w.membership(index)?;
    let a = w.mean();
    let limit = beta * a;
    if let Some(i) = (0..w.len()).find(|&i| inside[i] && w.values[i] > limit) {
        return Err(EntropyError::Precondition(format!("x_{i} = {} exceeds βa = {limit}", w.values[i])));
    }
    let (c, _, _) = w.split(&inside);
    let bf = to_f64(beta);
    let bound = f_rational(&a) + (1.0 - bf + entropy_unchecked(bf)) * to_f64(&c) * to_f64(&a);
    Ok(BoundCheck::new(w.weighted_sum(entropy_unchecked), bound))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainCheck {
    /// `f(𝒜, ℬ)`.
    pub refined: f64,
    /// `f(A, B)`.
    pub base: f64,
    /// `(c/2) e(A, B) / |V|²`.
    pub gain: f64,
    pub holds: bool,
}

/// `f(𝒜, ℬ) ≥ f(A, B) + (c/2) e(A, B)/|V|²` for an `(α, c, t)`-shattering
/// of a pair with `d(A, B) ≥ 10α`.
pub fn shattering_gain_bound(
    g: &Graph,
    a: &[usize],
    b: &[usize],
    a_parts: &[Vec<usize>],
    b_parts: &[Vec<usize>],
    alpha: &Rational,
    c: &Rational,
) -> Result<GainCheck, EntropyError> {
    if a.is_empty() || b.is_empty() {
        return Err(EntropyError::Precondition("A and B must be nonempty".into()));
    }
    let whole = density_masked(g, a, &g.mask(b), b.len());
    if whole.lt(&(alpha * Rational::from_integer(10))) {
        return Err(EntropyError::Precondition(format!("d(A, B) = {whole} < 10α")));
    }
    let check = verify_shattering(g, a, b, a_parts, b_parts, *alpha)?;
    if check.c_achieved < *c {
        return Err(EntropyError::Precondition(format!("shattering achieves c = {} < {c}", check.c_achieved)));
    }
    let n2 = (g.n() as f64).powi(2);
    let refined = split_entropy(g, a_parts, b_parts);
    let base = weighted_entropy(whole.edges, whole.pairs, g.n());
    let gain = to_f64(c) / 2.0 * whole.edges as f64 / n2;
    Ok(GainCheck { refined, base, gain, holds: refined >= base + gain - SLACK })
}
