//! One-sided sampling tester for pattern-freeness.
//!
//! Draws `t = ⌈2/δ⌉` uniform ordered `h`-tuples (with replacement) and rejects
//! on the first tuple with distinct vertices that maps every pattern edge to
//! a graph edge. Pattern-free graphs are always accepted.

use num::{Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::pattern::{count_copies, Pattern};
use crate::rational::{format_rational, serde_rational, to_f64, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TesterError {
    #[error("delta = {0} must lie in (0, 1]")]
    Delta(Rational),
    #[error("at least one trial is required")]
    NoTrials,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Decision {
    Accept,
    /// The sampled tuple, `witness[i]` playing pattern vertex `i`.
    Reject {
        witness: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVerdict {
    #[serde(flatten)]
    pub decision: Decision,
    /// Tuples drawn before stopping.
    pub samples: usize,
    /// The sample budget `⌈2/δ⌉`.
    pub budget: usize,
    #[serde(with = "serde_rational")]
    pub delta: Rational,
    pub seed: u64,
}

impl TestVerdict {
    pub fn rejected(&self) -> bool {
        matches!(self.decision, Decision::Reject { .. })
    }
}

/// `⌈2/δ⌉`.
pub fn sample_budget(delta: &Rational) -> Result<usize, TesterError> {
    if !delta.is_positive() || *delta > Rational::from_integer(1) {
        return Err(TesterError::Delta(*delta));
    }
    Ok((Rational::from_integer(2) / delta).ceil().to_integer().to_usize().unwrap_or(usize::MAX))
}

fn labeled_hit(g: &Graph, h: &Pattern, tuple: &[usize]) -> bool {
    let distinct = tuple.iter().enumerate().all(|(i, v)| !tuple[..i].contains(v));
    distinct && h.edges().iter().all(|&(i, j)| g.has_edge(tuple[i], tuple[j]))
}

fn run(g: &Graph, h: &Pattern, budget: usize, rng: &mut ChaCha8Rng) -> (Option<Vec<usize>>, usize) {
    if g.n() == 0 {
        return (None, 0);
    }
    let mut tuple = vec![0; h.h()];
    for drawn in 1..=budget {
        for slot in tuple.iter_mut() {
            *slot = rng.gen_range(0..g.n());
        }
        if labeled_hit(g, h, &tuple) {
            return (Some(tuple), drawn);
        }
    }
    (None, budget)
}

pub fn test_h_freeness(g: &Graph, h: &Pattern, delta: Rational, seed: u64) -> Result<TestVerdict, TesterError> {
    let budget = sample_budget(&delta)?;
    let (witness, samples) = run(g, h, budget, &mut ChaCha8Rng::seed_from_u64(seed));
    let decision = match witness {
        Some(witness) => Decision::Reject { witness },
        None => Decision::Accept,
    };
    Ok(TestVerdict { decision, samples, budget, delta, seed })
}

/// Checks a rejection witness: distinct vertices carrying every pattern edge.
pub fn verify_witness(g: &Graph, h: &Pattern, witness: &[usize]) -> bool {
    witness.len() == h.h() && witness.iter().all(|&v| v < g.n()) && labeled_hit(g, h, witness)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub trials: usize,
    pub rejections: usize,
    #[serde(with = "serde_rational")]
    pub rate: Rational,
    /// 95% normal-approximation half-width `1.96 √(p(1-p)/N)`.
    pub half_width: f64,
    #[serde(with = "serde_rational")]
    pub delta: Rational,
    pub seed: u64,
}

/// Rejection frequency over `trials` runs; run `i` uses stream `i` of the seed.
pub fn estimate_rejection_rate(g: &Graph, h: &Pattern, delta: Rational, trials: usize, seed: u64) -> Result<RateEstimate, TesterError> {
    if trials == 0 {
        return Err(TesterError::NoTrials);
    }
    let budget = sample_budget(&delta)?;
    let rejections = (0..trials as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            run(g, h, budget, &mut rng).0.is_some()
        })
        .count();
    let rate = Rational::new(rejections as i128, trials as i128);
    let p = to_f64(&rate);
    Ok(RateEstimate { trials, rejections, rate, half_width: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(), delta, seed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticRate {
    /// Labeled copies over `n^h`: the chance one tuple hits.
    pub hit_probability: String,
    pub budget: usize,
    /// `1 - (1 - hit)^budget`.
    pub rejection_probability: f64,
}

pub fn analytic_rejection(g: &Graph, h: &Pattern, delta: &Rational) -> Result<AnalyticRate, TesterError> {
    let budget = sample_budget(delta)?;
    let labeled = count_copies(g, h).labeled as i128;
    let tuples = (g.n() as i128).pow(h.h() as u32).max(1);
    let hit = Rational::new(labeled, tuples);
    let miss = 1.0 - to_f64(&hit);
    Ok(AnalyticRate { hit_probability: format_rational(&hit), budget, rejection_probability: 1.0 - miss.powi(budget as i32) })
}
