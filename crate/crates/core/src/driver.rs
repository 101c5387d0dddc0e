//! The entropy-increment removal process.
//!
//! Starting from a maximal packing `G'` of edge-disjoint pattern copies, the
//! vertex set is cut into equal parts and repeatedly refined: parts carrying
//! packing copies are shattered pairwise, each part takes the common
//! refinement of its shatterings, and the result is re-equalized. Every step
//! measures the mean entropy density and checks it against the gain the
//! shatterings promise.

use std::collections::{BTreeMap, BTreeSet};

use num::Signed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{mean_entropy_density, part_pair_counts, shattering_gain_bound, EntropyError, GainCheck, SLACK};
use crate::graph::Graph;
use crate::partition::{is_refinement, Partition, PartitionError};
use crate::pattern::{contains_copy, packing, packing_union, Packing, PackingMode, Pattern, PatternError};
use crate::rational::{ceil_mul, floor_mul, format_rational, serde_rational, to_f64, Density, Rational};
use crate::regularity::{mix, SearchConfig};
use crate::shattering::{shatter_pair, Constants, CopyCertificate, ShatterConfig, ShatterError, ShatterOutcome, Shattering};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Shatter(#[from] ShatterError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

// ---------------------------------------------------------------------------
// Equalizing refinement
// ---------------------------------------------------------------------------

/// Refines `q` so that every part has at most `r` vertices and at most `υn`
/// vertices sit in parts smaller than `r`. Each part is cut into consecutive
/// chunks of `r = ⌊υn/k⌋`; all singletons when `k > υn`.
pub fn equalize_refine(q: &Partition, upsilon: &Rational) -> Result<(Partition, usize), DriverError> {
    if !upsilon.is_positive() {
        return Err(DriverError::Precondition(format!("upsilon = {upsilon} must be positive")));
    }
    let (n, k) = (q.n(), q.len());
    if k == 0 {
        return Ok((q.clone(), 1));
    }
    if Rational::from_integer(k as i128) > upsilon * Rational::from_integer(n as i128) {
        return Ok((Partition::singletons(n), 1));
    }
    let r = floor_mul(upsilon, n) / k;
    let parts = q.parts().iter().flat_map(|p| p.chunks(r).map(<[usize]>::to_vec)).collect();
    Ok((Partition::from_parts(n, parts)?, r))
}

// ---------------------------------------------------------------------------
// One refinement step
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepConfig {
    pub constants: Constants,
    pub search: SearchConfig,
    /// Shattering density; defaults to `ε₀/20`.
    #[serde(with = "crate::rational::serde_rational_opt", default)]
    pub alpha: Option<Rational>,
    /// Equalization slack; defaults to `ε₀/8`.
    #[serde(with = "crate::rational::serde_rational_opt", default)]
    pub upsilon: Option<Rational>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeletionAccounting {
    /// Edges inside a part.
    pub inside: usize,
    /// Edges meeting a part whose size is not `n₀`.
    pub off_size: usize,
    /// Edges between parts of density below `ε₀/2`.
    pub low_density: usize,
    pub total: usize,
    /// `ε₀n²/2`.
    #[serde(with = "serde_rational")]
    pub bound: Rational,
    pub within_bound: bool,
    pub off_size_vertices: usize,
    /// `off_size_vertices ≤ ε₀n/8`.
    pub off_size_within_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShatteredPair {
    /// Part indices `(a, b)`, `a < b`, in the partition being refined.
    pub parts: (usize, usize),
    /// The pattern edge the shattering came from.
    pub pattern_edge: (usize, usize),
    #[serde(with = "serde_rational")]
    pub c_achieved: Rational,
    pub t: usize,
    pub density: Density,
    /// Present when `d ≥ 10α`, where the gain inequality applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<GainCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    #[serde(with = "serde_rational")]
    pub alpha: Rational,
    #[serde(with = "serde_rational")]
    pub upsilon: Rational,
    pub n0: usize,
    pub parts_before: usize,
    /// Parts of the common refinement before equalizing.
    pub parts_common: usize,
    pub parts_after: usize,
    /// Part size `r` of the new partition.
    pub n0_after: usize,
    pub accounting: DeletionAccounting,
    pub surviving_copies: usize,
    pub tuples: usize,
    pub skipped_copies: usize,
    pub shattered: Vec<ShatteredPair>,
    pub entropy_before: f64,
    pub entropy_common: f64,
    pub entropy_after: f64,
    pub gain: f64,
    /// `Σ (c/2) e(P_a, P_b)/n²` over shattered pairs with `d ≥ 10α`.
    pub claimed_gain: f64,
    pub gain_verified: bool,
    /// `ε₀/(4h²)`.
    pub target_gain: f64,
    pub meets_target: bool,
    pub refinement_verified: bool,
    /// `log₂|common| ≤ log₂ T + T log₂ t_max` and `|P'| ≤ (2υ⁻¹+1)|common|`.
    pub growth_within_bound: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Refined { report: Box<StepReport>, partition: Partition },
    ManyCopies { index: usize, tuple: Vec<usize>, certificate: CopyCertificate },
}

/// A shattering with the two part lists it split.
type BestShattering = (Shattering, Vec<Vec<usize>>, Vec<Vec<usize>>);

fn eps0_of(g: &Graph, p: &Packing) -> Rational {
    Rational::new(p.len() as i128, (g.n() * g.n()).max(1) as i128)
}

/// Refines `p` once. `g`'s edges must be exactly the union of `pk`.
pub fn refinement_step(
    g: &Graph,
    h: &Pattern,
    p: &Partition,
    pk: &Packing,
    n0: usize,
    index: usize,
    cfg: &StepConfig,
) -> Result<StepOutcome, DriverError> {
    let n = g.n();
    if pk.is_empty() {
        return Err(DriverError::Precondition("empty packing: ε₀ = 0".into()));
    }
    pk.validate(g, h)?;
    if pk.len() * h.edge_count() != g.edge_count() {
        return Err(DriverError::Precondition("graph edges are not exactly the packing union".into()));
    }
    if p.n() != n {
        return Err(PartitionError::Mismatch(p.n(), n).into());
    }
    if n0 == 0 || p.max_part_size() > n0 {
        return Err(DriverError::Precondition(format!("parts must have at most n0 = {n0} vertices")));
    }
    let eps0 = eps0_of(g, pk);
    let alpha = cfg.alpha.unwrap_or(eps0 / Rational::from_integer(20));
    let upsilon = cfg.upsilon.unwrap_or(eps0 / Rational::from_integer(8));
    let n2 = Rational::from_integer((n * n) as i128);

    // Delete edges inside parts, at off-size parts and across sparse pairs.
    let counts = part_pair_counts(g, p)?;
    let full: Vec<bool> = p.parts().iter().map(|q| q.len() == n0).collect();
    let sparse = |a: usize, b: usize| Rational::from_integer(2 * counts[a][b] as i128) < eps0 * Rational::from_integer((n0 * n0) as i128);
    let (mut inside, mut off_size, mut low) = (0, 0, 0);
    let mut kept = Vec::new();
    for &(u, v) in g.edges() {
        let (a, b) = (p.part_of(u), p.part_of(v));
        if a == b {
            inside += 1;
        } else if !full[a] || !full[b] {
            off_size += 1;
        } else if sparse(a, b) {
            low += 1;
        } else {
            kept.push((u, v));
        }
    }
    let off_size_vertices: usize = p.parts().iter().filter(|q| q.len() != n0).map(Vec::len).sum();
    let bound = eps0 * n2 / Rational::from_integer(2);
    let total = inside + off_size + low;
    let accounting = DeletionAccounting {
        inside,
        off_size,
        low_density: low,
        total,
        bound,
        within_bound: Rational::from_integer(total as i128) <= bound,
        off_size_vertices,
        off_size_within_bound: Rational::from_integer(off_size_vertices as i128) <= eps0 * Rational::new(n as i128, 8),
    };
    let reduced = g.spanning_subgraph(kept);

    // Part tuples of the surviving packing copies.
    let mut surviving = 0;
    let mut skipped = 0;
    let mut tuples = BTreeSet::new();
    for c in &pk.copies {
        if !h.image_edges(c).iter().all(|&(u, v)| reduced.has_edge(u, v)) {
            continue;
        }
        surviving += 1;
        let tuple: Vec<usize> = c.iter().map(|&v| p.part_of(v)).collect();
        let distinct: BTreeSet<usize> = tuple.iter().copied().collect();
        if distinct.len() != tuple.len() || tuple.iter().any(|&a| !full[a]) {
            skipped += 1;
            continue;
        }
        tuples.insert(tuple);
    }
    let tuples: Vec<Vec<usize>> = tuples.into_iter().collect();
    let shatter_cfg = |i: usize| ShatterConfig { constants: cfg.constants.clone(), search: cfg.search.derive(mix(index as u64, i as u64)) };
    let outcomes: Vec<Result<ShatterOutcome, ShatterError>> = tuples
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let parts: Vec<Vec<usize>> = t.iter().map(|&a| p.part(a).to_vec()).collect();
            shatter_pair(g, h, &parts, alpha, &shatter_cfg(i))
        })
        .collect();

    // Best shattering per unordered part pair, in tuple order.
    let mut best: BTreeMap<(usize, usize), BestShattering> = BTreeMap::new();
    for (t, outcome) in tuples.iter().zip(outcomes) {
        match outcome? {
            ShatterOutcome::ManyCopies(certificate) => {
                return Ok(StepOutcome::ManyCopies { index, tuple: t.clone(), certificate });
            }
            ShatterOutcome::Shattered(s) => {
                let (a, b) = (t[s.edge.0], t[s.edge.1]);
                let (key, ap, bp) =
                    if a < b { ((a, b), s.a_parts.clone(), s.b_parts.clone()) } else { ((b, a), s.b_parts.clone(), s.a_parts.clone()) };
                if best.get(&key).is_none_or(|(prev, _, _)| s.c_achieved > prev.c_achieved) {
                    best.insert(key, (s, ap, bp));
                }
            }
        }
    }

    // Common refinement keyed by (pair id, block id).
    let mut block_of: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (lo_parts, hi_parts) in best.values().map(|(_, a, b)| (a, b)) {
        for side in [lo_parts, hi_parts] {
            for (blk, q) in side.iter().enumerate() {
                for &v in q {
                    block_of[v].push(blk as u32);
                }
            }
        }
    }
    let mut common_parts = Vec::new();
    for part in p.parts() {
        let mut classes: BTreeMap<&[u32], Vec<usize>> = BTreeMap::new();
        for &v in part {
            classes.entry(&block_of[v]).or_default().push(v);
        }
        common_parts.extend(classes.into_values());
    }
    let common = Partition::from_parts(n, common_parts)?;
    let (refined, r) = equalize_refine(&common, &upsilon)?;

    let mut claimed = 0.0;
    let mut shattered = Vec::with_capacity(best.len());
    let ten_alpha = alpha * Rational::from_integer(10);
    for (&(a, b), (s, ap, bp)) in &best {
        let density = Density::new(counts[a][b], (p.part(a).len() * p.part(b).len()) as u64);
        let gain = if density.ge(&ten_alpha) {
            let check = shattering_gain_bound(g, p.part(a), p.part(b), ap, bp, &alpha, &s.c_achieved)?;
            claimed += check.gain;
            Some(check)
        } else {
            None
        };
        shattered.push(ShatteredPair { parts: (a, b), pattern_edge: s.edge, c_achieved: s.c_achieved, t: s.t, density, gain });
    }

    let entropy_before = mean_entropy_density(g, p)?;
    let entropy_common = mean_entropy_density(g, &common)?;
    let entropy_after = mean_entropy_density(g, &refined)?;
    let gain = entropy_after - entropy_before;
    let hh = (h.h() * h.h()) as f64;
    let target = to_f64(&eps0) / (4.0 * hh);
    let t_max = shattered.iter().map(|s| s.t).max().unwrap_or(1).max(1) as f64;
    let parts_before = p.len() as f64;
    let growth_ok = (common.len() as f64).log2() <= parts_before.log2() + parts_before * t_max.log2() + 1e-9
        && Rational::from_integer(refined.len() as i128)
            <= (Rational::from_integer(2) / upsilon + Rational::from_integer(1)) * Rational::from_integer(common.len() as i128);
    let report = StepReport {
        index,
        alpha,
        upsilon,
        n0,
        parts_before: p.len(),
        parts_common: common.len(),
        parts_after: refined.len(),
        n0_after: r,
        accounting,
        surviving_copies: surviving,
        tuples: tuples.len(),
        skipped_copies: skipped,
        shattered,
        entropy_before,
        entropy_common,
        entropy_after,
        gain,
        claimed_gain: claimed,
        gain_verified: gain >= claimed - SLACK,
        target_gain: target,
        meets_target: gain >= target - SLACK,
        refinement_verified: is_refinement(p, &common)? && is_refinement(&common, &refined)? && is_refinement(p, &refined)?,
        growth_within_bound: growth_ok,
    };
    Ok(StepOutcome::Refined { report: Box::new(report), partition: refined })
}

// ---------------------------------------------------------------------------
// The process
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PackingChoice {
    /// Best of `restarts` seeded greedy packings.
    Greedy {
        restarts: usize,
    },
    Exact {
        budget: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub step: StepConfig,
    pub packing: PackingChoice,
    /// Lower bound on the initial part size `n₀`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_floor: Option<usize>,
    pub max_iters: usize,
    pub seed: u64,
}

impl DriverConfig {
    pub fn new(constants: Constants, seed: u64) -> Self {
        DriverConfig {
            step: StepConfig { constants, search: SearchConfig { seed, ..SearchConfig::default() }, alpha: None, upsilon: None },
            packing: PackingChoice::Greedy { restarts: 8 },
            part_floor: None,
            max_iters: 16,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum RunStatus {
    /// `e(G') < εn²`; deleting `G'` leaves the graph pattern-free.
    Removable {
        certificate: Vec<(usize, usize)>,
        verified: bool,
    },
    ManyCopies {
        step: usize,
        tuple: Vec<usize>,
        certificate: CopyCertificate,
    },
    /// The next step's guaranteed gain would push the entropy above zero.
    EntropyCeiling {
        entropy: f64,
        target_gain: f64,
    },
    IterationBudget,
    /// A step left the part count unchanged.
    Stalled {
        step: usize,
    },
    StepPrecondition {
        step: usize,
        message: String,
    },
    ScaleInfeasible {
        message: String,
    },
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Removable { .. } => "removable",
            RunStatus::ManyCopies { .. } => "many-copies",
            RunStatus::EntropyCeiling { .. } => "entropy-ceiling",
            RunStatus::IterationBudget => "iteration-budget",
            RunStatus::Stalled { .. } => "stalled",
            RunStatus::StepPrecondition { .. } => "step-precondition",
            RunStatus::ScaleInfeasible { .. } => "scale-infeasible",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitRecord {
    pub n: usize,
    pub edges: usize,
    pub epsilon: String,
    pub packing_size: usize,
    /// `e(G')`.
    pub packed_edges: usize,
    pub eps0: String,
    pub n0: usize,
    pub parts: usize,
    pub entropy: f64,
    /// `d ln d` with `d = 2e(G')/n²`.
    pub entropy_floor: f64,
    pub assignment: Vec<usize>,
}

/// One line of a JSON-lines trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "record")]
pub enum TraceRecord {
    Init(InitRecord),
    Step {
        #[serde(flatten)]
        report: Box<StepReport>,
        assignment: Vec<usize>,
    },
    End(RunStatus),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementTrace {
    pub init: Option<InitRecord>,
    pub steps: Vec<StepReport>,
    /// `partitions[0]` is the initial partition; one more per completed step.
    pub partitions: Vec<Partition>,
    pub status: RunStatus,
}

impl RefinementTrace {
    pub fn records(&self) -> Vec<TraceRecord> {
        let mut out = Vec::with_capacity(self.steps.len() + 2);
        if let Some(init) = &self.init {
            out.push(TraceRecord::Init(init.clone()));
        }
        for (s, p) in self.steps.iter().zip(self.partitions.iter().skip(1)) {
            out.push(TraceRecord::Step { report: Box::new(s.clone()), assignment: p.assignment().to_vec() });
        }
        out.push(TraceRecord::End(self.status.clone()));
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.records().iter().map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n").collect()
    }
}

fn best_packing(g: &Graph, h: &Pattern, cfg: &DriverConfig) -> Result<Packing, PatternError> {
    match cfg.packing {
        PackingChoice::Exact { budget } => packing(g, h, PackingMode::Exact { budget }),
        PackingChoice::Greedy { restarts } => {
            let runs: Vec<Packing> = (0..restarts.max(1) as u64)
                .into_par_iter()
                .map(|r| packing(g, h, PackingMode::Greedy { seed: mix(cfg.seed, r) }))
                .collect::<Result<_, _>>()?;
            // max_by_key keeps the last maximum; reverse so the lowest restart wins ties.
            Ok(runs.into_iter().rev().max_by_key(Packing::len).unwrap())
        }
    }
}

/// Runs the removal process on `g` for pattern `h` and removal parameter `ε`.
pub fn run_removal_process(g: &Graph, h: &Pattern, eps: Rational, cfg: &DriverConfig) -> Result<RefinementTrace, DriverError> {
    if !eps.is_positive() {
        return Err(DriverError::Precondition(format!("epsilon = {eps} must be positive")));
    }
    let n = g.n();
    let pk = best_packing(g, h, cfg)?;
    let union = packing_union(g, h, &pk)?;
    let n2 = Rational::from_integer((n * n) as i128);
    if Rational::from_integer(union.edge_count() as i128) < eps * n2 {
        let certificate = union.edges().to_vec();
        let verified = !contains_copy(&g.without_edges(&certificate), h);
        return Ok(RefinementTrace {
            init: None,
            steps: Vec::new(),
            partitions: Vec::new(),
            status: RunStatus::Removable { certificate, verified },
        });
    }

    let eps0 = eps0_of(g, &pk);
    let mut n0 = ceil_mul(&(eps0 / Rational::from_integer(8)), n).max(cfg.part_floor.unwrap_or(1)).max(1);
    let mut part = Partition::chunks(n, n0);
    let d = 2.0 * union.edge_count() as f64 / (n as f64 * n as f64);
    let entropy = mean_entropy_density(&union, &part)?;
    let init = InitRecord {
        n,
        edges: g.edge_count(),
        epsilon: format_rational(&eps),
        packing_size: pk.len(),
        packed_edges: union.edge_count(),
        eps0: format_rational(&eps0),
        n0,
        parts: part.len(),
        entropy,
        entropy_floor: if d > 0.0 { d * d.ln() } else { 0.0 },
        assignment: part.assignment().to_vec(),
    };
    let target = to_f64(&eps0) / (4.0 * (h.h() * h.h()) as f64);
    let mut trace =
        RefinementTrace { init: Some(init), steps: Vec::new(), partitions: vec![part.clone()], status: RunStatus::IterationBudget };
    let mut entropy = entropy;
    for step in 0..cfg.max_iters {
        if entropy + target > SLACK {
            trace.status = RunStatus::EntropyCeiling { entropy, target_gain: target };
            return Ok(trace);
        }
        let outcome = match refinement_step(&union, h, &part, &pk, n0, step, &cfg.step) {
            Ok(o) => o,
            Err(DriverError::Shatter(ShatterError::ScaleInfeasible(message))) => {
                trace.status = RunStatus::ScaleInfeasible { message };
                return Ok(trace);
            }
            Err(e) => {
                trace.status = RunStatus::StepPrecondition { step, message: e.to_string() };
                return Ok(trace);
            }
        };
        match outcome {
            StepOutcome::ManyCopies { index, tuple, certificate } => {
                trace.status = RunStatus::ManyCopies { step: index, tuple, certificate };
                return Ok(trace);
            }
            StepOutcome::Refined { report, partition } => {
                let stalled = partition.len() == part.len();
                entropy = report.entropy_after;
                n0 = report.n0_after;
                trace.steps.push(*report);
                trace.partitions.push(partition.clone());
                part = partition;
                if stalled {
                    trace.status = RunStatus::Stalled { step };
                    return Ok(trace);
                }
            }
        }
    }
    Ok(trace)
}

/// `(parts, entropy)` never decreases along a trace and every partition refines the last.
pub fn check_trace(trace: &RefinementTrace) -> Result<bool, DriverError> {
    for w in trace.partitions.windows(2) {
        if !is_refinement(&w[0], &w[1])? {
            return Ok(false);
        }
    }
    Ok(trace.steps.iter().all(|s| s.gain >= -SLACK && s.gain_verified && s.refinement_verified))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_behrend_set, gen_ruzsa_szemeredi, BehrendStrategy};
    use crate::pattern::count_copies;
    use crate::rational::ratio;
    use num::Zero;

    fn sizes(p: &Partition) -> Vec<usize> {
        p.parts().iter().map(Vec::len).collect()
    }

    #[test]
    fn equalize_examples() {
        let q = Partition::from_parts(10, vec![(0..7).collect(), (7..10).collect()]).unwrap();
        let (p, r) = equalize_refine(&q, &ratio(1, 2)).unwrap();
        assert_eq!(r, 2);
        assert_eq!(sizes(&p), vec![2, 2, 2, 1, 2, 1]);
        let below: usize = p.parts().iter().filter(|x| x.len() < r).map(Vec::len).sum();
        assert_eq!(below, 2);
        assert!(is_refinement(&q, &p).unwrap());

        let s = Partition::singletons(6);
        assert_eq!(equalize_refine(&s, &ratio(1, 2)).unwrap(), (s.clone(), 1));

        let (p, r) = equalize_refine(&Partition::chunks(10, 2), &ratio(1, 10)).unwrap();
        assert_eq!((p, r), (Partition::singletons(10), 1));
        assert!(equalize_refine(&s, &Rational::zero()).is_err());
    }

    #[test]
    fn equalize_bounds_hold() {
        for n in 1..40usize {
            for size in 1..=n {
                for (a, b) in [(1, 8), (1, 3), (1, 2), (1, 1)] {
                    let u = ratio(a, b);
                    let q = Partition::chunks(n, size);
                    let (p, r) = equalize_refine(&q, &u).unwrap();
                    assert!(is_refinement(&q, &p).unwrap());
                    assert!(p.max_part_size() <= r);
                    let below: usize = p.parts().iter().filter(|x| x.len() < r).map(Vec::len).sum();
                    assert!(Rational::from_integer(below as i128) <= u * Rational::from_integer(n as i128));
                    let bound = (Rational::from_integer(2) / u + Rational::from_integer(1)) * Rational::from_integer(q.len() as i128);
                    assert!(Rational::from_integer(p.len() as i128) <= bound);
                }
            }
        }
    }

    #[test]
    fn pattern_free_graph_is_removable() {
        let g = Graph::complete(5);
        let c5 = Pattern::cycle(5);
        let bip = Graph::from_edges(6, [(0, 3), (0, 4), (1, 5), (2, 3)]).unwrap();
        let trace =
            run_removal_process(&bip, &Pattern::triangle(), ratio(1, 10), &DriverConfig::new(Constants::uniform(ratio(1, 10)), 1)).unwrap();
        assert_eq!(trace.status, RunStatus::Removable { certificate: vec![], verified: true });
        let trace = run_removal_process(&g, &c5, ratio(1, 2), &DriverConfig::new(Constants::uniform(ratio(1, 10)), 1)).unwrap();
        let RunStatus::Removable { certificate, verified } = &trace.status else { panic!("{:?}", trace.status) };
        assert!(*verified);
        assert_eq!(count_copies(&g.without_edges(certificate), &c5).unlabeled, 0);
    }

    #[test]
    fn empty_packing_is_a_precondition_error() {
        let g = Graph::empty(6);
        let cfg = DriverConfig::new(Constants::uniform(ratio(1, 10)), 0);
        let err = refinement_step(&g, &Pattern::triangle(), &Partition::chunks(6, 2), &Packing { copies: vec![] }, 2, 0, &cfg.step);
        assert!(matches!(err, Err(DriverError::Precondition(_))));
    }

    #[test]
    fn complete_graph_has_many_copies() {
        let g = Graph::complete(12);
        let mut cfg = DriverConfig::new(Constants::uniform(ratio(1, 1000)), 3);
        cfg.part_floor = Some(3);
        let trace = run_removal_process(&g, &Pattern::triangle(), ratio(1, 100), &cfg).unwrap();
        let RunStatus::ManyCopies { step, certificate, .. } = &trace.status else { panic!("{:?}", trace.status) };
        assert_eq!(*step, 0);
        assert!(certificate.count > 0);
    }

    #[test]
    fn ruzsa_szemeredi_trace_verifies() {
        let m = 10;
        let s = gen_behrend_set(m, BehrendStrategy::Exhaustive).unwrap();
        let rs = gen_ruzsa_szemeredi(m, &s).unwrap();
        let mut cfg = DriverConfig::new(Constants::uniform(ratio(1, 10)), 7);
        cfg.part_floor = Some(m);
        let trace = run_removal_process(&rs.graph, &Pattern::triangle(), ratio(1, 1000), &cfg).unwrap();
        assert!(!trace.steps.is_empty(), "{:?}", trace.status);
        assert!(check_trace(&trace).unwrap());
        for s in &trace.steps {
            assert!(s.accounting.within_bound, "{:?}", s.accounting);
            assert!(s.gain_verified && s.growth_within_bound);
            for p in &s.shattered {
                if let Some(g) = &p.gain {
                    assert!(g.holds);
                }
            }
        }
        let records = trace.records();
        let text = trace.to_jsonl();
        assert_eq!(text.lines().count(), records.len());
        let back: Vec<TraceRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back.len(), records.len());
        // Same seed, same trace.
        let again = run_removal_process(&rs.graph, &Pattern::triangle(), ratio(1, 1000), &cfg).unwrap();
        assert_eq!(again.to_jsonl(), text);
    }
}
