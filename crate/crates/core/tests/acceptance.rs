//! Acceptance suite: ten property campaigns, one PASS/FAIL line each.
//! Runs as a plain binary so the lines show up under `cargo test`.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use removal_lab::constants::{theoretical_constants, Epsilon};
use removal_lab::driver::{run_removal_process, DriverConfig};
use removal_lab::entropy::{
    defect_lower_bound, f_entropy, jensen_split_lower_bound, mean_entropy_density, mean_square_density, shattering_gain_bound,
    WeightedValues,
};
use removal_lab::instances::{gen_behrend_set, gen_blowup, gen_planted, gen_random, gen_ruzsa_szemeredi, BehrendStrategy, EXHAUSTIVE_MAX};
use removal_lab::pattern::{count_copies, packing, removal_distance_exact};
use removal_lab::regularity::{densify_step, extract_superregular, meets_growth, superregular_witness, SearchConfig, Verdict};
use removal_lab::shattering::{
    shatter_pair, verify_certificate, verify_shattering, Constants, OverrideConstants, ShatterConfig, ShatterOutcome,
};
use removal_lab::tester::{analytic_rejection, estimate_rejection_rate};
use removal_lab::{density, is_refinement, Graph, KUniformHypergraph, PackingMode, Partition, Pattern, Rational};

struct Outcome {
    pass: bool,
    detail: String,
}

fn ratio(p: i128, q: i128) -> Rational {
    Rational::new(p, q)
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn entropy(x: f64) -> f64 {
    f_entropy(x).unwrap()
}

// 1 -------------------------------------------------------------------------

fn random_weighted(rng: &mut ChaCha8Rng) -> WeightedValues {
    let s = rng.gen_range(2..=8);
    let raw: Vec<i128> = (0..s).map(|_| rng.gen_range(0..=30)).collect();
    let raw = if raw.iter().all(|&w| w == 0) { vec![1; s] } else { raw };
    let total: i128 = raw.iter().sum();
    let weights = raw.iter().map(|&w| ratio(w, total)).collect();
    let values = (0..s).map(|_| ratio(rng.gen_range(0..=400), 100)).collect();
    WeightedValues::new(weights, values).unwrap()
}

fn defect_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut jensen, mut defect, mut violations) = (0, 0, 0);
    while jensen < 10_000 {
        let w = random_weighted(&mut rng);
        let index: Vec<usize> = (0..w.len()).filter(|_| rng.gen_bool(0.5)).collect();
        match jensen_split_lower_bound(&w, &index, entropy) {
            Ok(r) => {
                jensen += 1;
                violations += usize::from(!r.holds);
            }
            Err(_) => continue,
        }
    }
    let betas = [ratio(1, 20), ratio(1, 10), ratio(3, 10)];
    while defect < 10_000 {
        let w = random_weighted(&mut rng);
        let beta = betas[defect % 3];
        let limit = beta * w.mean();
        let index: Vec<usize> = (0..w.len()).filter(|&i| w.values()[i] <= limit && rng.gen_bool(0.8)).collect();
        let r = defect_lower_bound(&w, &beta, &index).unwrap();
        defect += 1;
        violations += usize::from(!r.holds);
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: violations == 0 && elapsed < Duration::from_secs(10),
        detail: format!("{jensen} split + {defect} defect instances, {violations} violations, {}", secs(elapsed)),
    }
}

// 2 -------------------------------------------------------------------------

fn random_assignment(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let raw: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let mut ids = raw.clone();
    ids.sort_unstable();
    ids.dedup();
    raw.iter().map(|x| ids.binary_search(x).unwrap()).collect()
}

fn partition_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for i in 0..1000u64 {
        let n = rng.gen_range(1..=60);
        let g = gen_random(n, ratio(rng.gen_range(0..=10), 10), i);
        let k = rng.gen_range(1..=n);
        let p = Partition::from_assignment(random_assignment(&mut rng, n, k)).unwrap();
        let d = 2.0 * g.edge_count() as f64 / (n * n) as f64;
        let e = mean_entropy_density(&g, &p).unwrap();
        if !(e >= entropy(d) - 1e-9 && e <= 1e-9) {
            violations += 1;
        }
    }
    for i in 0..1000u64 {
        let n = rng.gen_range(2..=60);
        let g = gen_random(n, ratio(rng.gen_range(1..=9), 10), 10_000 + i);
        let k = rng.gen_range(1..=8);
        let coarse = random_assignment(&mut rng, n, k);
        let split = rng.gen_range(1..=6);
        let fine: Vec<usize> = coarse.iter().map(|&c| c * split + rng.gen_range(0..split)).collect();
        let p = Partition::from_assignment(coarse).unwrap();
        let ids = {
            let mut f = fine.clone();
            f.sort_unstable();
            f.dedup();
            f
        };
        let q = Partition::from_assignment(fine.iter().map(|x| ids.binary_search(x).unwrap()).collect()).unwrap();
        assert!(is_refinement(&p, &q).unwrap());
        let ok = mean_entropy_density(&g, &q).unwrap() >= mean_entropy_density(&g, &p).unwrap() - 1e-9
            && mean_square_density(&g, &q).unwrap() >= mean_square_density(&g, &p).unwrap() - 1e-9;
        violations += usize::from(!ok);
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: violations == 0 && elapsed < Duration::from_secs(30),
        detail: format!("1000 range checks + 1000 refinement pairs, {violations} violations, {}", secs(elapsed)),
    }
}

// 3 -------------------------------------------------------------------------

/// Dense random k-partite hypergraph with an empty sub-box of side `⌈αn⌉`.
fn planted_sparse_box(rng: &mut ChaCha8Rng, k: usize, n: usize, hole: usize) -> (KUniformHypergraph, Vec<Vec<usize>>) {
    let blocks: Vec<Vec<usize>> = (0..k).map(|i| (i * n..(i + 1) * n).collect()).collect();
    let holes: Vec<HashSet<usize>> = blocks
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.shuffle(rng);
            b[..hole].iter().copied().collect()
        })
        .collect();
    let mut edges = Vec::new();
    let mut tuple = vec![0; k];
    let total = n.pow(k as u32);
    for code in 0..total {
        let mut c = code;
        for (i, t) in tuple.iter_mut().enumerate() {
            *t = blocks[i][c % n];
            c /= n;
        }
        let in_hole = tuple.iter().zip(&holes).all(|(v, h)| h.contains(v));
        if !in_hole && rng.gen_bool(0.8) {
            edges.push(tuple.clone());
        }
    }
    (KUniformHypergraph::new(blocks.clone(), edges).unwrap(), blocks)
}

fn densification_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut instances, mut failures) = (0, Vec::new());
    let cfg = SearchConfig::exhaustive();
    while instances < 200 {
        let k = if instances % 2 == 0 { 2 } else { 3 };
        let n = rng.gen_range(5..=if k == 2 { 12 } else { 9 });
        let alpha = [ratio(1, 5), ratio(1, 6), ratio(2, 9)][rng.gen_range(0..3)];
        let beta = ratio(1, 5);
        let hole = removal_lab::rational::ceil_mul(&alpha, n);
        let (gamma, blocks) = planted_sparse_box(&mut rng, k, n, hole);
        let report = superregular_witness(&gamma, &blocks, alpha, beta, &cfg).unwrap();
        if report.verdict != Verdict::Witness {
            continue;
        }
        instances += 1;
        let d_old = removal_lab::hyperdensity(&gamma, &blocks).unwrap();
        match densify_step(&gamma, &blocks, alpha, beta, report.witness.as_ref().unwrap(), instances as u64) {
            Ok((_, d_new)) if meets_growth(d_new, d_old, &alpha, k) => {}
            Ok((_, d_new)) => failures.push(format!("growth {d_old} -> {d_new}")),
            Err(e) => failures.push(e.to_string()),
        }
        match extract_superregular(&gamma, &blocks, alpha, beta, &cfg) {
            Ok(t) if t.round_count() <= t.round_bound && t.certified => {}
            Ok(t) => failures.push(format!("{} rounds, bound {}", t.round_count(), t.round_bound)),
            Err(e) => failures.push(e.to_string()),
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!("{instances} instances, {} failures {:?}, {}", failures.len(), failures.first(), secs(start.elapsed())),
    }
}

// 4 and 5 -------------------------------------------------------------------

struct ShatterStats {
    runs: usize,
    shattered: usize,
    certificates: usize,
    unsound: Vec<String>,
    gain_checks: usize,
    gain_violations: usize,
    elapsed: Duration,
}

fn shatter_instance(rng: &mut ChaCha8Rng, run: u64) -> (Graph, Vec<Vec<usize>>) {
    let m = rng.gen_range(2..=40);
    let parts: Vec<Vec<usize>> = (0..3).map(|i| (i * m..(i + 1) * m).collect()).collect();
    let g = match run % 4 {
        0 => gen_random(3 * m, ratio(rng.gen_range(1..=12), 24), run),
        1 => {
            let base = gen_random(3 * m, ratio(1, 30), run);
            gen_planted(&base, &Pattern::triangle(), rng.gen_range(0..=m), run).unwrap().0
        }
        2 => {
            // Two dense pairs, third pair sparse.
            let dense = gen_blowup(&Pattern::path(3), &[m, m, m]);
            let noise = gen_random(3 * m, ratio(1, 20), run);
            Graph::from_edges_dedup(3 * m, dense.edges().iter().chain(noise.edges()).copied()).unwrap()
        }
        _ => {
            let p = ratio(rng.gen_range(1..=4), 5);
            let edges: Vec<(usize, usize)> = gen_random(3 * m, p, run).edges().iter().copied().filter(|&(u, v)| u / m != v / m).collect();
            Graph::from_edges(3 * m, edges).unwrap()
        }
    };
    (g, parts)
}

fn shattering_suite() -> ShatterStats {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tri = Pattern::triangle();
    let mut stats = ShatterStats {
        runs: 0,
        shattered: 0,
        certificates: 0,
        unsound: Vec::new(),
        gain_checks: 0,
        gain_violations: 0,
        elapsed: Duration::ZERO,
    };
    let alphas = [ratio(1, 10), ratio(1, 20), ratio(1, 30), ratio(1, 40)];
    let densities = [ratio(1, 100), ratio(1, 20), ratio(1, 8), ratio(1, 4)];
    for run in 0..500u64 {
        let (g, parts) = shatter_instance(&mut rng, run);
        let alpha = alphas[rng.gen_range(0..alphas.len())];
        let d = densities[rng.gen_range(0..densities.len())];
        let constants = Constants::Override(OverrideConstants { copy_density: vec![d], beta: None, gamma_floor: None });
        let search = SearchConfig { samples: 300, descent_passes: 2, seed: run, ..SearchConfig::default() };
        let cfg = ShatterConfig { constants, search };
        stats.runs += 1;
        match shatter_pair(&g, &tri, &parts, alpha, &cfg) {
            Ok(ShatterOutcome::Shattered(s)) => {
                stats.shattered += 1;
                let (a, b) = (&parts[s.edge.0], &parts[s.edge.1]);
                let check = verify_shattering(&g, a, b, &s.a_parts, &s.b_parts, alpha).unwrap();
                if !tri.adjacent(s.edge.0, s.edge.1) || check.c_achieved != s.c_achieved || check.t != s.t {
                    stats.unsound.push(format!("run {run}: shattering does not verify"));
                }
                if density(&g, a, b).unwrap().ge(&(alpha * Rational::from_integer(10))) {
                    let r = shattering_gain_bound(&g, a, b, &s.a_parts, &s.b_parts, &alpha, &s.c_achieved).unwrap();
                    stats.gain_checks += 1;
                    stats.gain_violations += usize::from(!r.holds);
                }
            }
            Ok(ShatterOutcome::ManyCopies(cert)) => {
                stats.certificates += 1;
                if !verify_certificate(&g, &tri, &parts, &cert) {
                    stats.unsound.push(format!("run {run}: certificate does not verify"));
                }
            }
            Err(e) => stats.unsound.push(format!("run {run}: {e}")),
        }
    }
    stats.elapsed = start.elapsed();
    stats
}

// 6 -------------------------------------------------------------------------

fn driver_suite() -> Outcome {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut summary = Vec::new();
    for m in [10usize, 20, 30] {
        let strategy = if m <= EXHAUSTIVE_MAX { BehrendStrategy::Exhaustive } else { BehrendStrategy::Sphere };
        let set = gen_behrend_set(m, strategy).unwrap();
        let rs = gen_ruzsa_szemeredi(m, &set).unwrap();
        let mut cfg = DriverConfig::new(Constants::uniform(ratio(1, 10)), m as u64);
        cfg.part_floor = Some(m);
        let trace = match run_removal_process(&rs.graph, &Pattern::triangle(), ratio(1, 1000), &cfg) {
            Ok(t) => t,
            Err(e) => {
                problems.push(format!("m = {m}: {e}"));
                continue;
            }
        };
        if trace.steps.is_empty() {
            problems.push(format!("m = {m}: no completed step ({})", trace.status.name()));
        }
        for w in trace.partitions.windows(2) {
            if !is_refinement(&w[0], &w[1]).unwrap() {
                problems.push(format!("m = {m}: refinement chain broken"));
            }
        }
        for s in &trace.steps {
            if !s.gain_verified {
                problems.push(format!("m = {m} step {}: gain {} < claimed {}", s.index, s.gain, s.claimed_gain));
            }
            if !s.accounting.within_bound {
                problems.push(format!("m = {m} step {}: deleted {} > {}", s.index, s.accounting.total, s.accounting.bound));
            }
        }
        summary.push(format!("m={m}: {} step(s), {}", trace.steps.len(), trace.status.name()));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: problems.is_empty() && elapsed < Duration::from_secs(300),
        detail: format!("{}; {} problems {:?}, {}", summary.join(", "), problems.len(), problems.first(), secs(elapsed)),
    }
}

// 7 -------------------------------------------------------------------------

fn sandwich_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = Vec::new();
    for i in 0..200u64 {
        let n = rng.gen_range(3..=10);
        let g = gen_random(n, ratio(rng.gen_range(1..=3), 6), 700 + i);
        let h = if i % 2 == 0 { Pattern::triangle() } else { Pattern::cycle(4) };
        let nu = packing(&g, &h, PackingMode::Exact { budget: 100_000 }).unwrap().len();
        let dist = removal_distance_exact(&g, &h, 64).unwrap().distance;
        if !(nu <= dist && dist <= h.edge_count() * nu) {
            violations.push(format!("graph {i}: packing {nu}, distance {dist}"));
        }
    }
    Outcome {
        pass: violations.is_empty(),
        detail: format!("200 graphs, {} violations {:?}, {}", violations.len(), violations.first(), secs(start.elapsed())),
    }
}

// 8 -------------------------------------------------------------------------

fn tester_suite() -> Outcome {
    let start = Instant::now();
    let tri = Pattern::triangle();
    let k3 = Graph::complete(3);
    let analytic = analytic_rejection(&k3, &tri, &ratio(1, 2)).unwrap().rejection_probability;
    let est = estimate_rejection_rate(&k3, &tri, ratio(1, 2), 100_000, 8).unwrap();
    let rate = removal_lab::rational::to_f64(&est.rate);
    let close = (rate - analytic).abs() <= 0.01;
    let mut rejections = 0;
    for i in 0..100u64 {
        let n = 4 + (i as usize % 20);
        let left = n / 2;
        // Random bipartite graphs are triangle-free.
        let edges: Vec<(usize, usize)> =
            gen_random(n, ratio(1, 2), 800 + i).edges().iter().copied().filter(|&(u, v)| (u < left) != (v < left)).collect();
        let g = Graph::from_edges(n, edges).unwrap();
        rejections += estimate_rejection_rate(&g, &tri, ratio(1, 4), 1000, i).unwrap().rejections;
    }
    Outcome {
        pass: close && rejections == 0,
        detail: format!(
            "K3 rate {rate:.4} vs {analytic:.4}; {rejections} rejections on 100 triangle-free graphs, {}",
            secs(start.elapsed())
        ),
    }
}

// 9 -------------------------------------------------------------------------

fn constants_suite() -> Outcome {
    let d2 = theoretical_constants(2, &Epsilon::parse("1/10").unwrap(), ratio(1, 8)).unwrap();
    let tower = theoretical_constants(3, &Epsilon::parse("e^-1").unwrap(), ratio(1, 10)).unwrap();
    let log_d = d2.copy_density.log2_exact().map(|r| r.to_string());
    let height = tower.tower_height.exact.clone();
    Outcome {
        pass: log_d.as_deref() == Some("-65536") && height.as_deref() == Some("405"),
        detail: format!("log2 d_2 = {log_d:?}, tower height = {height:?}"),
    }
}

// 10 ------------------------------------------------------------------------

fn progression_free_oracle(set: &[u64]) -> bool {
    for &a in set {
        for &b in set {
            for &c in set {
                if a < b && b < c && b - a == c - b {
                    return false;
                }
            }
        }
    }
    true
}

fn instances_suite() -> Outcome {
    let start = Instant::now();
    let tri = Pattern::triangle();
    let mut problems = Vec::new();
    for m in 1..=40usize {
        let mut strategies = vec![BehrendStrategy::Sphere];
        if m <= EXHAUSTIVE_MAX {
            strategies.push(BehrendStrategy::Exhaustive);
        }
        for strategy in strategies {
            let set = gen_behrend_set(m, strategy).unwrap();
            if !progression_free_oracle(&set.elements) {
                problems.push(format!("m = {m}: {strategy:?} set has a progression"));
            }
            let rs = gen_ruzsa_szemeredi(m, &set).unwrap();
            let triangles = count_copies(&rs.graph, &tri).unlabeled;
            if triangles != (m * set.len()) as u64 {
                problems.push(format!("m = {m}: {triangles} triangles, expected {}", m * set.len()));
            }
            for &(u, v) in rs.graph.edges() {
                let common = rs.graph.neighbors(u).intersection_count(rs.graph.neighbors(v));
                if common != 1 {
                    problems.push(format!("m = {m}: edge ({u}, {v}) lies in {common} triangles"));
                    break;
                }
            }
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: format!("m = 1..40, {} problems {:?}, {}", problems.len(), problems.first(), secs(start.elapsed())),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |i: usize, name: &'static str, o: Outcome| {
        println!("criterion {i:>2} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((i, name, o));
    };
    report(1, "defect inequalities", defect_suite());
    report(2, "partition functionals", partition_suite());
    report(3, "densification", densification_suite());
    let s = shattering_suite();
    report(
        4,
        "shattering soundness",
        Outcome {
            pass: s.unsound.is_empty(),
            detail: format!(
                "{} runs: {} shattered, {} certificates, {} unsound {:?}, {}",
                s.runs,
                s.shattered,
                s.certificates,
                s.unsound.len(),
                s.unsound.first(),
                secs(s.elapsed)
            ),
        },
    );
    report(
        5,
        "gain inequality",
        Outcome {
            pass: s.gain_violations == 0,
            detail: format!("{} pairs with d >= 10 alpha, {} violations", s.gain_checks, s.gain_violations),
        },
    );
    report(6, "driver traces", driver_suite());
    report(7, "removal sandwich", sandwich_suite());
    report(8, "tester", tester_suite());
    report(9, "constants", constants_suite());
    report(10, "instances", instances_suite());
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
