mod error;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use removal_lab::constants::{theoretical_constants, Epsilon};
use removal_lab::driver::{run_removal_process, DriverConfig, PackingChoice, RunStatus};
use removal_lab::instances::{
    gen_behrend_set, gen_planted, gen_ruzsa_szemeredi, try_gen_blowup, try_gen_random, BehrendStrategy, Sidecar, EXHAUSTIVE_MAX,
};
use removal_lab::pattern::{count_copies, packing, removal_distance_exact};
use removal_lab::rational::parse_rational;
use removal_lab::regularity::{ModeChoice, SearchConfig};
use removal_lab::shattering::{shatter_pair, Constants, OverrideConstants, ShatterConfig};
use removal_lab::tester::{estimate_rejection_rate, test_h_freeness};
use removal_lab::{parse_edge_list, Graph, PackingMode, Pattern, Rational};

use error::CliError;

const THREADS_VAR: &str = "REMOVAL_LAB_THREADS";

#[derive(Parser)]
#[command(name = "removal-lab", version, about = "Graph removal experiments: generate, count, pack, shatter, refine, test")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance as an edge list, with a JSON sidecar next to --out.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Count labeled and unlabeled copies of the pattern.
    Count(GraphArgs),
    /// Edge-disjoint packing of pattern copies.
    Pack {
        #[command(flatten)]
        io: GraphArgs,
        /// `exhaustive` is branch and bound, `randomized` a seeded greedy packing.
        #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
        mode: Mode,
        /// Copy budget for the exhaustive packing.
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact removal distance with a deletion certificate.
    Remove {
        #[command(flatten)]
        io: GraphArgs,
        /// Refuse graphs with more edges than this.
        #[arg(long, default_value_t = 64)]
        budget: usize,
    },
    /// Shatter one pattern edge of an h-tuple of equal parts.
    Shatter {
        #[command(flatten)]
        io: GraphArgs,
        /// JSON file with the parts: an array of vertex arrays, or an object
        /// with a `parts` field. Defaults to the graph's sidecar.
        #[arg(long)]
        parts: Option<PathBuf>,
        #[arg(long, value_parser = rational)]
        alpha: Rational,
        #[command(flatten)]
        constants: ConstantArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Run the removal process and write its JSON-lines trace.
    Refine {
        #[command(flatten)]
        io: GraphArgs,
        #[arg(long, value_parser = rational, default_value = "1/100")]
        eps: Rational,
        /// Shattering density; defaults to eps0/20.
        #[arg(long, value_parser = rational)]
        alpha: Option<Rational>,
        /// Equalization slack; defaults to eps0/8.
        #[arg(long, value_parser = rational)]
        upsilon: Option<Rational>,
        /// Lower bound on the initial part size.
        #[arg(long)]
        part_floor: Option<usize>,
        #[arg(long, default_value_t = 16)]
        max_iters: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[command(flatten)]
        constants: ConstantArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// One-sided sampling test, or its rejection rate over many trials.
    Test {
        #[command(flatten)]
        io: GraphArgs,
        #[arg(long, value_parser = rational)]
        delta: Rational,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Symbolic constants for pattern size h.
    Constants {
        #[arg(long)]
        h: usize,
        /// `p/q`, a decimal, `e^-k` or `exp(-k)`.
        #[arg(long)]
        eps: String,
        #[arg(long, value_parser = rational)]
        alpha: Rational,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV summary of a refine trace.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// G(n, p).
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = rational)]
        p: Rational,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Blow-up of the pattern with the given part sizes.
    Blowup {
        #[arg(long, default_value = "triangle")]
        pattern: String,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// Progression-free subset of 1..=n, written as JSON.
    Behrend {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
    },
    /// Graph on 6m vertices where every edge lies in exactly one triangle.
    Rs {
        #[arg(long)]
        m: usize,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
    },
    /// Vertex-disjoint pattern copies planted into a base graph.
    Planted {
        /// Base graph; an edgeless graph on --n vertices when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "triangle")]
        pattern: String,
        #[arg(long)]
        copies: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct GraphArgs {
    /// Edge list: a header `n m`, then one `u v` line per edge.
    #[arg(long)]
    graph: PathBuf,
    /// `triangle`, `K<h>`, `C<h>`, `path_<h>`, or edges such as `0-1,1-2`.
    #[arg(long, default_value = "triangle")]
    pattern: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConstantArgs {
    /// Copy-density thresholds, one per level from 2 up; `theoretical` uses the tower values.
    #[arg(long, default_value = "1/10")]
    copy_density: String,
    #[arg(long, value_parser = rational)]
    beta: Option<Rational>,
}

#[derive(Args)]
struct SearchArgs {
    /// Superregularity search; exhaustive for small blocks and randomized otherwise when absent.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Sample budget for randomized search.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exhaustive,
    Randomized,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Sphere,
    Exhaustive,
}

fn rational(text: &str) -> Result<Rational, String> {
    parse_rational(text)
}

fn need_seed(seed: Option<u64>, what: &str) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::pre(format!("{what} is randomized and requires --seed")))
}

fn read_graph(path: &Path) -> Result<Graph, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::pre(format!("cannot read {}: {e}", path.display())))?;
    parse_edge_list(&text).map_err(|e| CliError::pre(format!("{}: {e}", path.display())))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::pre(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn strategy_for(n: usize, choice: Option<Strategy>) -> BehrendStrategy {
    match choice {
        Some(Strategy::Sphere) => BehrendStrategy::Sphere,
        Some(Strategy::Exhaustive) => BehrendStrategy::Exhaustive,
        None if n <= EXHAUSTIVE_MAX => BehrendStrategy::Exhaustive,
        None => BehrendStrategy::Sphere,
    }
}

fn constants_from(args: &ConstantArgs) -> Result<Constants, CliError> {
    if args.copy_density == "theoretical" {
        return Ok(Constants::Theoretical);
    }
    let copy_density = args
        .copy_density
        .split(',')
        .map(|t| parse_rational(t).map_err(|e| CliError::pre(format!("--copy-density: {e}"))))
        .collect::<Result<_, _>>()?;
    Ok(Constants::Override(OverrideConstants { copy_density, beta: args.beta, gamma_floor: None }))
}

fn search_from(args: &SearchArgs) -> Result<SearchConfig, CliError> {
    let mode = match args.mode {
        Some(Mode::Exhaustive) => ModeChoice::Exhaustive,
        Some(Mode::Randomized) => ModeChoice::Randomized,
        None => ModeChoice::Auto,
    };
    let mut cfg = SearchConfig { mode, ..SearchConfig::default() };
    if let Some(b) = args.budget {
        cfg.samples = b;
    }
    if !matches!(args.mode, Some(Mode::Exhaustive)) {
        cfg.seed = need_seed(args.seed, "randomized superregularity search")?;
    }
    Ok(cfg)
}

fn read_parts(path: &Path) -> Result<Vec<Vec<usize>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::pre(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let parts = match value {
        serde_json::Value::Object(mut map) => {
            map.remove("parts").ok_or_else(|| CliError::pre(format!("{} has no `parts` field", path.display())))?
        }
        other => other,
    };
    Ok(serde_json::from_value(parts)?)
}

fn generate(kind: GenKind, out: Option<&Path>) -> Result<(), CliError> {
    let mut sidecar = Sidecar::default();
    let graph = match kind {
        GenKind::Random { n, p, seed } => {
            let seed = need_seed(seed, "gen random")?;
            sidecar.generator = "random".into();
            sidecar.seed = Some(seed);
            try_gen_random(n, p, seed)?
        }
        GenKind::Blowup { pattern, sizes } => {
            let f = Pattern::parse(&pattern)?;
            sidecar.generator = format!("blowup {pattern}");
            sidecar.parts = Some(removal_lab::instances::blowup_parts(&sizes));
            try_gen_blowup(&f, &sizes)?
        }
        GenKind::Behrend { n, strategy } => {
            let set = gen_behrend_set(n, strategy_for(n, strategy))?;
            return write_out(out, &json(&set)?);
        }
        GenKind::Rs { m, strategy } => {
            let set = gen_behrend_set(m, strategy_for(m, strategy))?;
            let rs = gen_ruzsa_szemeredi(m, &set)?;
            sidecar.generator = "ruzsa-szemeredi".into();
            sidecar.parts = Some(rs.parts.to_vec());
            sidecar.behrend = Some(set);
            rs.graph
        }
        GenKind::Planted { graph, n, pattern, copies, seed } => {
            let seed = need_seed(seed, "gen planted")?;
            let base = match (graph, n) {
                (Some(path), _) => read_graph(&path)?,
                (None, Some(n)) => Graph::empty(n),
                (None, None) => return Err(CliError::pre("gen planted needs --graph or --n")),
            };
            let (g, log) = gen_planted(&base, &Pattern::parse(&pattern)?, copies, seed)?;
            sidecar.generator = format!("planted {pattern}");
            sidecar.seed = Some(seed);
            sidecar.planted = Some(log);
            g
        }
    };
    write_out(out, &graph.to_edge_list())?;
    if let Some(path) = out {
        write_out(Some(&sidecar_path(path)), &json(&sidecar)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { kind, out } => generate(kind, out.as_deref()),
        Command::Count(io) => {
            let g = read_graph(&io.graph)?;
            let h = Pattern::parse(&io.pattern)?;
            write_out(io.out.as_deref(), &json(&count_copies(&g, &h))?)
        }
        Command::Pack { io, mode, budget, seed } => {
            let g = read_graph(&io.graph)?;
            let h = Pattern::parse(&io.pattern)?;
            let mode = match mode {
                Mode::Exhaustive => PackingMode::Exact { budget },
                Mode::Randomized => PackingMode::Greedy { seed: need_seed(seed, "greedy packing")? },
            };
            let pk = packing(&g, &h, mode)?;
            write_out(io.out.as_deref(), &json(&serde_json::json!({ "size": pk.len(), "mode": mode, "copies": pk }))?)
        }
        Command::Remove { io, budget } => {
            let g = read_graph(&io.graph)?;
            let h = Pattern::parse(&io.pattern)?;
            write_out(io.out.as_deref(), &json(&removal_distance_exact(&g, &h, budget)?)?)
        }
        Command::Shatter { io, parts, alpha, constants, search } => {
            let g = read_graph(&io.graph)?;
            let h = Pattern::parse(&io.pattern)?;
            let parts_path = parts.unwrap_or_else(|| sidecar_path(&io.graph));
            let parts = read_parts(&parts_path)?;
            let cfg = ShatterConfig { constants: constants_from(&constants)?, search: search_from(&search)? };
            write_out(io.out.as_deref(), &json(&shatter_pair(&g, &h, &parts, alpha, &cfg)?)?)
        }
        Command::Refine { io, eps, alpha, upsilon, part_floor, max_iters, restarts, constants, search } => {
            let g = read_graph(&io.graph)?;
            let h = Pattern::parse(&io.pattern)?;
            let search = search_from(&search)?;
            let mut cfg = DriverConfig::new(constants_from(&constants)?, search.seed);
            cfg.step.search = search;
            cfg.step.alpha = alpha;
            cfg.step.upsilon = upsilon;
            cfg.part_floor = part_floor;
            cfg.max_iters = max_iters;
            cfg.packing = PackingChoice::Greedy { restarts };
            let trace = run_removal_process(&g, &h, eps, &cfg)?;
            write_out(io.out.as_deref(), &trace.to_jsonl())?;
            match &trace.status {
                RunStatus::ScaleInfeasible { message } => Err(CliError::Budget(format!("run stopped: {message}"))),
                RunStatus::IterationBudget => Err(CliError::Budget(format!("run stopped after {max_iters} iterations"))),
                _ => Ok(()),
            }
        }
        Command::Test { io, delta, seed, trials } => {
            let g = read_graph(&io.graph)?;
            let h = Pattern::parse(&io.pattern)?;
            let seed = need_seed(seed, "test")?;
            let text = match trials {
                Some(trials) => json(&estimate_rejection_rate(&g, &h, delta, trials, seed)?)?,
                None => json(&test_h_freeness(&g, &h, delta, seed)?)?,
            };
            write_out(io.out.as_deref(), &text)
        }
        Command::Constants { h, eps, alpha, out } => {
            let c = theoretical_constants(h, &Epsilon::parse(&eps)?, alpha)?;
            write_out(out.as_deref(), &json(&c)?)
        }
        Command::Report { trace, out } => {
            let text = fs::read_to_string(&trace).map_err(|e| CliError::pre(format!("cannot read {}: {e}", trace.display())))?;
            write_out(out.as_deref(), &report::summarize_trace(&report::parse_trace(&text)?)?)
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::pre(format!("{THREADS_VAR} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| CliError::pre(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("removal-lab: {e}");
            e.exit_code()
        }
    }
}
