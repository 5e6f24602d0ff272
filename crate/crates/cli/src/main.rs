use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use knapsparse::bench::{self, AggregateOptions, BenchConfig};
use knapsparse::gen::{self, GenParams, GridSpec, Marginal};
use knapsparse::instance::{GapInstance, ItemSet};
use knapsparse::reconstruction::verify_query;
use knapsparse::solvers::{self, gap_lp, Budget};
use knapsparse::sparsifier::{self, Mode, OracleMode, QueryResult, SparsifyParams};
use knapsparse::stochastic::{eval_sparsifier, DEFAULT_EVAL_TRIALS, DEFAULT_ORACLE_TRIALS};

#[derive(Parser)]
#[command(
    name = "knapsparse",
    version,
    about = "Sparsifiers for stochastic knapsack and GAP instances"
)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory (default: stdout where applicable).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance or a whole grid of instances.
    Gen(GenArgs),
    /// Solve an instance.
    Solve(SolveArgs),
    /// Build a query set.
    Sparsify(SparsifyArgs),
    /// Estimate the approximation ratio of a query set.
    Eval(EvalArgs),
    /// Replay the reconstruction on sampled realizations and check its invariants.
    Verify(VerifyArgs),
    /// Benchmark pipeline.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    Desk,
    Full,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = 2.0)]
    redundancy: f64,
    #[arg(long, default_value = "uniform(0,100)")]
    value_marginal: Marginal,
    #[arg(long, default_value = "uniform(1,20)")]
    weight_marginal: Marginal,
    /// Draw one (value, weight) per item shared by all knapsacks.
    #[arg(long)]
    mkp: bool,
    /// Write every instance of a grid into the --out directory.
    #[arg(long, value_enum)]
    grid: Option<GridKind>,
    /// Multiply the full grid's item counts by this factor.
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Exact,
    Lp,
    Greedy,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    method: Method,
    #[arg(long)]
    budget_ms: Option<u64>,
    #[arg(long)]
    budget_nodes: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Per,
    Global,
    Lp,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmKind {
    Auto,
    Kp,
    Gap,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeKind {
    Theory,
    Practical,
}

#[derive(Args)]
struct SparsifyArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, value_enum, default_value_t = OracleKind::Sampled)]
    oracle: OracleKind,
    /// Scales M_j for `--oracle per` (comma separated) or M for `--oracle global`.
    #[arg(long, value_delimiter = ',')]
    scales: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_ORACLE_TRIALS)]
    oracle_trials: usize,
    #[arg(long, value_enum, default_value_t = AlgorithmKind::Auto)]
    algorithm: AlgorithmKind,
    #[arg(long, value_enum, default_value_t = ModeKind::Theory)]
    mode: ModeKind,
    #[arg(long)]
    tau_override: Option<f64>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    instance: PathBuf,
    /// QueryResult JSON or a JSON array of item indices.
    #[arg(long)]
    query_file: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = DEFAULT_EVAL_TRIALS)]
    trials: usize,
    #[arg(long)]
    budget_nodes: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    #[arg(long)]
    query_file: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Epsilon for the value checks (default: the query's epsilon).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    budget_nodes: Option<u64>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run the three-method protocol over a grid and write the CSV.
    Run(BenchRunArgs),
    /// Summaries and plot data from a benchmark CSV.
    Aggregate(BenchAggregateArgs),
}

#[derive(Args)]
struct BenchRunArgs {
    #[arg(long, value_enum, default_value_t = GridKind::Desk)]
    grid: GridKind,
    /// Multiply the full grid's item counts by this factor.
    #[arg(long)]
    scale: Option<f64>,
    /// Node limit for the exact and sparse solves.
    #[arg(long, default_value_t = 50_000_000)]
    budget_nodes: u64,
    /// Run only the first N grid points.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct BenchAggregateArgs {
    csv: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match &cli.cmd {
        Command::Gen(a) => cmd_gen(&cli, a),
        Command::Solve(a) => cmd_solve(&cli, a),
        Command::Sparsify(a) => cmd_sparsify(&cli, a),
        Command::Eval(a) => cmd_eval(&cli, a),
        Command::Verify(a) => cmd_verify(&cli, a),
        Command::Bench(BenchCommand::Run(a)) => cmd_bench_run(&cli, a),
        Command::Bench(BenchCommand::Aggregate(a)) => cmd_bench_aggregate(&cli, a),
    }
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit_text(out, &text)
}

fn read_instance(path: &Path) -> Result<GapInstance> {
    GapInstance::read_json(path).with_context(|| format!("reading instance {}", path.display()))
}

fn budget(ms: Option<u64>, nodes: Option<u64>) -> Budget {
    Budget {
        max_nodes: nodes,
        max_wall_time: ms.map(Duration::from_millis),
    }
}

fn grid_spec(kind: GridKind, scale: Option<f64>) -> GridSpec {
    match (kind, scale) {
        (_, Some(f)) => GridSpec::scaled(f),
        (GridKind::Desk, None) => GridSpec::desk(),
        (GridKind::Full, None) => GridSpec::full(),
    }
}

fn warn_if_large(spec: &GridSpec) {
    if spec.ns.iter().any(|&n| n > 1000) {
        eprintln!(
            "warning: {} grid points with up to n = {}; exact solving at this size can take days",
            spec.len(),
            spec.ns.iter().max().unwrap_or(&0)
        );
    }
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    if a.grid.is_some() || a.scale.is_some() {
        let spec = grid_spec(a.grid.unwrap_or(GridKind::Full), a.scale);
        let dir = cli.out.as_deref().context("--out <dir> is required with --grid")?;
        fs::create_dir_all(dir)?;
        for point in spec.expand(cli.seed) {
            let inst = gen::generate(&point.params).with_context(|| point.instance_id.clone())?;
            inst.write_json(dir.join(format!("{}.json", point.instance_id)))?;
        }
        return Ok(());
    }
    let params = GenParams {
        value_marginal: a.value_marginal,
        weight_marginal: a.weight_marginal,
        mkp: a.mkp,
        ..GenParams::new(a.n, a.m, a.rho, a.redundancy, cli.seed)
    };
    let inst = gen::generate(&params)?;
    let mut text = inst.to_json()?;
    text.push('\n');
    emit_text(cli.out.as_deref(), &text)
}

#[derive(Serialize)]
struct ValueOnly {
    method: &'static str,
    value: f64,
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    match a.method {
        Method::Exact => {
            let res = solvers::gap_exact(&inst, &budget(a.budget_ms, a.budget_nodes));
            emit_json(cli.out.as_deref(), &res)
        }
        Method::Lp => emit_json(cli.out.as_deref(), &gap_lp(&inst)?),
        Method::Greedy => {
            if inst.m() != 1 {
                bail!(
                    "the fractional greedy bound needs a single knapsack, got m = {}",
                    inst.m()
                );
            }
            let values: Vec<f64> = (0..inst.n()).map(|i| inst.value(i, 0)).collect();
            let weights: Vec<f64> = (0..inst.n()).map(|i| inst.weight(i, 0)).collect();
            let value = solvers::kp_fractional_greedy(&values, &weights, inst.capacity(0));
            emit_json(
                cli.out.as_deref(),
                &ValueOnly {
                    method: "greedy",
                    value,
                },
            )
        }
    }
}

fn cmd_sparsify(cli: &Cli, a: &SparsifyArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let oracle = match a.oracle {
        OracleKind::Per => {
            if a.scales.is_empty() {
                bail!("--oracle per needs --scales");
            }
            OracleMode::PerKnapsack {
                scales: a.scales.clone(),
            }
        }
        OracleKind::Global => match a.scales.as_slice() {
            [m] => OracleMode::Global { scale: *m },
            _ => bail!("--oracle global needs exactly one value in --scales"),
        },
        OracleKind::Lp => OracleMode::LpDriven,
        OracleKind::Sampled => OracleMode::Sampled {
            trials: a.oracle_trials,
            seed: cli.seed,
        },
    };
    let params = SparsifyParams {
        epsilon: a.epsilon,
        p: a.p,
        oracle,
        mode: match a.mode {
            ModeKind::Theory => Mode::Theory,
            ModeKind::Practical => Mode::Practical,
        },
        rounds_alpha: a.alpha,
        tau_override: a.tau_override,
        k_override: a.k,
    };
    let use_kp = match a.algorithm {
        AlgorithmKind::Auto => inst.m() == 1,
        AlgorithmKind::Kp => true,
        AlgorithmKind::Gap => false,
    };
    let q = if use_kp {
        sparsifier::sparsify_kp(&inst, &params)?
    } else {
        sparsifier::sparsify_gap(&inst, &params)?
    };
    for w in &q.warnings {
        eprintln!("warning: {w}");
    }
    emit_json(cli.out.as_deref(), &q)
}

fn read_query(path: &Path, n: usize) -> Result<ItemSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(q) = serde_json::from_str::<QueryResult>(&text) {
        return Ok(q.query);
    }
    let items: Vec<usize> =
        serde_json::from_str(&text).context("query file is neither a QueryResult nor an index array")?;
    Ok(ItemSet::new(items, n)?)
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let q = read_query(&a.query_file, inst.n())?;
    let report = eval_sparsifier(&inst, &q, a.p, a.trials, cli.seed, &budget(None, a.budget_nodes))?;
    if report.flagged > 0 {
        eprintln!(
            "warning: {} realizations exceeded the solver budget and were excluded",
            report.flagged
        );
    }
    emit_json(cli.out.as_deref(), &report)
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let text = fs::read_to_string(&a.query_file).with_context(|| format!("reading {}", a.query_file.display()))?;
    let q: QueryResult = serde_json::from_str(&text).context("parsing QueryResult")?;
    let eps = a.epsilon.unwrap_or(q.epsilon);
    let report = verify_query(&inst, &q, a.p, a.trials, eps, cli.seed, &budget(None, a.budget_nodes))?;
    if report.estimated_scales {
        eprintln!("note: scales were estimated; the small-bucket check uses the estimates");
    }
    emit_json(cli.out.as_deref(), &report)
}

fn cmd_bench_run(cli: &Cli, a: &BenchRunArgs) -> Result<()> {
    let spec = grid_spec(a.grid, a.scale);
    warn_if_large(&spec);
    let mut points = spec.expand(cli.seed);
    if let Some(l) = a.limit {
        points.truncate(l);
    }
    let cfg = BenchConfig {
        budget: Budget::nodes(a.budget_nodes),
    };
    let rows = match cli.out.as_deref() {
        Some(p) => bench::run_grid(
            &points,
            &cfg,
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )?,
        None => bench::run_grid(&points, &cfg, io::stdout().lock())?,
    };
    let bad = rows.iter().filter(|r| !r.is_optimal()).count();
    if bad > 0 {
        eprintln!("warning: {bad} of {} rows are incomplete or failed", rows.len());
    }
    Ok(())
}

fn cmd_bench_aggregate(cli: &Cli, a: &BenchAggregateArgs) -> Result<()> {
    let file = fs::File::open(&a.csv).with_context(|| format!("opening {}", a.csv.display()))?;
    let records = bench::read_records(file)?;
    let opts = AggregateOptions {
        window: a.window,
        etr_bins: a.bins,
        ..AggregateOptions::default()
    };
    let summary = bench::aggregate(&records, &opts)?;
    match cli.out.as_deref() {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            emit_json(Some(&dir.join("summary.json")), &summary)?;
            bench::write_rolling_csv(fs::File::create(dir.join("rolling_speedup.csv"))?, &summary.rolling)?;
            bench::write_etr_bins_csv(fs::File::create(dir.join("etr_bins.csv"))?, &summary.etr_bins)?;
        }
        None => emit_json(None, &summary)?,
    }
    Ok(())
}
