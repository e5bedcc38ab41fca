use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybridloc::calib::{self, PairPolicy};
use hybridloc::cloris::{self, ClorisSettings};
use hybridloc::floris;
use hybridloc::model::{AnchorKind, Scenario};
use hybridloc::network::NetworkProblem;
use hybridloc::refine::{self, RefineConfig, RefineMethod};
use hybridloc::report::SolverReport;
use hybridloc::sdp::SdpSettings;
use hybridloc::simlab::{self, AnchorCounts, NoiseModel, ScenarioKind};

mod bench;

/// Hybrid range/bearing localization: simulate, solve, benchmark, calibrate.
#[derive(Parser)]
#[command(name = "hybridloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and synthesize its measurements.
    Simulate(SimulateArgs),
    /// Localize the nodes of a scenario file.
    Solve(SolveArgs),
    /// Run a Monte Carlo benchmark suite and emit CSV.
    Bench(bench::BenchArgs),
    /// Estimate the visual-to-global transform from pose samples.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// single-source | cooperative | cooperative-random
    #[arg(long, default_value = "single-source")]
    kind: ScenarioKind,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long)]
    range_anchors: Option<usize>,
    #[arg(long)]
    visual_anchors: Option<usize>,
    /// Unknown-position nodes (cooperative kinds only).
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario file, with the measurements embedded.
    #[arg(long)]
    out: PathBuf,
    /// Also write the measurements alone to this file.
    #[arg(long)]
    measurements_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveAlgo {
    Floris,
    FlorisReduced,
    Cloris,
    /// Refinement alone, from a seeded uniform start in the anchor box.
    Refine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RefineMethodArg {
    Simplex,
    Gradient,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "cloris")]
    algo: SolveAlgo,
    /// Polish the relaxed estimate by minimizing the hybrid cost.
    #[arg(long)]
    refine: bool,
    #[arg(long, value_enum, default_value = "simplex")]
    method: RefineMethodArg,
    /// Solver tolerance (SDP residual or CLORIS gradient norm).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed for the CLORIS / refine initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spread CLORIS node updates over worker threads.
    #[arg(long)]
    parallel: bool,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Pose-sample file: array of {x_r, R_v, t_v}.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = calib::DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = calib::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Use every sample pair instead of the automatic subset.
    #[arg(long)]
    all_pairs: bool,
    /// Seed for the pair subset drawn on large sample files.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(hybridloc::Error),
}

impl From<hybridloc::Error> for CliError {
    fn from(e: hybridloc::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use hybridloc::Error as E;
        match self {
            CliError::Usage(_) | CliError::Lib(E::InvalidArgument(_)) => 1,
            CliError::Lib(E::Io { .. } | E::Parse { .. }) => 3,
            CliError::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Lib(hybridloc::Error::Io { path: path.into(), source })
}

/// Fails early when the directory an output goes to does not exist.
pub fn check_output(path: &Path) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if dir.is_dir() {
        Ok(())
    } else {
        Err(io_error(path, std::io::Error::new(std::io::ErrorKind::NotFound, "parent directory does not exist")))
    }
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("HYBRIDLOC_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return usage(format!("HYBRIDLOC_THREADS must be a positive integer, got {v:?}")),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    check_output(&a.out)?;
    if let Some(p) = &a.measurements_out {
        check_output(p)?;
    }
    let base = match a.kind {
        ScenarioKind::SingleSourceRandom => AnchorCounts::SINGLE_SOURCE,
        _ => AnchorCounts::COOPERATIVE,
    };
    let counts = AnchorCounts {
        range: a.range_anchors.unwrap_or(base.range),
        visual: a.visual_anchors.unwrap_or(base.visual),
        nodes: a.nodes.unwrap_or(base.nodes),
    };
    let mut s = simlab::generate_scenario(a.kind, a.dim, counts, a.seed)?;
    let ms = simlab::synthesize_measurements(&s, NoiseModel { eta: a.eta, seed: a.seed })?;
    if let Some(p) = &a.measurements_out {
        write_json(p, &ms)?;
    }
    println!(
        "{}: {}D, {} range + {} visual anchors, {} node(s), {} edges, {} ranges + {} bearings at eta {}",
        a.out.display(),
        s.dim,
        s.count_anchors(AnchorKind::Range),
        s.count_anchors(AnchorKind::Visual),
        s.nodes.len(),
        s.edges.len(),
        ms.ranges.len(),
        ms.bearings.len(),
        a.eta
    );
    s.measurements = Some(ms);
    s.save(&a.out)?;
    Ok(())
}

fn solve(a: &SolveArgs) -> CliResult<()> {
    if let Some(p) = &a.out {
        check_output(p)?;
    }
    if a.tol.is_some_and(|t| !(t > 0.0)) || a.max_iters == Some(0) {
        return usage("--tol must be positive and --max-iters nonzero");
    }
    let scenario = Scenario::load(&a.input)?;
    let ms = scenario
        .measurements
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{} has no measurements; run simulate first", a.input.display())))?;
    let problem = NetworkProblem::from_scenario(&scenario, ms)?;
    let refine_cfg = RefineConfig {
        method: match a.method {
            RefineMethodArg::Simplex => RefineMethod::Simplex,
            RefineMethodArg::Gradient => RefineMethod::Gradient,
        },
        ..Default::default()
    };

    let mut report = match a.algo {
        SolveAlgo::Floris | SolveAlgo::FlorisReduced => {
            if problem.num_nodes() != 1 {
                return usage(format!("floris needs a single-node scenario; this one has {} nodes", problem.num_nodes()));
            }
            let fp = problem
                .to_floris()
                .map_err(|e| CliError::Usage(format!("scenario does not fit the single-source solver: {e}")))?;
            let mut settings = SdpSettings::default();
            if let Some(t) = a.tol {
                settings.tol = t;
            }
            if let Some(m) = a.max_iters {
                settings.max_iters = m;
            }
            let start = Instant::now();
            let sol = if a.algo == SolveAlgo::Floris {
                floris::solve_floris_with(&fp, &settings)?
            } else {
                floris::solve_floris_reduced_with(&fp, &settings)?
            };
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let mut r = sol.to_report(&problem.node_ids[0], problem.cost(sol.x_hat.as_slice())?, ms);
            if a.algo == SolveAlgo::FlorisReduced && !sol.fell_back {
                r.algorithm = "floris-reduced".into();
            }
            r
        }
        SolveAlgo::Cloris => {
            let settings = ClorisSettings {
                tol: a.tol.unwrap_or(cloris::DEFAULT_TOL),
                max_iters: a.max_iters.unwrap_or(cloris::DEFAULT_MAX_ITERS),
                seed: a.seed,
                parallel: a.parallel,
            };
            cloris::solve_cloris_with(&problem, &settings, None)?
        }
        SolveAlgo::Refine => {
            let x0 = cloris::random_start(&problem, a.seed);
            let mut cfg = refine_cfg.clone();
            if let Some(m) = a.max_iters {
                cfg.max_evals = m;
            }
            refine::refine_flat(&x0, &problem, &cfg)?
        }
    };
    if a.refine && a.algo != SolveAlgo::Refine {
        let before = problem.cost(&report.flat_positions())?;
        let refined = refine::refine_flat(&report.flat_positions(), &problem, &refine_cfg)?;
        log::info!("refinement: hybrid cost {before:.6e} -> {:.6e}", refined.cost);
        let relaxed = report;
        report = SolverReport {
            algorithm: format!("{}+{}", relaxed.algorithm, refined.algorithm),
            iterations: relaxed.iterations + refined.iterations,
            wall_time_ms: relaxed.wall_time_ms + refined.wall_time_ms,
            rank1_ratio: relaxed.rank1_ratio,
            ..refined
        };
        if !a.json {
            println!("hybrid cost before refinement: {before:.6e}");
        }
    }
    if let Some(truth) = scenario.truth() {
        report.rmse = Some(simlab::rmse(&[truth], &[report.positions.clone()])?);
    }

    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    } else {
        print_report(&report);
    }
    Ok(())
}

fn print_report(r: &SolverReport) {
    println!("algorithm: {}", r.algorithm);
    for (id, p) in r.node_ids.iter().zip(&r.positions) {
        let c: Vec<String> = p.as_slice().iter().map(|v| format!("{v:.6}")).collect();
        println!("  {id}: [{}]", c.join(", "));
    }
    println!("iterations: {}  converged: {}  cost: {:.6e}", r.iterations, r.converged, r.cost);
    if let Some(g) = r.gradient_norm {
        println!("gradient_norm: {g:.3e}");
    }
    if let Some(q) = r.rank1_ratio {
        println!("rank1_ratio: {q:.3e}");
    }
    if !r.unidentified.is_empty() {
        println!("unidentified: {}", r.unidentified.join(", "));
    }
    if let Some(e) = r.rmse {
        println!("rmse: {e:.6e}");
    }
    println!("wall_time_ms: {:.3}", r.wall_time_ms);
}

fn calibrate(a: &CalibrateArgs) -> CliResult<()> {
    if let Some(p) = &a.out {
        check_output(p)?;
    }
    let samples = calib::load_samples(&a.input)?;
    if samples.len() < 2 {
        return usage(format!("calibration needs at least 2 pose samples, {} has {}", a.input.display(), samples.len()));
    }
    let policy = if a.all_pairs { PairPolicy::AllPairs } else { PairPolicy::Auto { seed: a.seed } };
    let result = calib::calibrate_with(&samples, a.eps, a.max_iters, policy)?;
    let text = serde_json::to_string_pretty(&result).expect("serializable") + "\n";
    match &a.out {
        Some(p) => {
            write_file(p, &text)?;
            println!(
                "{}: {} samples, {} iterations, converged {}, residual_rms {:.3e}",
                p.display(),
                samples.len(),
                result.iterations,
                result.converged,
                result.residual_rms
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench::run(a),
        Command::Calibrate(a) => calibrate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hybridloc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
