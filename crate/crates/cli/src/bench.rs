//! Monte Carlo suites over the standard experiment settings.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use hybridloc::simlab::{self, Algorithm, AnchorCounts, McResult, ScenarioSource};

use crate::{check_output, usage, write_file, CliError, CliResult};

pub const SCHEMA_HEADER: &str = "# hybridloc-bench schema-version=1";
pub const COLUMNS: &str = "suite,dim,eta,algorithm,rmse,rank1_frac,mean_iters,mean_runtime_ms,runs,seed";
pub const SUITES: [&str; 5] = ["table4-2d", "table4-3d", "rank1-table", "anchors-sweep-3d", "single-vs-coop"];

const ETAS_6: [f64; 6] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.2];
const ETAS_8: [f64; 8] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4];
const SWEEP_ETA: f64 = 0.2;
const SWEEP_ANCHORS: std::ops::RangeInclusive<usize> = 4..=13;

#[derive(Args)]
pub struct BenchArgs {
    /// table4-2d | table4-3d | rank1-table | anchors-sweep-3d | single-vs-coop
    #[arg(long)]
    suite: String,
    /// Monte Carlo runs per point (suite default when omitted).
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV file; rows are appended when it already exists. Stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// gnuplot script to write (defaults to the CSV path with a .gp extension).
    #[arg(long)]
    plot: Option<PathBuf>,
}

/// One Monte Carlo experiment of a suite.
pub(crate) struct Block {
    label: String,
    dim: usize,
    source: ScenarioSource,
    algorithms: Vec<Algorithm>,
    etas: Vec<f64>,
}

fn default_runs(suite: &str) -> usize {
    match suite {
        "table4-2d" | "table4-3d" => 1000,
        "anchors-sweep-3d" => 100,
        _ => 500,
    }
}

fn blocks(suite: &str) -> CliResult<Vec<Block>> {
    let table4 = |dim| Block {
        label: suite.into(),
        dim,
        source: ScenarioSource::single_source(dim),
        algorithms: vec![Algorithm::Floris, Algorithm::Cloris],
        etas: ETAS_6.to_vec(),
    };
    Ok(match suite {
        "table4-2d" => vec![table4(2)],
        "table4-3d" => vec![table4(3)],
        "rank1-table" => [2, 3]
            .into_iter()
            .map(|dim| Block {
                label: suite.into(),
                dim,
                source: ScenarioSource::single_source(dim),
                algorithms: vec![Algorithm::Floris],
                etas: ETAS_8.to_vec(),
            })
            .collect(),
        "anchors-sweep-3d" => SWEEP_ANCHORS
            .map(|m| Block {
                label: format!("{suite}/{m}"),
                dim: 3,
                source: ScenarioSource::LocalizableRandom { dim: 3, counts: AnchorCounts { range: m - 1, visual: 1, nodes: 4 } },
                algorithms: vec![Algorithm::Cloris, Algorithm::ClorisRangeOnly],
                etas: vec![SWEEP_ETA],
            })
            .collect(),
        "single-vs-coop" => [2, 3]
            .into_iter()
            .map(|dim| {
                Ok(Block {
                    label: suite.into(),
                    dim,
                    source: ScenarioSource::Fixed(simlab::canned_scenario(dim)?),
                    algorithms: vec![Algorithm::FlorisPerNode, Algorithm::Cloris, Algorithm::ClorisRangeOnly],
                    etas: ETAS_8.to_vec(),
                })
            })
            .collect::<CliResult<_>>()?,
        _ => return usage(format!("unknown suite {suite:?}; available: {}", SUITES.join(", "))),
    })
}

fn csv_row(label: &str, dim: usize, r: &McResult, seed: u64) -> String {
    let rank1 = r.rank1_fraction.map(|f| f.to_string()).unwrap_or_default();
    format!(
        "{label},{dim},{},{},{},{rank1},{},{},{},{seed}\n",
        r.eta, r.algorithm, r.rmse, r.mean_iterations, r.mean_runtime_ms, r.runs
    )
}

/// Opens `path` for appending, writing the header when the file is new and
/// refusing files that carry a different schema line.
fn open_csv(path: &Path) -> CliResult<std::fs::File> {
    let io = |e| CliError::Lib(hybridloc::Error::Io { path: path.into(), source: e });
    let existing = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(io(e)),
    };
    if !existing.is_empty() && existing.lines().next() != Some(SCHEMA_HEADER) {
        return usage(format!("{} exists with a different or missing schema header", path.display()));
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    if existing.is_empty() {
        writeln!(f, "{SCHEMA_HEADER}\n{COLUMNS}").map_err(io)?;
    } else if !existing.ends_with('\n') {
        writeln!(f).map_err(io)?;
    }
    Ok(f)
}

pub fn run(a: &BenchArgs) -> CliResult<()> {
    let blocks = blocks(&a.suite)?;
    let runs = a.runs.unwrap_or_else(|| default_runs(&a.suite));
    if runs == 0 {
        return usage("--runs must be positive");
    }
    let plot = a.plot.clone().or_else(|| a.out.as_ref().map(|p| p.with_extension("gp")));
    if plot.is_some() && a.out.is_none() {
        return usage("--plot needs --out: the script reads the CSV file");
    }
    for p in a.out.iter().chain(plot.iter()) {
        check_output(p)?;
    }
    let mut sink: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(open_csv(p)?),
        None => {
            println!("{SCHEMA_HEADER}\n{COLUMNS}");
            Box::new(std::io::stdout())
        }
    };
    let out_name = a.out.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<stdout>".into());
    for b in &blocks {
        log::info!("{} {}D: {runs} runs", b.label, b.dim);
        let results = simlab::run_monte_carlo(&b.source, &b.algorithms, &b.etas, runs, a.seed)?;
        let mut text = String::new();
        for r in &results {
            text.push_str(&csv_row(&b.label, b.dim, r, a.seed));
        }
        sink.write_all(text.as_bytes())
            .and_then(|_| sink.flush())
            .map_err(|e| CliError::Lib(hybridloc::Error::Io { path: out_name.clone().into(), source: e }))?;
    }
    if let (Some(gp), Some(csv)) = (&plot, &a.out) {
        write_file(gp, &gnuplot_script(&a.suite, &blocks, csv))?;
    }
    Ok(())
}

/// Data-only plot description: the script reads the CSV and filters rows by
/// suite, dimension and algorithm.
pub(crate) fn gnuplot_script(suite: &str, blocks: &[Block], csv: &Path) -> String {
    let data = csv.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let png = csv.with_extension("png");
    let png = png.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(s, "# Plot for the {suite} suite; run from the directory holding {data}.");
    let _ = writeln!(s, "set datafile separator \",\"\nset terminal pngcairo size 900,600\nset output \"{png}\"");
    let _ = writeln!(s, "set key top left\nset grid");
    let mut series: Vec<(usize, String)> = vec![];
    for b in blocks {
        for alg in &b.algorithms {
            if !series.contains(&(b.dim, alg.tag().to_string())) {
                series.push((b.dim, alg.tag().to_string()));
            }
        }
    }
    let (x, y, filter_suite) = match suite {
        // Anchor count follows the "anchors-sweep-3d/" prefix of the suite column.
        "anchors-sweep-3d" => ("(real(strcol(1)[18:]))", "5", format!("strcol(1)[1:17] eq \"{suite}/\"")),
        "rank1-table" => ("3", "(100*$6)", format!("strcol(1) eq \"{suite}\"")),
        _ => ("3", "5", format!("strcol(1) eq \"{suite}\"")),
    };
    match suite {
        "anchors-sweep-3d" => {
            let _ = writeln!(s, "set logscale y\nset xlabel \"anchors\"\nset ylabel \"RMSE\"");
        }
        "rank1-table" => {
            let _ = writeln!(s, "set logscale x\nset xlabel \"noise factor\"\nset ylabel \"rank-1 solutions (%)\"");
        }
        _ => {
            let _ = writeln!(s, "set logscale xy\nset xlabel \"noise factor\"\nset ylabel \"RMSE\"");
        }
    }
    let plots: Vec<String> = series
        .iter()
        .map(|(dim, alg)| {
            format!(
                "\"{data}\" using ({filter_suite} && $2 == {dim} && strcol(4) eq \"{alg}\" ? {xv} : NaN):{yv} with linespoints title \"{alg} {dim}D\"",
                xv = if x == "3" { "$3".to_string() } else { x.to_string() },
                yv = y
            )
        })
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}
