//! Scenario generation, noise synthesis and the Monte Carlo harness.
//!
//! # Random streams
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), a counter-based
//! generator: the 64-bit seed fixes the key and each consumer reads its own
//! stream, `stream = 4·run + purpose` with purpose 0 = scenario geometry,
//! 1 = measurement noise, 2 = solver initialization, 3 = auxiliary
//! (variance estimation). Results therefore do not depend on scheduling,
//! and every η value and algorithm of one run sees the same geometry and the
//! same standard-normal draws (paired comparisons).
//!
//! # Noise model
//!
//! Each edge draws one displacement `δ = δ₀ + w`, `w ~ N(0, η²‖δ₀‖²I)`, and
//! derives both `d = ‖δ‖` and `u = δ/‖δ‖` from it when the edge carries both
//! measurement types.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloris::{self, ClorisSettings};
use crate::error::{invalid, Error, Result};
use crate::floris::{self, RANK1_THRESHOLD};
use crate::geometry::{Bearing, BearingMeasurement, Position, RangeMeasurement};
use crate::model::{Anchor, AnchorKind, Edge, Endpoint, MeasurementSet, MeasurementType, Node, Scenario};
use crate::network::{flatten, AnchorEdge, NetworkProblem};
use crate::refine::{self, CostKind, RefineConfig};
use crate::sdp::SdpSettings;

/// Stream purposes; see the module docs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Scenario = 0,
    Noise = 1,
    Init = 2,
    Aux = 3,
}

pub fn rng_stream(seed: u64, run: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run.wrapping_mul(4).wrapping_add(purpose as u64));
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub eta: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// One source and uniformly placed anchors in the unit square/cube.
    SingleSourceRandom,
    /// A shipped, pre-validated cooperative network (13 anchors, 4 sensors).
    CooperativeCanned,
    /// Random cooperative network: every node sees the anchors and nodes
    /// within [`connectivity_radius`]; internode edges carry range and bearing.
    CooperativeRandom,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-source" | "single_source_random" => Ok(Self::SingleSourceRandom),
            "cooperative" | "cooperative_canned" => Ok(Self::CooperativeCanned),
            "cooperative-random" | "cooperative_random" => Ok(Self::CooperativeRandom),
            other => invalid(format!("unknown scenario kind {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnchorCounts {
    pub range: usize,
    pub visual: usize,
    pub nodes: usize,
}

impl AnchorCounts {
    /// 8 range + 4 visual anchors, one source.
    pub const SINGLE_SOURCE: Self = Self { range: 8, visual: 4, nodes: 1 };
    /// 8 range + 5 visual anchors, 4 sensors.
    pub const COOPERATIVE: Self = Self { range: 8, visual: 5, nodes: 4 };
}

/// Neighborhood radius of the random cooperative generator.
pub fn connectivity_radius(dim: usize) -> f64 {
    if dim == 2 {
        0.6
    } else {
        0.8
    }
}

const CANNED_2D: &str = include_str!("../../../scenarios/coop-2d.json");
const CANNED_3D: &str = include_str!("../../../scenarios/coop-3d.json");

/// The shipped cooperative network for dimension 2 or 3.
pub fn canned_scenario(dim: usize) -> Result<Scenario> {
    let text = match dim {
        2 => CANNED_2D,
        3 => CANNED_3D,
        _ => return invalid(format!("no canned cooperative scenario in {dim}D")),
    };
    let s: Scenario = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("canned scenario: {e}")))?;
    s.validate()?;
    Ok(s)
}

fn uniform_position(rng: &mut impl Rng, n: usize) -> Position {
    Position::new((0..n).map(|_| rng.random::<f64>()).collect()).expect("finite")
}

pub fn generate_scenario(kind: ScenarioKind, n: usize, counts: AnchorCounts, seed: u64) -> Result<Scenario> {
    let mut rng = rng_stream(seed, 0, Stream::Scenario);
    generate_scenario_with(kind, n, counts, &mut rng)
}

pub fn generate_scenario_with(kind: ScenarioKind, n: usize, counts: AnchorCounts, rng: &mut impl Rng) -> Result<Scenario> {
    if n < 2 {
        return invalid("dimension must be >= 2");
    }
    match kind {
        ScenarioKind::SingleSourceRandom => {
            if counts.nodes != 1 || counts.range + counts.visual == 0 {
                return invalid("single-source scenarios need one node and at least one anchor");
            }
            let anchors = random_anchors(rng, n, counts);
            let source = uniform_position(rng, n);
            let edges = anchors
                .iter()
                .map(|a| Edge { from: a.id.clone(), to: "x".into(), types: vec![type_for(a.kind)] })
                .collect();
            Ok(Scenario { dim: n, anchors, nodes: vec![Node { id: "x".into(), pos: Some(source) }], edges, measurements: None })
        }
        ScenarioKind::CooperativeCanned => {
            let s = canned_scenario(n)?;
            let got = AnchorCounts {
                range: s.count_anchors(AnchorKind::Range),
                visual: s.count_anchors(AnchorKind::Visual),
                nodes: s.nodes.len(),
            };
            if got != counts {
                return invalid(format!("canned {n}D scenario has {got:?}, requested {counts:?}"));
            }
            Ok(s)
        }
        ScenarioKind::CooperativeRandom => {
            if counts.nodes == 0 {
                return invalid("cooperative scenarios need at least one node");
            }
            let anchors = random_anchors(rng, n, counts);
            let nodes: Vec<Node> = (0..counts.nodes)
                .map(|i| Node { id: format!("s{i}"), pos: Some(uniform_position(rng, n)) })
                .collect();
            Ok(radius_edges(n, anchors, nodes, connectivity_radius(n)))
        }
    }
}

fn random_anchors(rng: &mut impl Rng, n: usize, counts: AnchorCounts) -> Vec<Anchor> {
    let mut anchors = Vec::with_capacity(counts.range + counts.visual);
    for k in 0..counts.range {
        anchors.push(Anchor { id: format!("r{k}"), pos: uniform_position(rng, n), kind: AnchorKind::Range });
    }
    for k in 0..counts.visual {
        anchors.push(Anchor { id: format!("v{k}"), pos: uniform_position(rng, n), kind: AnchorKind::Visual });
    }
    anchors
}

fn type_for(kind: AnchorKind) -> MeasurementType {
    match kind {
        AnchorKind::Range => MeasurementType::Range,
        AnchorKind::Visual => MeasurementType::Bearing,
    }
}

/// Connects anchors and nodes closer than `radius` (anchor → node; node
/// pairs carry range and bearing).
pub fn radius_edges(n: usize, anchors: Vec<Anchor>, nodes: Vec<Node>, radius: f64) -> Scenario {
    let dist = |a: &Position, b: &Position| (a.coords() - b.coords()).norm();
    let mut edges = Vec::new();
    for node in &nodes {
        let p = node.pos.as_ref().expect("generated nodes have positions");
        for a in &anchors {
            if dist(&a.pos, p) <= radius {
                edges.push(Edge { from: a.id.clone(), to: node.id.clone(), types: vec![type_for(a.kind)] });
            }
        }
    }
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            if dist(a.pos.as_ref().unwrap(), b.pos.as_ref().unwrap()) <= radius {
                edges.push(Edge {
                    from: a.id.clone(),
                    to: b.id.clone(),
                    types: vec![MeasurementType::Range, MeasurementType::Bearing],
                });
            }
        }
    }
    Scenario { dim: n, anchors, nodes, edges, measurements: None }
}

/// Draws measurements for every edge from the noise stream of `noise.seed`.
pub fn synthesize_measurements(scenario: &Scenario, noise: NoiseModel) -> Result<MeasurementSet> {
    let mut rng = rng_stream(noise.seed, 0, Stream::Noise);
    synthesize_with(scenario, noise.eta, &mut rng)
}

pub fn synthesize_with(scenario: &Scenario, eta: f64, rng: &mut impl Rng) -> Result<MeasurementSet> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return invalid(format!("noise factor must be a nonnegative number, got {eta}"));
    }
    scenario.validate()?;
    let pos = |id: &str| -> Result<DVector<f64>> {
        match scenario.resolve(id) {
            Some(Endpoint::Anchor(a)) => Ok(scenario.anchors[a].pos.coords().clone()),
            Some(Endpoint::Node(i)) => scenario.nodes[i]
                .pos
                .as_ref()
                .map(|p| p.coords().clone())
                .ok_or_else(|| Error::InvalidArgument(format!("node {id} has no ground-truth position"))),
            None => invalid(format!("unknown id {id}")),
        }
    };
    let mut ms = MeasurementSet::default();
    for e in &scenario.edges {
        let delta0 = pos(&e.to)? - pos(&e.from)?;
        let delta = perturb(&delta0, eta, rng)?;
        let d = delta.norm();
        for t in &e.types {
            match t {
                MeasurementType::Range => ms.ranges.push(RangeMeasurement {
                    observer: e.from.clone(),
                    target: e.to.clone(),
                    distance: d,
                }),
                MeasurementType::Bearing => ms.bearings.push(BearingMeasurement {
                    observer: e.from.clone(),
                    target: e.to.clone(),
                    bearing: Bearing::new(&delta / d)?,
                }),
            }
        }
    }
    Ok(ms)
}

/// `δ₀ + w` with `w ~ N(0, η²‖δ₀‖²I)`; an exactly zero result is redrawn.
pub fn perturb(delta0: &DVector<f64>, eta: f64, rng: &mut impl Rng) -> Result<DVector<f64>> {
    let scale = eta * delta0.norm();
    for _ in 0..64 {
        let w = DVector::from_fn(delta0.len(), |_, _| StandardNormal.sample(rng));
        let delta = delta0 + scale * w;
        if delta.norm() > 0.0 {
            return Ok(delta);
        }
    }
    Err(Error::DegenerateGeometry("edge joins coincident points; no displacement to measure".into()))
}

/// True iff, with noiseless measurements, CLORIS followed by refinement
/// reaches the ground truth (every node within 1e-3) from each of `trials`
/// random starts.
pub fn localizability_check(scenario: &Scenario, trials: usize) -> Result<bool> {
    if trials < 5 {
        return invalid("localizability check needs at least 5 trials");
    }
    let truth = flatten(&scenario.truth().ok_or_else(|| Error::InvalidArgument("scenario lacks ground truth".into()))?);
    let ms = synthesize_with(scenario, 0.0, &mut rng_stream(0, 0, Stream::Noise))?;
    let problem = NetworkProblem::from_scenario(scenario, &ms)?;
    if problem.measurement_counts().iter().any(|&c| c == 0) {
        return Ok(false);
    }
    let n = scenario.dim;
    let settings = ClorisSettings { tol: 1e-9, max_iters: 20_000, ..Default::default() };
    let refine_cfg = RefineConfig { x_tol: 1e-10, f_tol: 1e-16, max_evals: 50_000, ..Default::default() };
    for t in 0..trials {
        let relaxed = cloris::solve_cloris_with(&problem, &ClorisSettings { seed: t as u64, ..settings }, None)?;
        let refined = refine::refine_flat(&relaxed.flat_positions(), &problem, &refine_cfg)?;
        let x = refined.flat_positions();
        let worst = x
            .chunks(n)
            .zip(truth.chunks(n))
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if !(worst <= 1e-3) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Total RMSE over runs and nodes: `sqrt(Σ_k Σ_i ‖x_i − x̂_i^k‖² / (MC·N))`.
pub fn rmse(truth: &[Vec<Position>], estimates: &[Vec<Position>]) -> Result<f64> {
    if truth.is_empty() || truth.len() != estimates.len() {
        return invalid("rmse needs matching, nonempty truth and estimate lists");
    }
    let mut terms = Vec::new();
    for (t, e) in truth.iter().zip(estimates) {
        if t.len() != e.len() || t.is_empty() {
            return invalid("rmse: run has mismatched node counts");
        }
        for (a, b) in t.iter().zip(e) {
            if a.dim() != b.dim() {
                return invalid("rmse: dimension mismatch");
            }
            terms.push((a.coords() - b.coords()).norm_squared());
        }
    }
    Ok((pairwise_sum(&terms) / terms.len() as f64).sqrt())
}

/// Order-fixed pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Single-source SDP relaxation.
    Floris,
    FlorisReduced,
    /// FLORIS followed by simplex refinement of the hybrid cost.
    FlorisRefined,
    /// FLORIS applied to each node separately with its anchor measurements
    /// only (no cooperation).
    FlorisPerNode,
    Cloris,
    /// CLORIS on the range-only variant of the scenario: visual anchors
    /// become range anchors and bearing edges become range edges.
    ClorisRangeOnly,
    ClorisRefined,
    /// CLORIS followed by refinement of the range/azimuth/elevation
    /// likelihood with empirically estimated variances (3D only).
    ClorisRefinedMl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Floris,
        Algorithm::FlorisReduced,
        Algorithm::FlorisRefined,
        Algorithm::FlorisPerNode,
        Algorithm::Cloris,
        Algorithm::ClorisRangeOnly,
        Algorithm::ClorisRefined,
        Algorithm::ClorisRefinedMl,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Floris => "floris",
            Algorithm::FlorisReduced => "floris-reduced",
            Algorithm::FlorisRefined => "floris-refined",
            Algorithm::FlorisPerNode => "floris-per-node",
            Algorithm::Cloris => "cloris",
            Algorithm::ClorisRangeOnly => "cloris-range-only",
            Algorithm::ClorisRefined => "cloris-refined",
            Algorithm::ClorisRefinedMl => "cloris-refined-ml",
        }
    }

    fn uses_floris(self) -> bool {
        matches!(self, Algorithm::Floris | Algorithm::FlorisReduced | Algorithm::FlorisRefined)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

const MAX_REDRAWS: usize = 1000;

/// Where each run's geometry comes from.
#[derive(Clone, Debug)]
pub enum ScenarioSource {
    /// Fresh geometry per run from the scenario stream.
    Random { kind: ScenarioKind, dim: usize, counts: AnchorCounts },
    /// Same geometry every run; only noise and initialization vary.
    Fixed(Scenario),
    /// Random cooperative geometry, redrawn from the run's scenario stream
    /// until both the hybrid network and its range-only variant pass
    /// [`localizability_check`] with 5 trials.
    LocalizableRandom { dim: usize, counts: AnchorCounts },
}

impl ScenarioSource {
    pub fn single_source(dim: usize) -> Self {
        Self::Random { kind: ScenarioKind::SingleSourceRandom, dim, counts: AnchorCounts::SINGLE_SOURCE }
    }

    /// Geometry for run `run` of an experiment seeded with `seed`.
    pub fn scenario(&self, seed: u64, run: u64) -> Result<Scenario> {
        match self {
            ScenarioSource::Random { kind, dim, counts } => {
                generate_scenario_with(*kind, *dim, *counts, &mut rng_stream(seed, run, Stream::Scenario))
            }
            ScenarioSource::Fixed(s) => Ok(s.clone()),
            ScenarioSource::LocalizableRandom { dim, counts } => {
                let mut rng = rng_stream(seed, run, Stream::Scenario);
                for _ in 0..MAX_REDRAWS {
                    let s = generate_scenario_with(ScenarioKind::CooperativeRandom, *dim, *counts, &mut rng)?;
                    if localizability_check(&s, 5)? && localizability_check(&s.range_only_variant(), 5)? {
                        return Ok(s);
                    }
                }
                Err(Error::DegenerateGeometry(format!(
                    "no localizable {dim}D network with {counts:?} in {MAX_REDRAWS} draws"
                )))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct McConfig {
    pub sdp: SdpSettings,
    pub cloris: ClorisSettings,
    pub refine: RefineConfig,
    /// Noise realizations per variance estimate for the likelihood refinement.
    pub variance_trials: usize,
    /// Fraction of failed runs above which the experiment errors out.
    pub max_failure_fraction: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            sdp: SdpSettings::default(),
            cloris: ClorisSettings::default(),
            refine: RefineConfig::default(),
            variance_trials: 200,
            max_failure_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub eta: f64,
    pub algorithm: String,
    pub rmse: f64,
    /// Share of runs with `σ₁/σ₂ ≥ 20` (FLORIS variants only).
    pub rank1_fraction: Option<f64>,
    pub mean_iterations: f64,
    pub mean_runtime_ms: f64,
    /// Runs that produced an estimate.
    pub runs: usize,
    /// Runs excluded because the solver failed.
    pub failures: usize,
}

#[derive(Clone, Debug)]
struct RunOutcome {
    sq_error: Vec<f64>,
    iterations: usize,
    runtime_ms: f64,
    rank1: Option<bool>,
}

pub fn run_monte_carlo(
    source: &ScenarioSource,
    algorithms: &[Algorithm],
    etas: &[f64],
    runs: usize,
    seed: u64,
) -> Result<Vec<McResult>> {
    run_monte_carlo_with(source, algorithms, etas, runs, seed, &McConfig::default())
}

/// Results are ordered by η, then by the order of `algorithms`.
pub fn run_monte_carlo_with(
    source: &ScenarioSource,
    algorithms: &[Algorithm],
    etas: &[f64],
    runs: usize,
    seed: u64,
    config: &McConfig,
) -> Result<Vec<McResult>> {
    if runs == 0 || algorithms.is_empty() || etas.is_empty() {
        return invalid("Monte Carlo needs at least one run, algorithm and noise factor");
    }
    if let Some(eta) = etas.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return invalid(format!("invalid noise factor {eta}"));
    }
    let per_run: Vec<Vec<std::result::Result<RunOutcome, String>>> = (0..runs as u64)
        .into_par_iter()
        .map(|run| one_run(source, algorithms, etas, seed, run, config))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(etas.len() * algorithms.len());
    for (ei, &eta) in etas.iter().enumerate() {
        for (ai, alg) in algorithms.iter().enumerate() {
            let idx = ei * algorithms.len() + ai;
            let mut sq = Vec::new();
            let mut iters = Vec::new();
            let mut times = Vec::new();
            let mut rank1 = 0usize;
            let mut failures = 0usize;
            let mut first_error = None;
            for r in &per_run {
                match &r[idx] {
                    Ok(o) => {
                        sq.extend_from_slice(&o.sq_error);
                        iters.push(o.iterations as f64);
                        times.push(o.runtime_ms);
                        rank1 += usize::from(o.rank1 == Some(true));
                    }
                    Err(e) => {
                        failures += 1;
                        first_error.get_or_insert_with(|| e.clone());
                    }
                }
            }
            let ok = runs - failures;
            if failures as f64 > config.max_failure_fraction * runs as f64 || ok == 0 {
                return Err(Error::Convergence(format!(
                    "{} at eta={eta}: {failures} of {runs} runs failed (first: {})",
                    alg.tag(),
                    first_error.unwrap_or_default()
                )));
            }
            if failures > 0 {
                log::warn!("{} at eta={eta}: excluded {failures} failed runs", alg.tag());
            }
            out.push(McResult {
                eta,
                algorithm: alg.tag().into(),
                rmse: (pairwise_sum(&sq) / sq.len() as f64).sqrt(),
                rank1_fraction: alg.uses_floris().then(|| rank1 as f64 / ok as f64),
                mean_iterations: pairwise_sum(&iters) / ok as f64,
                mean_runtime_ms: pairwise_sum(&times) / ok as f64,
                runs: ok,
                failures,
            });
        }
    }
    Ok(out)
}

fn one_run(
    source: &ScenarioSource,
    algorithms: &[Algorithm],
    etas: &[f64],
    seed: u64,
    run: u64,
    config: &McConfig,
) -> Result<Vec<std::result::Result<RunOutcome, String>>> {
    let scenario = source.scenario(seed, run)?;
    let truth = flatten(&scenario.truth().ok_or_else(|| Error::InvalidArgument("scenario lacks ground truth".into()))?);
    let range_only = scenario.range_only_variant();
    let init_seed = rng_stream(seed, run, Stream::Init).next_u64();
    let aux_seed = rng_stream(seed, run, Stream::Aux).next_u64();
    let mut out = Vec::with_capacity(etas.len() * algorithms.len());
    for &eta in etas {
        let ms = synthesize_with(&scenario, eta, &mut rng_stream(seed, run, Stream::Noise))?;
        let problem = NetworkProblem::from_scenario(&scenario, &ms)?;
        let ro_problem = if algorithms.contains(&Algorithm::ClorisRangeOnly) {
            let ms = synthesize_with(&range_only, eta, &mut rng_stream(seed, run, Stream::Noise))?;
            Some(NetworkProblem::from_scenario(&range_only, &ms)?)
        } else {
            None
        };
        for &alg in algorithms {
            let p = if alg == Algorithm::ClorisRangeOnly { ro_problem.as_ref().unwrap() } else { &problem };
            let res = run_algorithm(alg, p, &truth, eta, init_seed, aux_seed, config).map_err(|e| e.to_string());
            out.push(res);
        }
    }
    Ok(out)
}

fn run_algorithm(
    alg: Algorithm,
    problem: &NetworkProblem,
    truth: &[f64],
    eta: f64,
    init_seed: u64,
    aux_seed: u64,
    config: &McConfig,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let (x, iterations, rank1) = match alg {
        Algorithm::Floris | Algorithm::FlorisReduced | Algorithm::FlorisRefined => {
            let fp = problem.to_floris()?;
            let sol = if alg == Algorithm::FlorisReduced {
                floris::solve_floris_reduced_with(&fp, &config.sdp)?
            } else {
                floris::solve_floris_with(&fp, &config.sdp)?
            };
            let mut x = sol.x_hat.as_slice().to_vec();
            let mut iterations = sol.sdp_iterations;
            if alg == Algorithm::FlorisRefined {
                let r = refine::refine_flat(&x, problem, &config.refine)?;
                iterations += r.iterations;
                x = r.flat_positions();
            }
            (x, iterations, Some(sol.rank1_ratio >= RANK1_THRESHOLD))
        }
        Algorithm::FlorisPerNode => {
            let mut x = Vec::with_capacity(truth.len());
            let mut iterations = 0;
            for i in 0..problem.num_nodes() {
                let sub = node_anchor_problem(problem, i);
                let sol = floris::solve_floris_with(&sub.to_floris()?, &config.sdp)?;
                iterations += sol.sdp_iterations;
                x.extend_from_slice(sol.x_hat.as_slice());
            }
            (x, iterations, None)
        }
        Algorithm::Cloris | Algorithm::ClorisRangeOnly | Algorithm::ClorisRefined | Algorithm::ClorisRefinedMl => {
            let settings = ClorisSettings { seed: init_seed, ..config.cloris };
            let r = cloris::solve_cloris_with(problem, &settings, None)?;
            let mut iterations = r.iterations;
            let mut x = r.flat_positions();
            if alg == Algorithm::ClorisRefined {
                let rr = refine::refine_flat(&x, problem, &config.refine)?;
                iterations += rr.iterations;
                x = rr.flat_positions();
            } else if alg == Algorithm::ClorisRefinedMl {
                let var = refine::estimate_variances(problem, truth, eta, config.variance_trials, aux_seed)?;
                let cfg = RefineConfig { cost_kind: CostKind::HuangMl(var), ..config.refine.clone() };
                let rr = refine::refine_flat(&x, problem, &cfg)?;
                iterations += rr.iterations;
                x = rr.flat_positions();
            }
            (x, iterations, None)
        }
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let n = problem.n;
    let sq_error = x
        .chunks(n)
        .zip(truth.chunks(n))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum())
        .collect();
    Ok(RunOutcome { sq_error, iterations, runtime_ms, rank1 })
}

/// Node `i` alone with its anchor measurements.
pub fn node_anchor_problem(problem: &NetworkProblem, i: usize) -> NetworkProblem {
    fn pick<T: Clone>(edges: &[AnchorEdge<T>], i: usize) -> Vec<AnchorEdge<T>> {
        edges.iter().filter(|e| e.node == i).map(|e| AnchorEdge { node: 0, ..e.clone() }).collect()
    }
    NetworkProblem {
        n: problem.n,
        node_ids: vec![problem.node_ids[i].clone()],
        range_edges: vec![],
        bearing_edges: vec![],
        anchor_ranges: pick(&problem.anchor_ranges, i),
        anchor_bearings: pick(&problem.anchor_bearings, i),
        anchor_positions: problem.anchor_positions.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Anchor, Edge, Node};

    fn p(c: &[f64]) -> Position {
        Position::new(c.to_vec()).unwrap()
    }

    fn one_node(anchors: &[(&str, &[f64], AnchorKind)]) -> Scenario {
        let anchors: Vec<Anchor> =
            anchors.iter().map(|(id, c, k)| Anchor { id: id.to_string(), pos: p(c), kind: *k }).collect();
        let edges = anchors
            .iter()
            .map(|a| Edge { from: a.id.clone(), to: "x".into(), types: vec![type_for(a.kind)] })
            .collect();
        Scenario { dim: 2, anchors, nodes: vec![Node { id: "x".into(), pos: Some(p(&[0.4, 0.3])) }], edges, measurements: None }
    }

    #[test]
    fn same_seed_same_scenario() {
        let a = generate_scenario(ScenarioKind::SingleSourceRandom, 3, AnchorCounts::SINGLE_SOURCE, 9).unwrap();
        let b = generate_scenario(ScenarioKind::SingleSourceRandom, 3, AnchorCounts::SINGLE_SOURCE, 9).unwrap();
        let c = generate_scenario(ScenarioKind::SingleSourceRandom, 3, AnchorCounts::SINGLE_SOURCE, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.count_anchors(AnchorKind::Range), 8);
        assert_eq!(a.count_anchors(AnchorKind::Visual), 4);
        assert_eq!(a.nodes.len(), 1);
    }

    #[test]
    fn zero_noise_is_exact() {
        let s = generate_scenario(ScenarioKind::SingleSourceRandom, 2, AnchorCounts::SINGLE_SOURCE, 3).unwrap();
        let ms = synthesize_measurements(&s, NoiseModel { eta: 0.0, seed: 1 }).unwrap();
        let x = s.nodes[0].pos.clone().unwrap();
        for r in &ms.ranges {
            let a = s.anchors.iter().find(|a| a.id == r.observer).unwrap();
            assert!((r.distance - (x.coords() - a.pos.coords()).norm()).abs() < 1e-15);
        }
        for b in &ms.bearings {
            let a = s.anchors.iter().find(|a| a.id == b.observer).unwrap();
            let u = (x.coords() - a.pos.coords()).normalize();
            assert!((b.bearing.direction() - u).norm() < 1e-15);
        }
    }

    #[test]
    fn perturbation_statistics() {
        // E‖w‖² = n η² ‖δ₀‖², and each coordinate of w has std η‖δ₀‖.
        let delta0 = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        let eta = 0.1;
        let mut rng = rng_stream(5, 0, Stream::Aux);
        let m = 20_000;
        let (mut s1, mut s2) = (DVector::zeros(3), 0.0);
        for _ in 0..m {
            let w = perturb(&delta0, eta, &mut rng).unwrap() - &delta0;
            s2 += w.norm_squared();
            s1 += w;
        }
        let sigma = eta * 5.0;
        assert!((s1 / m as f64).amax() < 4.0 * sigma / (m as f64).sqrt());
        let ratio = s2 / m as f64 / (3.0 * sigma * sigma);
        assert!((ratio - 1.0).abs() < 0.03, "{ratio}");
    }

    #[test]
    fn range_and_bearing_share_displacement() {
        let mut s = one_node(&[("a", &[0.0, 0.0], AnchorKind::Range)]);
        s.nodes.push(Node { id: "y".into(), pos: Some(p(&[0.8, 0.6])) });
        s.edges.insert(0, Edge { from: "x".into(), to: "y".into(), types: vec![MeasurementType::Range, MeasurementType::Bearing] });
        let ms = synthesize_measurements(&s, NoiseModel { eta: 0.3, seed: 2 }).unwrap();
        let delta = ms.bearings[0].bearing.direction() * ms.ranges[0].distance;
        let mut rng = rng_stream(2, 0, Stream::Noise);
        let direct = perturb(&DVector::from_vec(vec![0.4, 0.3]), 0.3, &mut rng).unwrap();
        assert!((delta - direct).norm() < 1e-14);
    }

    #[test]
    fn common_random_numbers_across_eta() {
        let s = generate_scenario(ScenarioKind::SingleSourceRandom, 2, AnchorCounts::SINGLE_SOURCE, 4).unwrap();
        let lo = synthesize_measurements(&s, NoiseModel { eta: 0.01, seed: 8 }).unwrap();
        let hi = synthesize_measurements(&s, NoiseModel { eta: 0.02, seed: 8 }).unwrap();
        let x = s.nodes[0].pos.clone().unwrap();
        for (a, b) in lo.ranges.iter().zip(&hi.ranges) {
            let anchor = s.anchors.iter().find(|q| q.id == a.observer).unwrap();
            let d0 = (x.coords() - anchor.pos.coords()).norm();
            // Same Gaussian draws at both η, so range errors share their sign.
            assert_eq!((a.distance - d0).signum(), (b.distance - d0).signum());
        }
    }

    #[test]
    fn rmse_examples() {
        let t = vec![vec![p(&[0.0, 0.0]), p(&[1.0, 1.0])]];
        let e = vec![vec![p(&[3.0, 4.0]), p(&[1.0, 1.0])]];
        assert!((rmse(&t, &e).unwrap() - (25.0f64 / 2.0).sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert!(rmse(&t, &[]).is_err());
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
    }

    #[test]
    fn localizability_examples() {
        let r = AnchorKind::Range;
        let v = AnchorKind::Visual;
        assert!(!localizability_check(&one_node(&[("a", &[0.0, 0.0], r)]), 5).unwrap());
        assert!(localizability_check(&one_node(&[("a", &[0.0, 0.0], r), ("b", &[1.0, 0.0], v)]), 5).unwrap());
        assert!(localizability_check(&one_node(&[("a", &[0.0, 0.0], r), ("b", &[1.0, 0.0], r), ("c", &[0.0, 1.0], r)]), 5)
            .unwrap());
        assert!(localizability_check(&one_node(&[]), 3).is_err());
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let src = ScenarioSource::single_source(2);
        let algs = [Algorithm::Floris, Algorithm::Cloris];
        let a = run_monte_carlo(&src, &algs, &[0.01, 0.1], 6, 21).unwrap();
        let b = run_monte_carlo(&src, &algs, &[0.01, 0.1], 6, 21).unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rmse, y.rmse);
            assert_eq!(x.algorithm, y.algorithm);
        }
        assert!(a[0].rmse < a[2].rmse);
        assert!(a[0].rank1_fraction.is_some() && a[1].rank1_fraction.is_none());
    }

    #[test]
    fn canned_scenarios_load() {
        for dim in [2, 3] {
            let s = canned_scenario(dim).unwrap();
            assert_eq!(s.dim, dim);
            assert_eq!(s.count_anchors(AnchorKind::Range), 8);
            assert_eq!(s.count_anchors(AnchorKind::Visual), 5);
            assert_eq!(s.nodes.len(), 4);
        }
    }
}
