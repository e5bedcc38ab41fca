//! Local refinement on the original (nonconvex) costs.
//!
//! Relaxed estimates are good starting points; polishing them against the
//! hybrid least-squares cost, or against a range/azimuth/elevation Gaussian
//! likelihood, removes most of the relaxation bias. Both optimizers keep the
//! best point seen, so the returned cost never exceeds the starting cost.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::geometry::{norm, Position};
use crate::network::{flatten, unflatten, NetworkProblem};
use crate::report::SolverReport;

/// Lower bound for estimated variances (noiseless or degenerate terms).
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineMethod {
    /// Nelder–Mead: reflection 1, expansion 2, contraction 0.5, shrink 0.5,
    /// restarted once from the best vertex.
    Simplex,
    /// Steepest descent with Armijo backtracking.
    Gradient,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostKind {
    /// The hybrid least-squares cost: squared distances to spheres and lines.
    HybridLs,
    /// Range/azimuth/elevation Gaussian likelihood (3D only).
    HuangMl(HuangVariances),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineConfig {
    pub method: RefineMethod,
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    pub cost_kind: CostKind,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { method: RefineMethod::Simplex, max_evals: 20_000, x_tol: 1e-9, f_tol: 1e-12, cost_kind: CostKind::HybridLs }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_tol > 0.0 && self.f_tol > 0.0) || self.max_evals == 0 {
            return invalid("refinement tolerances must be positive and max_evals nonzero");
        }
        Ok(())
    }
}

/// Per-term noise variances, in the term order of [`NetworkProblem`]:
/// ranges are internode range edges then anchor ranges; azimuth and
/// elevation follow internode bearing edges then anchor bearings.
#[derive(Clone, Debug, PartialEq)]
pub struct HuangVariances {
    pub range: Vec<f64>,
    pub azimuth: Vec<f64>,
    pub elevation: Vec<f64>,
}

impl HuangVariances {
    pub fn uniform(problem: &NetworkProblem, value: f64) -> Self {
        let nr = problem.range_edges.len() + problem.anchor_ranges.len();
        let nb = problem.bearing_edges.len() + problem.anchor_bearings.len();
        Self { range: vec![value; nr], azimuth: vec![value; nb], elevation: vec![value; nb] }
    }

    fn check(&self, problem: &NetworkProblem) -> Result<()> {
        let nr = problem.range_edges.len() + problem.anchor_ranges.len();
        let nb = problem.bearing_edges.len() + problem.anchor_bearings.len();
        if self.range.len() != nr || self.azimuth.len() != nb || self.elevation.len() != nb {
            return invalid("variance vector lengths do not match the problem's terms");
        }
        if self.range.iter().chain(&self.azimuth).chain(&self.elevation).any(|v| !(*v > 0.0)) {
            return invalid("variances must be positive");
        }
        Ok(())
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn azimuth(d: &[f64]) -> f64 {
    d[1].atan2(d[0])
}

fn elevation(d: &[f64]) -> Result<f64> {
    let r = norm(d);
    if r == 0.0 {
        return invalid("zero displacement in an elevation term");
    }
    Ok((d[2] / r).clamp(-1.0, 1.0).acos())
}

/// Displacements matching each term's measurement orientation: internode
/// `x_j − x_i` (bearings point from `i` to `j`), anchor terms `x_i − a_k`.
fn displacements(problem: &NetworkProblem, x: &[f64]) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let p = |i: usize| [x[3 * i], x[3 * i + 1], x[3 * i + 2]];
    let sub = |a: [f64; 3], b: &[f64]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let ranges = problem
        .range_edges
        .iter()
        .map(|e| sub(p(e.j), &p(e.i)))
        .chain(problem.anchor_ranges.iter().map(|e| sub(p(e.node), e.anchor.as_slice())))
        .collect();
    let bearings = problem
        .bearing_edges
        .iter()
        .map(|e| sub(p(e.j), &p(e.i)))
        .chain(problem.anchor_bearings.iter().map(|e| sub(p(e.node), e.anchor.as_slice())))
        .collect();
    (ranges, bearings)
}

/// Weighted squared range, azimuth and elevation residuals; azimuth
/// residuals are wrapped to `(−π, π]`.
pub fn huang_cost(x: &[f64], problem: &NetworkProblem, variances: &HuangVariances) -> Result<f64> {
    if problem.n != 3 {
        return invalid("the range/azimuth/elevation likelihood is defined in 3D only");
    }
    if x.len() != 3 * problem.num_nodes() {
        return invalid("iterate has the wrong length");
    }
    variances.check(problem)?;
    let measured_r = problem.range_edges.iter().map(|e| e.value).chain(problem.anchor_ranges.iter().map(|e| e.value));
    let measured_u = problem
        .bearing_edges
        .iter()
        .map(|e| e.value.as_slice())
        .chain(problem.anchor_bearings.iter().map(|e| e.value.as_slice()));
    let (dr, db) = displacements(problem, x);
    let mut total = 0.0;
    for ((r, d), var) in measured_r.zip(&dr).zip(&variances.range) {
        total += (r - norm(d)).powi(2) / var;
    }
    for (k, (u, d)) in measured_u.zip(&db).enumerate() {
        let phi = wrap_angle(azimuth(u) - azimuth(d));
        let alpha = elevation(u)? - elevation(d)?;
        total += phi * phi / variances.azimuth[k] + alpha * alpha / variances.elevation[k];
    }
    Ok(total)
}

/// Sample variances of the range, azimuth and elevation errors produced by
/// the simulator's noise model at the true positions `truth`.
pub fn estimate_variances(problem: &NetworkProblem, truth: &[f64], eta: f64, trials: usize, seed: u64) -> Result<HuangVariances> {
    if problem.n != 3 {
        return invalid("variance estimation for the likelihood is 3D only");
    }
    if trials < 100 {
        return invalid(format!("need at least 100 trials, got {trials}"));
    }
    if !(eta >= 0.0) || truth.len() != 3 * problem.num_nodes() {
        return invalid("eta must be nonnegative and truth must match the problem");
    }
    let (dr, db) = displacements(problem, truth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb = |d: &[f64; 3]| -> [f64; 3] {
        let s = eta * norm(d);
        loop {
            let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let out = [d[0] + s * g[0], d[1] + s * g[1], d[2] + s * g[2]];
            if norm(&out) > 0.0 {
                return out;
            }
        }
    };
    let variance = |samples: &[f64]| -> f64 {
        let m = samples.iter().sum::<f64>() / samples.len() as f64;
        let v = samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        v.max(VARIANCE_FLOOR)
    };
    let mut range = Vec::with_capacity(dr.len());
    for d in &dr {
        let r0 = norm(d);
        let s: Vec<f64> = (0..trials).map(|_| norm(&perturb(d)) - r0).collect();
        range.push(variance(&s));
    }
    let mut azimuths = Vec::with_capacity(db.len());
    let mut elevations = Vec::with_capacity(db.len());
    for d in &db {
        let (phi0, alpha0) = (azimuth(d), elevation(d)?);
        let mut sp = Vec::with_capacity(trials);
        let mut sa = Vec::with_capacity(trials);
        for _ in 0..trials {
            let e = perturb(d);
            sp.push(wrap_angle(azimuth(&e) - phi0));
            sa.push(elevation(&e)? - alpha0);
        }
        azimuths.push(variance(&sp));
        elevations.push(variance(&sa));
    }
    Ok(HuangVariances { range, azimuth: azimuths, elevation: elevations })
}

fn objective<'a>(problem: &'a NetworkProblem, kind: &'a CostKind) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| {
        let v = match kind {
            CostKind::HybridLs => problem.cost(x),
            CostKind::HuangMl(var) => huang_cost(x, problem, var),
        };
        match v {
            Ok(f) if f.is_finite() => f,
            _ => f64::INFINITY,
        }
    }
}

/// Gradient of the hybrid least-squares cost; at a sphere center the
/// projection is taken as the center itself (zero contribution).
pub fn hybrid_gradient(problem: &NetworkProblem, x: &[f64]) -> Result<Vec<f64>> {
    problem.cost(x)?;
    let n = problem.n;
    let mut g = vec![0.0; x.len()];
    let mut z = vec![0.0; n];
    let add = |g: &mut [f64], i: usize, z: &[f64], sign: f64| {
        for k in 0..n {
            g[i * n + k] += sign * 2.0 * z[k];
        }
    };
    let sphere_res = |z: &mut [f64], d: f64| {
        let r = norm(z);
        let s = if r > 0.0 { 1.0 - d / r } else { 0.0 };
        z.iter_mut().for_each(|v| *v *= s);
    };
    let line_res = |z: &mut [f64], u: &[f64]| {
        let t: f64 = z.iter().zip(u).map(|(a, b)| a * b).sum();
        z.iter_mut().zip(u).for_each(|(v, b)| *v -= t * b);
    };
    for e in &problem.range_edges {
        (0..n).for_each(|k| z[k] = x[e.i * n + k] - x[e.j * n + k]);
        sphere_res(&mut z, e.value);
        add(&mut g, e.i, &z, 1.0);
        add(&mut g, e.j, &z, -1.0);
    }
    for e in &problem.bearing_edges {
        (0..n).for_each(|k| z[k] = x[e.i * n + k] - x[e.j * n + k]);
        line_res(&mut z, e.value.as_slice());
        add(&mut g, e.i, &z, 1.0);
        add(&mut g, e.j, &z, -1.0);
    }
    for e in &problem.anchor_ranges {
        (0..n).for_each(|k| z[k] = x[e.node * n + k] - e.anchor[k]);
        sphere_res(&mut z, e.value);
        add(&mut g, e.node, &z, 1.0);
    }
    for e in &problem.anchor_bearings {
        (0..n).for_each(|k| z[k] = x[e.node * n + k] - e.anchor[k]);
        line_res(&mut z, e.value.as_slice());
        add(&mut g, e.node, &z, 1.0);
    }
    Ok(g)
}

struct Outcome {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    evals: usize,
    converged: bool,
}

/// Refines positions against the configured cost.
pub fn refine(x0: &[Position], problem: &NetworkProblem, config: &RefineConfig) -> Result<SolverReport> {
    refine_flat(&flatten(x0), problem, config)
}

pub fn refine_flat(x0: &[f64], problem: &NetworkProblem, config: &RefineConfig) -> Result<SolverReport> {
    config.validate()?;
    problem.validate()?;
    if x0.len() != problem.n * problem.num_nodes() || x0.iter().any(|v| !v.is_finite()) {
        return invalid("starting point has the wrong length or non-finite entries");
    }
    if let CostKind::HuangMl(var) = &config.cost_kind {
        huang_cost(x0, problem, var)?;
    }
    let f = objective(problem, &config.cost_kind);
    let f0 = f(x0);
    if !f0.is_finite() {
        return invalid("cost is not finite at the starting point");
    }
    let start = Instant::now();
    let out = match config.method {
        RefineMethod::Simplex => {
            let first = nelder_mead(&f, x0, f0, config.max_evals, config.x_tol, config.f_tol);
            if first.evals < config.max_evals {
                let second = nelder_mead(&f, &first.x, first.f, config.max_evals - first.evals, config.x_tol, config.f_tol);
                Outcome {
                    iterations: first.iterations + second.iterations,
                    evals: first.evals + second.evals,
                    ..second
                }
            } else {
                first
            }
        }
        RefineMethod::Gradient => gradient_descent(&f, problem, &config.cost_kind, x0, f0, config),
    };
    debug_assert!(out.f <= f0);
    let name = match (&config.method, &config.cost_kind) {
        (RefineMethod::Simplex, CostKind::HybridLs) => "refine-simplex",
        (RefineMethod::Simplex, CostKind::HuangMl(_)) => "refine-simplex-ml",
        (RefineMethod::Gradient, CostKind::HybridLs) => "refine-gradient",
        (RefineMethod::Gradient, CostKind::HuangMl(_)) => "refine-gradient-ml",
    };
    Ok(SolverReport {
        algorithm: name.into(),
        node_ids: problem.node_ids.clone(),
        positions: unflatten(&out.x, problem.n)?,
        iterations: out.iterations,
        cost: out.f,
        gradient_norm: None,
        residual: None,
        rank1_ratio: None,
        converged: out.converged,
        unidentified: vec![],
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        rmse: None,
    })
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn nelder_mead(f: &impl Fn(&[f64]) -> f64, x0: &[f64], f0: f64, max_evals: usize, x_tol: f64, f_tol: f64) -> Outcome {
    let dim = x0.len();
    // Initial simplex: 5% steps along each axis (0.00025 for zero coordinates).
    let mut verts: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    let mut evals = 0;
    for k in 0..dim {
        let mut v = x0.to_vec();
        v[k] = if v[k] != 0.0 { 1.05 * v[k] } else { 0.00025 };
        let fv = f(&v);
        evals += 1;
        verts.push((v, fv));
    }
    let mut iterations = 0;
    let mut converged = false;
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };
    loop {
        verts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &verts[0];
        let f_spread = verts.iter().map(|v| (v.1 - best.1).abs()).fold(0.0, f64::max);
        let x_spread = verts
            .iter()
            .flat_map(|v| v.0.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= f_tol && x_spread <= x_tol {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }
        iterations += 1;
        let mut c = vec![0.0; dim];
        for v in &verts[..dim] {
            c.iter_mut().zip(&v.0).for_each(|(s, x)| *s += x / dim as f64);
        }
        let (worst, f_worst) = verts[dim].clone();
        let f_second = verts[dim - 1].1.max(verts[0].1);
        let xr = combine(&c, &worst, -REFLECT);
        let fr = f(&xr);
        evals += 1;
        if fr < verts[0].1 {
            let xe = combine(&c, &xr, EXPAND);
            let fe = f(&xe);
            evals += 1;
            verts[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            verts[dim] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < f_worst {
            let xc = combine(&c, &xr, CONTRACT);
            let fc = f(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = combine(&c, &worst, CONTRACT);
            let fc = f(&xc);
            (xc, fc, fc < f_worst)
        };
        evals += 1;
        if accept {
            verts[dim] = (xc, fc);
            continue;
        }
        let x_best = verts[0].0.clone();
        for v in verts.iter_mut().skip(1) {
            v.0 = combine(&x_best, &v.0, SHRINK);
            v.1 = f(&v.0);
            evals += 1;
        }
    }
    verts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = verts.swap_remove(0);
    // The starting point is a vertex of the first simplex and only ever
    // replaced by better points, so fx ≤ f0.
    Outcome { x, f: fx, iterations, evals, converged }
}

fn gradient_descent(
    f: &impl Fn(&[f64]) -> f64,
    problem: &NetworkProblem,
    kind: &CostKind,
    x0: &[f64],
    f0: f64,
    config: &RefineConfig,
) -> Outcome {
    let grad = |x: &[f64]| -> Vec<f64> {
        match kind {
            CostKind::HybridLs => hybrid_gradient(problem, x).unwrap_or_else(|_| vec![0.0; x.len()]),
            CostKind::HuangMl(_) => {
                let h = 1e-7;
                let mut xp = x.to_vec();
                (0..x.len())
                    .map(|k| {
                        let orig = xp[k];
                        xp[k] = orig + h;
                        let fp = f(&xp);
                        xp[k] = orig - h;
                        let fm = f(&xp);
                        xp[k] = orig;
                        let d = (fp - fm) / (2.0 * h);
                        if d.is_finite() { d } else { 0.0 }
                    })
                    .collect()
            }
        }
    };
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut evals = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut step = 1.0;
    while evals < config.max_evals {
        let g = grad(&x);
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg.sqrt() <= config.f_tol {
            converged = true;
            break;
        }
        iterations += 1;
        step *= 2.0;
        let mut accepted = false;
        while evals < config.max_evals {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let ft = f(&trial);
            evals += 1;
            if ft <= fx - 1e-4 * step * gg {
                let moved = step * gg.sqrt();
                let df = fx - ft;
                x = trial;
                fx = ft;
                accepted = true;
                converged = moved <= config.x_tol && df <= config.f_tol;
                break;
            }
            step *= 0.5;
            if step * gg.sqrt() < 1e-3 * config.x_tol {
                break;
            }
        }
        if !accepted {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Outcome { x, f: fx, iterations, evals, converged }
}

/// Azimuth and elevation of a 3D direction.
pub fn spherical_angles(d: &DVector<f64>) -> Result<(f64, f64)> {
    if d.len() != 3 {
        return invalid("spherical angles need a 3D vector");
    }
    Ok((azimuth(d.as_slice()), elevation(d.as_slice()).map_err(|_| Error::InvalidArgument("zero vector".into()))?))
}
