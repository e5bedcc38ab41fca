//! Cooperative localization by the disk relaxation and Nesterov's
//! accelerated gradient method.
//!
//! Each sphere in the hybrid network cost is replaced by its convex hull, a
//! ball; lines are already convex. The relaxed cost
//!
//! ```text
//! f̂(x) = Σ_{i~j} ½D²(x_i − x_j) + Σ_i Σ_k ½D²(x_i − a_k)
//! ```
//!
//! has gradient `z − P(z)` per term. Because balls and lines through the
//! origin are symmetric, `P(−z) = −P(z)`, so every internode edge can use the
//! argument `x_i − x_j` with weight +1 at both endpoints.
//!
//! Iterations are synchronous: all nodes read the same snapshot, so running
//! the per-node updates in parallel gives bitwise the same result.

use std::time::Instant;

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calib::CalibrationResult;
use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_residual, line_residual, norm, Bearing};
use crate::network::{unflatten, NetworkProblem};
use crate::report::SolverReport;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 50_000;

#[derive(Clone, Copy, Debug)]
pub struct ClorisSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Spread node updates over the rayon pool.
    pub parallel: bool,
}

impl Default for ClorisSettings {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS, seed: 0, parallel: false }
    }
}

#[derive(Clone, Copy, Debug)]
enum Term<'a> {
    Ball(f64),
    Line(&'a [f64]),
}

impl Term<'_> {
    fn residual(&self, z: &[f64], out: &mut [f64]) {
        match *self {
            Term::Ball(r) => ball_residual(z, r, out),
            Term::Line(u) => line_residual(z, u, out),
        }
    }
}

/// Per-node adjacency lists built once per problem.
struct Local<'a> {
    neighbors: Vec<Vec<(usize, Term<'a>)>>,
    anchors: Vec<Vec<(&'a [f64], Term<'a>)>>,
}

impl<'a> Local<'a> {
    fn new(p: &'a NetworkProblem) -> Self {
        let nn = p.num_nodes();
        let mut neighbors = vec![Vec::new(); nn];
        let mut anchors = vec![Vec::new(); nn];
        for e in &p.range_edges {
            neighbors[e.i].push((e.j, Term::Ball(e.value)));
            neighbors[e.j].push((e.i, Term::Ball(e.value)));
        }
        for e in &p.bearing_edges {
            neighbors[e.i].push((e.j, Term::Line(e.value.as_slice())));
            neighbors[e.j].push((e.i, Term::Line(e.value.as_slice())));
        }
        for e in &p.anchor_ranges {
            anchors[e.node].push((e.anchor.as_slice(), Term::Ball(e.value)));
        }
        for e in &p.anchor_bearings {
            anchors[e.node].push((e.anchor.as_slice(), Term::Line(e.value.as_slice())));
        }
        Self { neighbors, anchors }
    }

    /// `∇g_i(w) + ∇h_i(w)` written into `out`.
    fn gradient(&self, i: usize, w: &[f64], n: usize, out: &mut [f64]) {
        out.fill(0.0);
        let wi = &w[i * n..(i + 1) * n];
        let mut z = [0.0; 8];
        let mut r = [0.0; 8];
        let mut zv;
        let mut rv;
        let (z, r): (&mut [f64], &mut [f64]) = if n <= 8 {
            (&mut z[..n], &mut r[..n])
        } else {
            zv = vec![0.0; n];
            rv = vec![0.0; n];
            (&mut zv[..], &mut rv[..])
        };
        for &(j, term) in &self.neighbors[i] {
            let wj = &w[j * n..(j + 1) * n];
            for k in 0..n {
                z[k] = wi[k] - wj[k];
            }
            term.residual(z, r);
            for k in 0..n {
                out[k] += r[k];
            }
        }
        for &(a, term) in &self.anchors[i] {
            for k in 0..n {
                z[k] = wi[k] - a[k];
            }
            term.residual(z, r);
            for k in 0..n {
                out[k] += r[k];
            }
        }
    }
}

/// `L = 2δ_max + A_max`: twice the largest internode degree (range plus
/// bearing edges) plus the largest number of anchor measurements at a node.
pub fn lipschitz_bound(problem: &NetworkProblem) -> Result<f64> {
    let nn = problem.num_nodes();
    if nn == 0 {
        return invalid("network has no nodes");
    }
    let mut degree = vec![0usize; nn];
    let mut anchors = vec![0usize; nn];
    for e in &problem.range_edges {
        degree[e.i] += 1;
        degree[e.j] += 1;
    }
    for e in &problem.bearing_edges {
        degree[e.i] += 1;
        degree[e.j] += 1;
    }
    for e in &problem.anchor_ranges {
        anchors[e.node] += 1;
    }
    for e in &problem.anchor_bearings {
        anchors[e.node] += 1;
    }
    for (i, id) in problem.node_ids.iter().enumerate() {
        if degree[i] + anchors[i] == 0 {
            log::warn!("node {id} has no measurements; its position is unidentifiable");
        }
    }
    let l = 2.0 * *degree.iter().max().unwrap() as f64 + *anchors.iter().max().unwrap() as f64;
    if l == 0.0 {
        return invalid("network has no measurements");
    }
    Ok(l)
}

/// Internode part of the gradient at node `i`:
/// `Σ_j (w_i − w_j) − P(w_i − w_j)` over range and bearing neighbors.
pub fn gradient_g(i: usize, w: &[f64], problem: &NetworkProblem) -> Result<DVector<f64>> {
    check_index(i, w, problem)?;
    let only_edges = NetworkProblem { anchor_ranges: vec![], anchor_bearings: vec![], ..problem.clone() };
    let local = Local::new(&only_edges);
    let mut out = vec![0.0; problem.n];
    local.gradient(i, w, problem.n, &mut out);
    Ok(DVector::from_vec(out))
}

/// Anchor part of the gradient at node `i`, evaluated at `w_i`:
/// `Σ_k (w_i − a_k) − P(w_i − a_k)`.
pub fn gradient_h(i: usize, w_i: &[f64], problem: &NetworkProblem) -> Result<DVector<f64>> {
    if i >= problem.num_nodes() || w_i.len() != problem.n {
        return invalid("node index or position dimension out of range");
    }
    let only_anchors = NetworkProblem { range_edges: vec![], bearing_edges: vec![], ..problem.clone() };
    let local = Local::new(&only_anchors);
    // Only node i's slot is read when there are no internode edges.
    let mut w = vec![0.0; problem.n * problem.num_nodes()];
    w[i * problem.n..(i + 1) * problem.n].copy_from_slice(w_i);
    let mut out = vec![0.0; problem.n];
    local.gradient(i, &w, problem.n, &mut out);
    Ok(DVector::from_vec(out))
}

/// Full gradient of the relaxed cost, concatenated over nodes.
pub fn relaxed_gradient(problem: &NetworkProblem, x: &[f64]) -> Result<Vec<f64>> {
    check_index(0, x, problem)?;
    let local = Local::new(problem);
    let n = problem.n;
    let mut g = vec![0.0; x.len()];
    for (i, gi) in g.chunks_mut(n).enumerate() {
        local.gradient(i, x, n, gi);
    }
    Ok(g)
}

fn check_index(i: usize, w: &[f64], problem: &NetworkProblem) -> Result<()> {
    if i >= problem.num_nodes() {
        return invalid(format!("node index {i} out of range"));
    }
    if w.len() != problem.n * problem.num_nodes() {
        return invalid("iterate has the wrong length");
    }
    Ok(())
}

/// Iterates `x(k−1)` and `x(k−2)` plus the iteration counter.
#[derive(Clone, Debug, PartialEq)]
pub struct ClorisState {
    pub x_prev: Vec<f64>,
    pub x_prev2: Vec<f64>,
    /// Number of completed iterations.
    pub k: usize,
    pub lipschitz: f64,
    /// Largest per-node gradient norm seen at the last extrapolated point.
    pub gradient_norm: f64,
}

impl ClorisState {
    /// Starts from `x0` with `x(−1) = x(0)`, so the first extrapolation is null.
    pub fn new(problem: &NetworkProblem, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != problem.n * problem.num_nodes() || x0.iter().any(|v| !v.is_finite()) {
            return invalid("initial iterate has the wrong length or non-finite entries");
        }
        Ok(Self {
            x_prev2: x0.clone(),
            x_prev: x0,
            k: 0,
            lipschitz: lipschitz_bound(problem)?,
            gradient_norm: f64::INFINITY,
        })
    }

    /// Uniform draw inside the anchor bounding box (the unit box without anchors).
    pub fn random(problem: &NetworkProblem, seed: u64) -> Result<Self> {
        Self::new(problem, random_start(problem, seed))
    }
}

pub fn random_start(problem: &NetworkProblem, seed: u64) -> Vec<f64> {
    let n = problem.n;
    let (lo, hi) = problem
        .anchor_box()
        .unwrap_or_else(|| (DVector::zeros(n), DVector::from_element(n, 1.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..problem.num_nodes() * n)
        .map(|idx| {
            let k = idx % n;
            let u: f64 = rng.random();
            lo[k] + u * (hi[k] - lo[k])
        })
        .collect()
}

/// Momentum coefficient `(k − 2)/(k + 1)` used at iteration `k`.
pub fn momentum(k: usize) -> f64 {
    (k as f64 - 2.0) / (k as f64 + 1.0)
}

/// One synchronous iteration.
pub fn step(state: &ClorisState, problem: &NetworkProblem) -> Result<ClorisState> {
    check_index(0, &state.x_prev, problem)?;
    let local = Local::new(problem);
    Ok(step_local(state, &local, problem.n, false))
}

fn step_local(state: &ClorisState, local: &Local<'_>, n: usize, parallel: bool) -> ClorisState {
    let k = state.k + 1;
    let beta = momentum(k);
    let w: Vec<f64> = state
        .x_prev
        .iter()
        .zip(&state.x_prev2)
        .map(|(a, b)| a + beta * (a - b))
        .collect();
    let inv_l = 1.0 / state.lipschitz;
    let mut x = vec![0.0; w.len()];
    let update = |(i, xi): (usize, &mut [f64])| -> f64 {
        let mut g = [0.0; 8];
        let mut gv;
        let g: &mut [f64] = if n <= 8 {
            &mut g[..n]
        } else {
            gv = vec![0.0; n];
            &mut gv[..]
        };
        local.gradient(i, &w, n, g);
        for k in 0..n {
            xi[k] = w[i * n + k] - inv_l * g[k];
        }
        norm(g)
    };
    let gnorm = if parallel {
        x.par_chunks_mut(n).enumerate().map(update).reduce(|| 0.0, f64::max)
    } else {
        x.chunks_mut(n).enumerate().map(update).fold(0.0, f64::max)
    };
    ClorisState { x_prev2: state.x_prev.clone(), x_prev: x, k, lipschitz: state.lipschitz, gradient_norm: gnorm }
}

/// Runs the accelerated method from a seeded random start.
pub fn solve_cloris(problem: &NetworkProblem, tol: f64, max_iters: usize, seed: u64) -> Result<SolverReport> {
    solve_cloris_with(problem, &ClorisSettings { tol, max_iters, seed, ..Default::default() }, None)
}

/// Runs the accelerated method from `x0`, or from a seeded random start.
pub fn solve_cloris_with(problem: &NetworkProblem, settings: &ClorisSettings, x0: Option<Vec<f64>>) -> Result<SolverReport> {
    if !(settings.tol > 0.0) {
        return invalid("CLORIS tolerance must be positive");
    }
    problem.validate()?;
    let start = Instant::now();
    let mut state = match x0 {
        Some(x) => ClorisState::new(problem, x)?,
        None => ClorisState::random(problem, settings.seed)?,
    };
    let local = Local::new(problem);
    let n = problem.n;
    let mut converged = false;
    while state.k < settings.max_iters {
        state = step_local(&state, &local, n, settings.parallel);
        if state.gradient_norm <= settings.tol {
            converged = true;
            break;
        }
    }
    if state.x_prev.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("CLORIS iterate diverged".into()));
    }
    let unidentified = problem
        .measurement_counts()
        .iter()
        .zip(&problem.node_ids)
        .filter(|(c, _)| **c == 0)
        .map(|(_, id)| id.clone())
        .collect();
    Ok(SolverReport {
        algorithm: "cloris".into(),
        node_ids: problem.node_ids.clone(),
        cost: problem.relaxed_cost(&state.x_prev)?,
        positions: unflatten(&state.x_prev, n)?,
        iterations: state.k,
        gradient_norm: Some(state.gradient_norm),
        residual: None,
        rank1_ratio: None,
        converged,
        unidentified,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        rmse: None,
    })
}

/// A rigid transform between two camera/marker frames: a point `p_child`
/// in the child frame is `rotation · p_child + translation` in the parent.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseLink {
    pub parent: String,
    pub child: String,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Global-frame bearing from node `i` toward node `j`.
///
/// `chain` links the calibrated visual frame `visual_frame` to node `i`'s
/// camera frame; `i_to_j` is the relative pose of `j` seen from `i`. The
/// rotations along the chain give `i`'s orientation in the visual frame,
/// which maps the `i → j` translation into the visual and then (through the
/// calibration rotation) the global frame.
pub fn internode_bearing_from_poses(
    i_to_j: &PoseLink,
    chain: &[PoseLink],
    visual_frame: &str,
    calib: &CalibrationResult,
) -> Result<Bearing> {
    let mut frame = visual_frame;
    let mut orientation = Matrix3::identity();
    for link in chain {
        if link.parent != frame {
            return Err(Error::NoBearing(format!(
                "pose chain broken: expected a link from {frame}, found {} -> {}",
                link.parent, link.child
            )));
        }
        orientation *= link.rotation;
        frame = &link.child;
    }
    if i_to_j.parent != frame {
        return Err(Error::NoBearing(format!(
            "pose chain ends at {frame} but the relative pose starts at {}",
            i_to_j.parent
        )));
    }
    let dir = calib.r_g_v * orientation * i_to_j.translation;
    if dir.norm() < 1e-12 {
        return Err(Error::NoBearing("relative translation is zero".into()));
    }
    Bearing::from_direction(DVector::from_column_slice(dir.normalize().as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{AnchorEdge, NodeEdge};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(c)
    }

    fn empty(n: usize, nodes: usize) -> NetworkProblem {
        NetworkProblem {
            n,
            node_ids: (0..nodes).map(|i| format!("x{i}")).collect(),
            range_edges: vec![],
            bearing_edges: vec![],
            anchor_ranges: vec![],
            anchor_bearings: vec![],
            anchor_positions: vec![],
        }
    }

    fn bearing(c: &[f64]) -> Bearing {
        Bearing::from_direction(v(c)).unwrap()
    }

    #[test]
    fn lipschitz_examples() {
        let mut p = empty(2, 1);
        p.anchor_ranges.push(AnchorEdge { node: 0, anchor: v(&[0.0, 0.0]), value: 1.0 });
        assert_eq!(lipschitz_bound(&p).unwrap(), 1.0);

        let mut p = empty(2, 2);
        p.range_edges.push(NodeEdge { i: 0, j: 1, value: 1.0 });
        assert_eq!(lipschitz_bound(&p).unwrap(), 2.0);

        let q = 5;
        let mut p = empty(2, q + 1);
        for j in 1..=q {
            p.range_edges.push(NodeEdge { i: 0, j, value: 1.0 });
        }
        assert_eq!(lipschitz_bound(&p).unwrap(), 2.0 * q as f64);

        assert!(lipschitz_bound(&empty(2, 2)).is_err());
    }

    #[test]
    fn lipschitz_bound_dominates_sampled_slopes() {
        // Oracle: ‖∇f̂(x) − ∇f̂(y)‖ / ‖x − y‖ over random pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = empty(2, 3);
        p.range_edges.push(NodeEdge { i: 0, j: 1, value: 0.5 });
        p.bearing_edges.push(NodeEdge { i: 1, j: 2, value: bearing(&[1.0, 1.0]) });
        p.range_edges.push(NodeEdge { i: 0, j: 2, value: 0.3 });
        p.anchor_ranges.push(AnchorEdge { node: 0, anchor: v(&[0.0, 0.0]), value: 0.4 });
        p.anchor_bearings.push(AnchorEdge { node: 2, anchor: v(&[1.0, 0.0]), value: bearing(&[0.0, 1.0]) });
        let l = lipschitz_bound(&p).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let gx = relaxed_gradient(&p, &x).unwrap();
            let gy = relaxed_gradient(&p, &y).unwrap();
            let num: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
        assert!(worst <= l + 1e-12, "{worst} > {l}");
    }

    #[test]
    fn gradient_examples() {
        let mut p = empty(2, 2);
        p.range_edges.push(NodeEdge { i: 0, j: 1, value: 1.0 });
        assert_eq!(gradient_g(0, &[0.3, 0.3, 0.3, 0.3], &p).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(gradient_g(0, &[2.0, 0.0, 0.0, 0.0], &p).unwrap(), v(&[1.0, 0.0]));
        let mut p = empty(2, 2);
        p.bearing_edges.push(NodeEdge { i: 0, j: 1, value: bearing(&[1.0, 0.0]) });
        assert_eq!(gradient_g(0, &[3.0, 4.0, 0.0, 0.0], &p).unwrap(), v(&[0.0, 4.0]));

        let mut p = empty(2, 1);
        p.anchor_ranges.push(AnchorEdge { node: 0, anchor: v(&[0.0, 0.0]), value: 1.0 });
        assert_eq!(gradient_h(0, &[0.6, 0.8], &p).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(gradient_h(0, &[2.0, 0.0], &p).unwrap(), v(&[1.0, 0.0]));
        let mut p = empty(2, 1);
        p.anchor_bearings.push(AnchorEdge { node: 0, anchor: v(&[0.0, 0.0]), value: bearing(&[0.0, 1.0]) });
        assert_eq!(gradient_h(0, &[3.0, 4.0], &p).unwrap(), v(&[3.0, 0.0]));
    }

    #[test]
    fn momentum_coefficients() {
        assert_eq!(momentum(2), 0.0);
        assert_eq!(momentum(5), 0.5);
    }

    #[test]
    fn stationary_point_is_fixed() {
        let mut p = empty(2, 1);
        p.anchor_ranges.push(AnchorEdge { node: 0, anchor: v(&[0.0, 0.0]), value: 1.0 });
        let s = ClorisState { k: 4, ..ClorisState::new(&p, vec![0.6, 0.8]).unwrap() };
        let next = step(&s, &p).unwrap();
        assert_eq!(next.x_prev, vec![0.6, 0.8]);
    }

    #[test]
    fn trilateration_triangle() {
        let x = v(&[0.3, 0.45]);
        let anchors = [v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let mut p = empty(2, 1);
        for a in &anchors {
            p.anchor_ranges.push(AnchorEdge { node: 0, anchor: a.clone(), value: (&x - a).norm() });
        }
        p.anchor_positions = anchors.to_vec();
        // Closed-form trilateration: subtracting circle equations leaves a 2×2 linear system.
        let d: Vec<f64> = anchors.iter().map(|a| (&x - a).norm()).collect();
        let sx = (d[0].powi(2) - d[1].powi(2) + 1.0) / 2.0;
        let sy = (d[0].powi(2) - d[2].powi(2) + 1.0) / 2.0;
        let r = solve_cloris(&p, 1e-10, 200_000, 3).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.positions[0].as_slice()[0], sx, epsilon = 1e-5);
        assert_abs_diff_eq!(r.positions[0].as_slice()[1], sy, epsilon = 1e-5);
    }

    #[test]
    fn unidentifiable_node_is_flagged_and_left_alone() {
        let mut p = empty(2, 2);
        p.anchor_ranges.push(AnchorEdge { node: 0, anchor: v(&[0.0, 0.0]), value: 0.5 });
        p.anchor_positions = vec![v(&[0.0, 0.0]), v(&[1.0, 1.0])];
        let start = random_start(&p, 9);
        let r = solve_cloris(&p, 1e-6, 1000, 9).unwrap();
        assert_eq!(r.unidentified, vec!["x1".to_string()]);
        assert_eq!(r.positions[1].as_slice(), &start[2..4]);
    }

    #[test]
    fn parallel_matches_serial_bitwise() {
        let mut p = empty(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..4 {
            for _ in 0..3 {
                let a = v(&[rng.random(), rng.random(), rng.random()]);
                p.anchor_ranges.push(AnchorEdge { node: i, anchor: a.clone(), value: rng.random() });
                p.anchor_positions.push(a);
            }
            if i > 0 {
                p.range_edges.push(NodeEdge { i: i - 1, j: i, value: 0.3 + 0.1 * k_f(i) });
            }
        }
        p.bearing_edges.push(NodeEdge { i: 0, j: 3, value: bearing(&[1.0, 0.2, 0.1]) });
        let mut s = ClorisSettings { tol: 1e-9, max_iters: 500, seed: 2, parallel: false };
        let a = solve_cloris_with(&p, &s, None).unwrap();
        s.parallel = true;
        let b = solve_cloris_with(&p, &s, None).unwrap();
        assert_eq!(a.flat_positions(), b.flat_positions());
        assert_eq!(a.iterations, b.iterations);
    }

    fn k_f(i: usize) -> f64 {
        i as f64
    }

    fn rot_z(angle: f64) -> Matrix3<f64> {
        nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner()
    }

    fn calib_with(r: Matrix3<f64>) -> CalibrationResult {
        CalibrationResult {
            r_g_v: r,
            t_g_v: Vector3::zeros(),
            t_0: Vector3::zeros(),
            residual_rms: 0.0,
            iterations: 1,
            converged: true,
            objective_history: vec![],
        }
    }

    fn link(parent: &str, child: &str, r: Matrix3<f64>, t: [f64; 3]) -> PoseLink {
        PoseLink { parent: parent.into(), child: child.into(), rotation: r, translation: Vector3::from(t) }
    }

    #[test]
    fn bearing_from_single_link_chain() {
        let calib = calib_with(rot_z(0.3));
        let chain = [link("marker", "i", Matrix3::identity(), [1.0, 2.0, 3.0])];
        let rel = link("i", "j", Matrix3::identity(), [0.0, 2.0, 0.0]);
        let b = internode_bearing_from_poses(&rel, &chain, "marker", &calib).unwrap();
        let expected = rot_z(0.3) * Vector3::new(0.0, 1.0, 0.0);
        assert!((b.direction() - DVector::from_column_slice(expected.as_slice())).amax() < 1e-15);
    }

    #[test]
    fn bearing_follows_quarter_turn() {
        let calib = calib_with(Matrix3::identity());
        let chain = [link("marker", "i", rot_z(std::f64::consts::FRAC_PI_2), [0.0; 3])];
        let rel = link("i", "j", Matrix3::identity(), [1.0, 0.0, 0.0]);
        let b = internode_bearing_from_poses(&rel, &chain, "marker", &calib).unwrap();
        assert!((b.direction() - v(&[0.0, 1.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn bearing_from_two_link_chain_matches_forward_model() {
        // Forward oracle: place frames in the world and compute x_j − x_i directly.
        let r_gv = nalgebra::Rotation3::from_euler_angles(0.1, -0.4, 0.7).into_inner();
        let t_gv = Vector3::new(0.5, -1.0, 2.0);
        let r1 = nalgebra::Rotation3::from_euler_angles(0.3, 0.2, -0.1).into_inner();
        let t1 = Vector3::new(1.0, 0.0, 0.5);
        let r2 = nalgebra::Rotation3::from_euler_angles(-0.5, 0.1, 0.9).into_inner();
        let t2 = Vector3::new(0.2, 0.7, -0.3);
        let t_ij = Vector3::new(0.4, -0.6, 1.1);
        // Visual frame → camera a → camera i; j sits at t_ij in i's frame.
        let x_i_visual = r1 * t2 + t1;
        let x_j_visual = r1 * (r2 * t_ij + t2) + t1;
        let to_global = |p: Vector3<f64>| r_gv * p + t_gv;
        let truth = (to_global(x_j_visual) - to_global(x_i_visual)).normalize();
        let chain = [link("v", "a", r1, t1.into()), link("a", "i", r2, t2.into())];
        let rel = link("i", "j", Matrix3::identity(), t_ij.into());
        let b = internode_bearing_from_poses(&rel, &chain, "v", &calib_with(r_gv)).unwrap();
        assert!((b.direction() - DVector::from_column_slice(truth.as_slice())).amax() < 1e-10);
    }

    #[test]
    fn broken_chain_is_reported() {
        let calib = calib_with(Matrix3::identity());
        let chain = [link("v", "a", Matrix3::identity(), [0.0; 3]), link("b", "i", Matrix3::identity(), [0.0; 3])];
        let rel = link("i", "j", Matrix3::identity(), [1.0, 0.0, 0.0]);
        assert!(matches!(
            internode_bearing_from_poses(&rel, &chain, "v", &calib),
            Err(Error::NoBearing(_))
        ));
    }
}
