//! Single-source hybrid localization by semidefinite relaxation.
//!
//! Each range anchor `a_k` with distance `d_k` contributes a closest point
//! `y_k = a_k + d_k θ_k` with `‖θ_k‖ = 1`; each bearing anchor contributes
//! `y_k = a_k + t_k u_k` with `t_k ≥ 0`. Stacking gives `y = a + R[θ; t]`,
//! and the source is the centroid of the `y_k`, so the dispersion
//! `Σ‖x − y_k‖²` becomes `yᵀJy` with `J` the projector that removes the
//! mean. Writing that as `tr(M W)` with `W = [θ; t; 1][θ; t; 1]ᵀ` and
//! dropping `rank(W) = 1` yields the SDP solved here.
//!
//! Internally anchors are ordered range-first, each group sorted by a
//! deterministic key; results are reported back in input order.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::eigen::jacobi_eigen;
use crate::error::{invalid, Error, Result};
use crate::geometry::{line_dist2, sphere_dist2, Bearing, Position};
use crate::report::SolverReport;
use crate::sdp::{self, EqConstraint, SdpProblem, SdpSettings, SdpSolution, SdpStatus};

/// One measurement between the source and a known anchor.
#[derive(Clone, Debug)]
pub enum SourceTerm {
    Range { anchor: DVector<f64>, distance: f64 },
    Bearing { anchor: DVector<f64>, bearing: Bearing },
}

impl SourceTerm {
    fn anchor(&self) -> &DVector<f64> {
        match self {
            SourceTerm::Range { anchor, .. } | SourceTerm::Bearing { anchor, .. } => anchor,
        }
    }

    fn is_range(&self) -> bool {
        matches!(self, SourceTerm::Range { .. })
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        let key = |t: &SourceTerm| -> Vec<f64> {
            let mut k: Vec<f64> = t.anchor().iter().copied().collect();
            match t {
                SourceTerm::Range { distance, .. } => k.push(*distance),
                SourceTerm::Bearing { bearing, .. } => k.extend(bearing.as_slice()),
            }
            k
        };
        other
            .is_range()
            .cmp(&self.is_range())
            .then_with(|| {
                key(self)
                    .iter()
                    .zip(key(other).iter())
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }
}

#[derive(Clone, Debug)]
pub struct FlorisProblem {
    n: usize,
    /// Canonical order: range terms, then bearing terms.
    terms: Vec<SourceTerm>,
    /// `order[c]` is the input index of canonical term `c`.
    order: Vec<usize>,
}

impl FlorisProblem {
    pub fn new(n: usize, terms: Vec<SourceTerm>) -> Result<Self> {
        if n < 2 {
            return invalid("dimension must be >= 2");
        }
        if terms.is_empty() {
            return invalid("FLORIS needs at least one anchor measurement");
        }
        for t in &terms {
            if t.anchor().len() != n || t.anchor().iter().any(|c| !c.is_finite()) {
                return invalid("anchor position has wrong dimension or non-finite entries");
            }
            match t {
                SourceTerm::Range { distance, .. } if !(distance.is_finite() && *distance >= 0.0) => {
                    return invalid(format!("range must be finite and nonnegative, got {distance}"));
                }
                SourceTerm::Bearing { bearing, .. } if bearing.dim() != n => {
                    return invalid("bearing dimension mismatch");
                }
                _ => {}
            }
        }
        let mut order: Vec<usize> = (0..terms.len()).collect();
        order.sort_by(|&i, &j| terms[i].canonical_cmp(&terms[j]).then(i.cmp(&j)));
        let canonical = order.iter().map(|&i| terms[i].clone()).collect();
        Ok(Self { n, terms: canonical, order })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of anchors `m = |R| + |T|`.
    pub fn m(&self) -> usize {
        self.terms.len()
    }

    pub fn num_ranges(&self) -> usize {
        self.terms.iter().filter(|t| t.is_range()).count()
    }

    pub fn num_bearings(&self) -> usize {
        self.m() - self.num_ranges()
    }

    /// Length of `[θ; t]`: `p = n|R| + |T|`.
    pub fn p(&self) -> usize {
        self.n * self.num_ranges() + self.num_bearings()
    }

    /// Canonical terms (range first).
    pub fn terms(&self) -> &[SourceTerm] {
        &self.terms
    }

    /// Input index of each canonical term.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Stacked anchor vector `a` (length `mn`) in canonical order.
    pub fn stacked_anchors(&self) -> DVector<f64> {
        let n = self.n;
        let mut a = DVector::zeros(self.m() * n);
        for (k, t) in self.terms.iter().enumerate() {
            a.rows_mut(k * n, n).copy_from(t.anchor());
        }
        a
    }

    /// Nonconvex hybrid cost at `x`.
    pub fn cost(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.n];
        self.terms
            .iter()
            .map(|t| {
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi = x[i] - t.anchor()[i];
                }
                match t {
                    SourceTerm::Range { distance, .. } => sphere_dist2(&z, *distance),
                    SourceTerm::Bearing { bearing, .. } => line_dist2(&z, bearing.as_slice()),
                }
            })
            .sum()
    }

    /// Hybrid cost with each bearing term measured to the half-line
    /// `a + t u, t ≥ 0` instead of the full line, which is the set the
    /// relaxation's `t_k ≥ 0` constraints encode.
    pub fn ray_cost(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.n];
        self.terms
            .iter()
            .map(|t| {
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi = x[i] - t.anchor()[i];
                }
                match t {
                    SourceTerm::Range { distance, .. } => sphere_dist2(&z, *distance),
                    SourceTerm::Bearing { bearing, .. } => {
                        let along: f64 = z.iter().zip(bearing.as_slice()).map(|(a, b)| a * b).sum();
                        if along >= 0.0 {
                            line_dist2(&z, bearing.as_slice())
                        } else {
                            z.iter().map(|v| v * v).sum()
                        }
                    }
                }
            })
            .sum()
    }
}

/// The `mn × p` matrix mapping `[θ; t]` to the closest-point offsets: blocks
/// `d_k I_n` for range anchors followed by columns `u_j` for bearing anchors.
pub fn build_r(problem: &FlorisProblem) -> DMatrix<f64> {
    let n = problem.n;
    let mut r = DMatrix::zeros(problem.m() * n, problem.p());
    let mut col = 0;
    for (k, t) in problem.terms.iter().enumerate() {
        match t {
            SourceTerm::Range { distance, .. } => {
                for i in 0..n {
                    r[(k * n + i, col + i)] = *distance;
                }
                col += n;
            }
            SourceTerm::Bearing { bearing, .. } => {
                for i in 0..n {
                    r[(k * n + i, col)] = bearing.as_slice()[i];
                }
                col += 1;
            }
        }
    }
    r
}

/// `J = I_{mn} − (1/m)(1_m 1_mᵀ ⊗ I_n)`.
pub fn build_j(m: usize, n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::identity(m * n, m * n);
    let w = 1.0 / m as f64;
    for bi in 0..m {
        for bj in 0..m {
            for i in 0..n {
                j[(bi * n + i, bj * n + i)] -= w;
            }
        }
    }
    j
}

/// `M = [[RᵀJR, RᵀJa], [aᵀJR, aᵀJa]]`, side `p + 1`.
pub fn build_m(problem: &FlorisProblem) -> DMatrix<f64> {
    let r = build_r(problem);
    let a = problem.stacked_anchors();
    let j = build_j(problem.m(), problem.n);
    let p = problem.p();
    let jr = &j * &r;
    let ja = &j * &a;
    let mut m = DMatrix::zeros(p + 1, p + 1);
    m.view_mut((0, 0), (p, p)).copy_from(&(r.transpose() * &jr));
    let rja = r.transpose() * &ja;
    for i in 0..p {
        m[(i, p)] = rja[i];
        m[(p, i)] = rja[i];
    }
    m[(p, p)] = a.dot(&ja);
    symmetrize(&mut m);
    m
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let q = m.nrows();
    for i in 0..q {
        for j in (i + 1)..q {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Installs `tr(W_[k,k]) = 1` for every range block, `W[p,p] = 1`, and, when
/// `with_sign` is set, `W[t_k, p] ≥ 0` for every bearing scalar.
fn relaxation(cost: DMatrix<f64>, n: usize, num_ranges: usize, num_bearings: usize, with_sign: bool) -> SdpProblem {
    let q = cost.nrows();
    let last = q - 1;
    let mut eq = Vec::with_capacity(num_ranges + 1);
    for k in 0..num_ranges {
        let mut a = DMatrix::zeros(q, q);
        for i in 0..n {
            a[(k * n + i, k * n + i)] = 1.0;
        }
        eq.push(EqConstraint { a, b: 1.0 });
    }
    let mut a = DMatrix::zeros(q, q);
    a[(last, last)] = 1.0;
    eq.push(EqConstraint { a, b: 1.0 });
    let nonneg = if with_sign {
        (0..num_bearings).map(|j| (n * num_ranges + j, last)).collect()
    } else {
        vec![]
    };
    SdpProblem { dim: q, cost, eq_constraints: eq, nonneg_entries: nonneg }
}

#[derive(Clone, Debug)]
pub struct FlorisSolution {
    pub x_hat: Position,
    /// Unit directions, one per range term, in input order.
    pub theta: Vec<DVector<f64>>,
    /// Nonnegative line coordinates, one per bearing term, in input order.
    pub t: Vec<f64>,
    /// Closest points on each sphere or line, one per term, in input order.
    pub y: Vec<DVector<f64>>,
    pub w: DMatrix<f64>,
    pub rank1_ratio: f64,
    /// `tr(MW)` at the returned `W`.
    pub sdp_objective: f64,
    pub sdp_iterations: usize,
    pub sdp_residual: f64,
    /// True when the reduced variant fell back to the full relaxation.
    pub fell_back: bool,
}

/// `σ₁/σ₂` at or above this classifies the relaxation as tight.
pub const RANK1_THRESHOLD: f64 = 20.0;

impl FlorisSolution {
    pub fn is_rank1(&self) -> bool {
        self.rank1_ratio >= RANK1_THRESHOLD
    }

    pub fn to_report(&self, node_id: &str, cost: f64, wall_time_ms: f64) -> SolverReport {
        SolverReport {
            algorithm: if self.fell_back { "floris-reduced(fallback)".into() } else { "floris".into() },
            node_ids: vec![node_id.to_string()],
            positions: vec![self.x_hat.clone()],
            iterations: self.sdp_iterations,
            cost,
            gradient_norm: None,
            residual: Some(self.sdp_residual),
            rank1_ratio: Some(self.rank1_ratio),
            converged: true,
            unidentified: vec![],
            wall_time_ms,
            rmse: None,
        }
    }
}

/// Splits the leading eigenvector of `W` (scaled so its last entry is +1)
/// into unit `θ_k` blocks and clamped `t_k` scalars, in canonical order.
///
/// Falls back to the rightmost column of `W` when the eigenvector's last
/// entry is below `1e-6` in magnitude.
pub fn recover_from_w(w: &DMatrix<f64>, problem: &FlorisProblem) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let q = problem.p() + 1;
    if w.nrows() != q || w.ncols() != q {
        return invalid(format!("W must be {q}x{q}"));
    }
    let v = homogeneous_vector(w)?;
    Ok(split_vector(&v, problem.n, problem.num_ranges(), problem.num_bearings(), true))
}

fn homogeneous_vector(w: &DMatrix<f64>) -> Result<DVector<f64>> {
    let q = w.nrows();
    let last = q - 1;
    let eig = jacobi_eigen(w)?;
    let lead = eig.vectors.column(0).into_owned();
    if lead[last].abs() >= 1e-6 {
        Ok(&lead / lead[last])
    } else {
        let col = w.column(last).into_owned();
        if w[(last, last)].abs() > 1e-12 {
            Ok(&col / w[(last, last)])
        } else {
            Ok(col)
        }
    }
}

fn split_vector(
    v: &DVector<f64>,
    n: usize,
    num_ranges: usize,
    num_bearings: usize,
    clamp: bool,
) -> (Vec<DVector<f64>>, Vec<f64>) {
    let theta = (0..num_ranges)
        .map(|k| unit_or_basis(v.rows(k * n, n).into_owned()))
        .collect();
    let t = (0..num_bearings)
        .map(|j| {
            let tj = v[n * num_ranges + j];
            if clamp {
                tj.max(0.0)
            } else {
                tj
            }
        })
        .collect();
    (theta, t)
}

fn unit_or_basis(v: DVector<f64>) -> DVector<f64> {
    let nv = v.norm();
    if nv > 1e-300 {
        v / nv
    } else {
        let mut e = DVector::zeros(v.len());
        e[0] = 1.0;
        e
    }
}

fn check_sdp(sol: &SdpSolution) -> Result<()> {
    match sol.status {
        SdpStatus::Converged => Ok(()),
        s => Err(Error::Convergence(format!(
            "FLORIS SDP ended with {s:?} after {} iterations (residuals {:.3e} / {:.3e})",
            sol.iterations, sol.primal_residual.max(sol.consensus_residual), sol.dual_residual
        ))),
    }
}

/// Closest points, centroid and input-order bookkeeping.
fn assemble(
    problem: &FlorisProblem,
    theta: Vec<DVector<f64>>,
    t: Vec<f64>,
    sol: SdpSolution,
    fell_back: bool,
) -> Result<FlorisSolution> {
    let n = problem.n;
    let mut y_canon = Vec::with_capacity(problem.m());
    let (mut ri, mut bi) = (0, 0);
    for term in &problem.terms {
        match term {
            SourceTerm::Range { anchor, distance } => {
                let th = if *distance == 0.0 { unit_or_basis(DVector::zeros(n)) } else { theta[ri].clone() };
                y_canon.push(anchor + &th * *distance);
                ri += 1;
            }
            SourceTerm::Bearing { anchor, bearing } => {
                y_canon.push(anchor + bearing.direction() * t[bi]);
                bi += 1;
            }
        }
    }
    let mut centroid = DVector::zeros(n);
    for y in &y_canon {
        centroid += y;
    }
    centroid /= problem.m() as f64;

    // Restore input order.
    let m = problem.m();
    let mut y = vec![DVector::zeros(n); m];
    let mut theta_in: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut t_in: Vec<(usize, f64)> = Vec::new();
    let (mut ri, mut bi) = (0, 0);
    for (c, term) in problem.terms.iter().enumerate() {
        let orig = problem.order[c];
        y[orig] = y_canon[c].clone();
        if term.is_range() {
            theta_in.push((orig, theta[ri].clone()));
            ri += 1;
        } else {
            t_in.push((orig, t[bi]));
            bi += 1;
        }
    }
    theta_in.sort_by_key(|(o, _)| *o);
    t_in.sort_by_key(|(o, _)| *o);

    let ratio = if sol.w.nrows() >= 2 { sdp::rank1_ratio(&sol.w)? } else { f64::INFINITY };
    Ok(FlorisSolution {
        x_hat: Position::from_vector(centroid)?,
        theta: theta_in.into_iter().map(|(_, v)| v).collect(),
        t: t_in.into_iter().map(|(_, v)| v).collect(),
        y,
        rank1_ratio: ratio,
        sdp_objective: sol.objective,
        sdp_iterations: sol.iterations,
        sdp_residual: sol.primal_residual.max(sol.dual_residual),
        w: sol.w,
        fell_back,
    })
}

pub fn solve_floris(problem: &FlorisProblem, sdp_tol: f64) -> Result<FlorisSolution> {
    solve_floris_with(problem, &SdpSettings { tol: sdp_tol, ..SdpSettings::default() })
}

pub fn solve_floris_with(problem: &FlorisProblem, settings: &SdpSettings) -> Result<FlorisSolution> {
    let sdp_problem = relaxation(
        build_m(problem),
        problem.n,
        problem.num_ranges(),
        problem.num_bearings(),
        true,
    );
    let sol = sdp::solve_with(&sdp_problem, settings)?;
    check_sdp(&sol)?;
    let (theta, t) = recover_from_w(&sol.w, problem)?;
    assemble(problem, theta, t, sol, false)
}

/// Variant that drops `t_k ≥ 0` and eliminates `t` in closed form.
///
/// Partitioning the quadratic form over `(θ, t, 1)`, the minimizing
/// `t = −M_tt⁺(M_tθ θ + m_t)` leaves the Schur complement of `M_tt` as the
/// cost of a smaller SDP over `(θ, 1)` of side `n|R| + 1`.
pub fn solve_floris_reduced(problem: &FlorisProblem, sdp_tol: f64) -> Result<FlorisSolution> {
    solve_floris_reduced_with(problem, &SdpSettings { tol: sdp_tol, ..SdpSettings::default() })
}

pub fn solve_floris_reduced_with(problem: &FlorisProblem, settings: &SdpSettings) -> Result<FlorisSolution> {
    let nb = problem.num_bearings();
    if nb == 0 {
        return solve_floris_with(problem, settings);
    }
    let reduced = match ReducedForm::new(problem) {
        Some(r) => r,
        None => {
            log::warn!("singular bearing block in reduced FLORIS; solving the full relaxation");
            let mut s = solve_floris_with(problem, settings)?;
            s.fell_back = true;
            return Ok(s);
        }
    };
    let nr = problem.num_ranges();
    let n = problem.n;
    let sdp_problem = relaxation(reduced.cost.clone(), n, nr, 0, false);
    let sol = sdp::solve_with(&sdp_problem, settings)?;
    check_sdp(&sol)?;
    let v = homogeneous_vector(&sol.w)?;
    let (theta, _) = split_vector(&v, n, nr, 0, false);
    let t = reduced.bearing_scalars(&theta);
    assemble(problem, theta, t, sol, false)
}

struct ReducedForm {
    cost: DMatrix<f64>,
    /// `−M_tt⁻¹ M_tθ`
    gain: DMatrix<f64>,
    /// `−M_tt⁻¹ m_t`
    offset: DVector<f64>,
}

impl ReducedForm {
    fn new(problem: &FlorisProblem) -> Option<Self> {
        let m = build_m(problem);
        let nth = problem.n * problem.num_ranges();
        let nb = problem.num_bearings();
        let last = nth + nb;
        let keep: Vec<usize> = (0..nth).chain(std::iter::once(last)).collect();
        let tt = m.view((nth, nth), (nb, nb)).into_owned();
        let eig = jacobi_eigen(&tt).ok()?;
        let top = eig.values.max().max(0.0);
        if eig.values.min() <= 1e-10 * top.max(1e-300) {
            return None;
        }
        let inv = eig.reconstruct_with(|l| 1.0 / l);
        // Cross block between t and the kept (θ, 1) coordinates.
        let cross = DMatrix::from_fn(nb, keep.len(), |i, j| m[(nth + i, keep[j])]);
        let kk = DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
        let solved = &inv * &cross;
        let mut cost = kk - cross.transpose() * &solved;
        symmetrize(&mut cost);
        let gain = -solved.columns(0, nth).into_owned();
        let offset = -solved.column(nth).into_owned();
        Some(Self { cost, gain, offset })
    }

    fn bearing_scalars(&self, theta: &[DVector<f64>]) -> Vec<f64> {
        let flat: Vec<f64> = theta.iter().flat_map(|v| v.iter().copied()).collect();
        let th = DVector::from_vec(flat);
        let t = if th.is_empty() { self.offset.clone() } else { &self.gain * th + &self.offset };
        t.iter().copied().collect()
    }
}
