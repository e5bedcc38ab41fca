//! A small dense semidefinite-program solver.
//!
//! Problems have one symmetric matrix variable `W` (side ≲ 60):
//!
//! ```text
//! minimize   tr(M W)
//! subject to tr(A_l W) = b_l        for every equality constraint
//!            W[r, c] ≥ 0            for every flagged entry
//!            W ⪰ 0
//! ```
//!
//! Two methods are available. The default is a primal-dual interior-point
//! method (see [`SdpMethod::InteriorPoint`]), which converges in a few dozen
//! iterations to high accuracy even when the optimum is not unique.
//!
//! The alternative is ADMM over the splitting `W = Z`, with `W` restricted to
//! the PSD cone and `Z` to the affine/nonnegative set:
//!
//! ```text
//! W ← Π_psd(Z − U − M/ρ)
//! Ŵ ← αW + (1 − α)Z
//! Z ← Π_C(Ŵ + U)
//! U ← U + Ŵ − Z
//! ```
//!
//! with `ρ = 1` and over-relaxation `α = 1.5`. Each iteration costs one
//! symmetric eigendecomposition, warm-started from the previous eigenbasis.
//! There is no randomness anywhere, so identical inputs give bitwise
//! identical outputs.

use nalgebra::DMatrix;

use crate::eigen::{jacobi_eigen, jacobi_eigen_from, SymEigen};
use crate::error::{invalid, Error, Result};

mod interior;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
const STEP_RATIO: f64 = 1.0;
const OVER_RELAXATION: f64 = 1.5;
const STALL_WINDOW: usize = 5_000;
const STALL_FACTOR: f64 = 1e3;

/// `tr(A W) = b` for symmetric `A`.
#[derive(Clone, Debug)]
pub struct EqConstraint {
    pub a: DMatrix<f64>,
    pub b: f64,
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub dim: usize,
    pub cost: DMatrix<f64>,
    pub eq_constraints: Vec<EqConstraint>,
    pub nonneg_entries: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Converged,
    MaxIters,
    InfeasibleSuspected,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    /// PSD iterate of the splitting.
    pub w: DMatrix<f64>,
    pub objective: f64,
    /// Worst equality violation or negative flagged entry of `w`.
    pub primal_residual: f64,
    /// `ρ‖Z_k − Z_{k−1}‖_F` at the last iteration.
    pub dual_residual: f64,
    /// `‖W − Z‖_F` at the last iteration.
    pub consensus_residual: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SdpMethod {
    /// Primal-dual path following (HKM direction, Mehrotra corrector).
    /// `dual_residual` is `‖M − Σ y_l A_l − Z‖_F` and `consensus_residual`
    /// the duality gap `⟨W, Z⟩`.
    #[default]
    InteriorPoint,
    /// Over-relaxed ADMM with fixed step ratio.
    Admm,
}

#[derive(Clone, Copy, Debug)]
pub struct SdpSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub method: SdpMethod,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS, method: SdpMethod::default() }
    }
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        let q = self.dim;
        if q == 0 {
            return invalid("SDP dimension must be positive");
        }
        check_symmetric("cost", &self.cost, q)?;
        for (l, c) in self.eq_constraints.iter().enumerate() {
            check_symmetric(&format!("constraint {l}"), &c.a, q)?;
            if !c.b.is_finite() {
                return invalid(format!("constraint {l} has non-finite right-hand side"));
            }
        }
        for &(r, c) in &self.nonneg_entries {
            if r >= q || c >= q {
                return invalid(format!("nonnegative entry ({r},{c}) out of range for dimension {q}"));
            }
        }
        Ok(())
    }
}

fn check_symmetric(what: &str, m: &DMatrix<f64>, q: usize) -> Result<()> {
    if m.nrows() != q || m.ncols() != q {
        return invalid(format!("{what} matrix must be {q}x{q}"));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return invalid(format!("{what} matrix has non-finite entries"));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return invalid(format!("{what} matrix is not symmetric"));
    }
    Ok(())
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clamped to 0.
pub fn project_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric("input", s, s.nrows())?;
    let eig = jacobi_eigen(s)?;
    Ok(eig.reconstruct_with(|l| l.max(0.0)))
}

/// `σ₁/σ₂` of a PSD matrix; `+∞` when `σ₂ < 1e-14·σ₁`.
pub fn rank1_ratio(w: &DMatrix<f64>) -> Result<f64> {
    if w.nrows() < 2 || w.nrows() != w.ncols() {
        return invalid("rank-1 ratio needs a square matrix of side >= 2");
    }
    if w.iter().all(|&x| x == 0.0) {
        return invalid("rank-1 ratio of the zero matrix is undefined");
    }
    let eig = jacobi_eigen(w)?;
    let mut sv: Vec<f64> = eig.values.iter().map(|l| l.abs()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[1] < 1e-14 * sv[0] {
        Ok(f64::INFINITY)
    } else {
        Ok(sv[0] / sv[1])
    }
}

/// Sparse view of one constraint matrix: `(row, col, value)` over all
/// nonzeros of the full symmetric matrix.
#[derive(Clone, Debug)]
struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for c in 0..a.ncols() {
            for r in 0..a.nrows() {
                if a[(r, c)] != 0.0 {
                    entries.push((r, c, a[(r, c)]));
                }
            }
        }
        Self { entries }
    }

    fn inner(&self, w: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| v * w[(r, c)]).sum()
    }

    fn inner_sparse(&self, other: &SparseSym, q: usize) -> f64 {
        let mut dense = DMatrix::zeros(q, q);
        for &(r, c, v) in &other.entries {
            dense[(r, c)] = v;
        }
        self.inner(&dense)
    }

    fn axpy(&self, alpha: f64, w: &mut DMatrix<f64>) {
        for &(r, c, v) in &self.entries {
            w[(r, c)] += alpha * v;
        }
    }
}

/// Projection onto `{A(W) = b} ∩ {W[r,c] ≥ 0}`.
struct ConstraintSet {
    q: usize,
    rows: Vec<SparseSym>,
    rhs: Vec<f64>,
    gram_pinv: DMatrix<f64>,
    nonneg: Vec<(usize, usize)>,
    /// Flagged entries touch no equality support, so the two projections
    /// commute and compose exactly.
    separable: bool,
}

impl ConstraintSet {
    fn new(p: &SdpProblem) -> Result<(Self, bool)> {
        let q = p.dim;
        let rows: Vec<SparseSym> = p.eq_constraints.iter().map(|c| SparseSym::from_dense(&c.a)).collect();
        let rhs: Vec<f64> = p.eq_constraints.iter().map(|c| c.b).collect();
        let m = rows.len();
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let g = rows[i].inner_sparse(&rows[j], q);
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let gram_pinv = if m == 0 {
            gram.clone()
        } else {
            let eig = jacobi_eigen(&gram)?;
            let cut = 1e-12 * eig.values.amax().max(1e-300);
            eig.reconstruct_with(|l| if l > cut { 1.0 / l } else { 0.0 })
        };
        // b must lie in range(G) for the affine set to be nonempty.
        let consistent = if m == 0 {
            true
        } else {
            let b = nalgebra::DVector::from_vec(rhs.clone());
            let resid = &gram * (&gram_pinv * &b) - &b;
            resid.amax() <= 1e-9 * (1.0 + b.amax())
        };
        let mut nonneg: Vec<(usize, usize)> = p
            .nonneg_entries
            .iter()
            .map(|&(r, c)| if r <= c { (r, c) } else { (c, r) })
            .collect();
        nonneg.sort_unstable();
        nonneg.dedup();
        let separable = nonneg.iter().all(|&(r, c)| {
            rows.iter().all(|row| row.entries.iter().all(|&(i, j, _)| !((i, j) == (r, c) || (i, j) == (c, r))))
        });
        Ok((Self { q, rows, rhs, gram_pinv, nonneg, separable }, consistent))
    }

    fn project_affine(&self, w: &mut DMatrix<f64>) {
        let m = self.rows.len();
        if m == 0 {
            return;
        }
        let resid = nalgebra::DVector::from_iterator(m, self.rows.iter().zip(&self.rhs).map(|(a, b)| a.inner(w) - b));
        let lambda = &self.gram_pinv * resid;
        for (a, l) in self.rows.iter().zip(lambda.iter()) {
            a.axpy(-l, w);
        }
    }

    fn clamp_nonneg(&self, w: &mut DMatrix<f64>) {
        for &(r, c) in &self.nonneg {
            if w[(r, c)] < 0.0 {
                w[(r, c)] = 0.0;
                w[(c, r)] = 0.0;
            }
        }
    }

    fn project(&self, w: &mut DMatrix<f64>) {
        if self.separable || self.nonneg.is_empty() {
            self.project_affine(w);
            self.clamp_nonneg(w);
            return;
        }
        // Dykstra's alternating projections onto the two convex pieces.
        let mut p = DMatrix::zeros(self.q, self.q);
        let mut r = DMatrix::zeros(self.q, self.q);
        for _ in 0..500 {
            let prev = w.clone();
            let mut y = &*w + &p;
            self.project_affine(&mut y);
            p = &*w + &p - &y;
            let mut z = &y + &r;
            self.clamp_nonneg(&mut z);
            r = &y + &r - &z;
            *w = z;
            if (&*w - prev).amax() < 1e-15 {
                break;
            }
        }
    }

    fn primal_residual(&self, w: &DMatrix<f64>) -> f64 {
        let eq = self
            .rows
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a.inner(w) - b).abs())
            .fold(0.0, f64::max);
        let nn = self.nonneg.iter().map(|&(r, c)| (-w[(r, c)]).max(0.0)).fold(0.0, f64::max);
        eq.max(nn)
    }
}

fn psd_part(x: &DMatrix<f64>, basis: Option<&DMatrix<f64>>) -> Result<(DMatrix<f64>, SymEigen)> {
    let eig = match jacobi_eigen_from(x, basis) {
        Ok(e) => e,
        // A stale basis can only slow Jacobi down; retry from scratch.
        Err(_) if basis.is_some() => jacobi_eigen(x)?,
        Err(e) => return Err(e),
    };
    Ok((eig.reconstruct_with(|l| l.max(0.0)), eig))
}

pub fn solve(problem: &SdpProblem, tol: f64, max_iters: usize) -> Result<SdpSolution> {
    solve_with(problem, &SdpSettings { tol, max_iters, ..SdpSettings::default() })
}

pub fn solve_with(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution> {
    problem.validate()?;
    if !(settings.tol > 0.0) {
        return invalid("SDP tolerance must be positive");
    }
    let q = problem.dim;
    let (set, consistent) = ConstraintSet::new(problem)?;
    if !consistent {
        return Ok(SdpSolution {
            w: DMatrix::zeros(q, q),
            objective: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            consensus_residual: f64::INFINITY,
            iterations: 0,
            status: SdpStatus::InfeasibleSuspected,
        });
    }

    match settings.method {
        SdpMethod::InteriorPoint => interior::solve(problem, &set, settings),
        SdpMethod::Admm => solve_admm(problem, &set, settings),
    }
}

fn solve_admm(problem: &SdpProblem, set: &ConstraintSet, settings: &SdpSettings) -> Result<SdpSolution> {
    let q = problem.dim;
    let rho = STEP_RATIO;
    let alpha = OVER_RELAXATION;
    let m_scaled = &problem.cost / rho;
    let mut z = DMatrix::zeros(q, q);
    set.project(&mut z);
    let mut u = DMatrix::<f64>::zeros(q, q);
    let mut w = z.clone();
    let mut basis: Option<DMatrix<f64>> = None;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    let mut status = SdpStatus::MaxIters;
    let mut iterations = 0;

    for k in 1..=settings.max_iters {
        iterations = k;
        let x = &z - &u - &m_scaled;
        let (w_new, eig) = psd_part(&x, basis.as_ref())?;
        w = w_new;
        basis = Some(eig.vectors);

        let w_hat = &w * alpha + &z * (1.0 - alpha);
        let mut z_new = &w_hat + &u;
        set.project(&mut z_new);
        u += &w_hat - &z_new;

        primal = (&w - &z_new).norm();
        dual = rho * (&z_new - &z).norm();
        z = z_new;

        if primal <= settings.tol && dual <= settings.tol && set.primal_residual(&w) <= settings.tol {
            status = SdpStatus::Converged;
            break;
        }
        if k % STALL_WINDOW == 0 {
            let worst = primal.max(dual);
            if worst > STALL_FACTOR * settings.tol && worst > 0.9 * checkpoint {
                status = SdpStatus::InfeasibleSuspected;
                break;
            }
            checkpoint = worst;
        }
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("SDP iterate diverged".into()));
    }

    let objective = problem.cost.dot(&w);
    Ok(SdpSolution {
        primal_residual: set.primal_residual(&w),
        dual_residual: dual,
        consensus_residual: primal,
        objective,
        w,
        iterations,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(q: usize, r: usize, c: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(q, q);
        a[(r, c)] = if r == c { 1.0 } else { 0.5 };
        a[(c, r)] = a[(r, c)];
        a
    }

    #[test]
    fn scalar_problem() {
        let p = SdpProblem {
            dim: 1,
            cost: DMatrix::identity(1, 1),
            eq_constraints: vec![EqConstraint { a: unit(1, 0, 0), b: 1.0 }],
            nonneg_entries: vec![],
        };
        let s = solve(&p, 1e-9, 10_000).unwrap();
        assert_eq!(s.status, SdpStatus::Converged);
        assert_abs_diff_eq!(s.w[(0, 0)], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn smallest_eigenvalue_wins() {
        let p = SdpProblem {
            dim: 2,
            cost: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
            eq_constraints: vec![EqConstraint { a: DMatrix::identity(2, 2), b: 1.0 }],
            nonneg_entries: vec![],
        };
        let s = solve(&p, 1e-9, 10_000).unwrap();
        assert_eq!(s.status, SdpStatus::Converged);
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.w[(0, 0)], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.w[(1, 1)], 0.0, epsilon = 1e-7);
    }

    #[test]
    fn inconsistent_equalities_are_flagged() {
        let p = SdpProblem {
            dim: 2,
            cost: DMatrix::identity(2, 2),
            eq_constraints: vec![EqConstraint { a: DMatrix::zeros(2, 2), b: 1.0 }],
            nonneg_entries: vec![],
        };
        assert_eq!(solve(&p, 1e-7, 1000).unwrap().status, SdpStatus::InfeasibleSuspected);
    }

    #[test]
    fn empty_psd_intersection_is_flagged() {
        let p = SdpProblem {
            dim: 2,
            cost: DMatrix::identity(2, 2),
            eq_constraints: vec![EqConstraint { a: unit(2, 0, 0), b: -1.0 }],
            nonneg_entries: vec![],
        };
        let s = solve(&p, 1e-7, 100_000).unwrap();
        assert_eq!(s.status, SdpStatus::InfeasibleSuspected);
        assert!(s.iterations <= 2 * STALL_WINDOW);
    }

    #[test]
    fn malformed_problems_are_rejected() {
        let mut cost = DMatrix::identity(2, 2);
        cost[(0, 1)] = 1.0;
        let p = SdpProblem { dim: 2, cost, eq_constraints: vec![], nonneg_entries: vec![] };
        assert!(solve(&p, 1e-7, 10).is_err());
        let p = SdpProblem {
            dim: 2,
            cost: DMatrix::identity(2, 2),
            eq_constraints: vec![],
            nonneg_entries: vec![(0, 2)],
        };
        assert!(solve(&p, 1e-7, 10).is_err());
    }

    #[test]
    fn psd_projection_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0]));
        let p = project_psd(&d).unwrap();
        assert!((p - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]))).amax() < 1e-14);

        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = project_psd(&swap).unwrap();
        // Oracle: keep the +1 eigenpair (1,1)/√2 of the swap matrix.
        let v = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        let expected = &v * v.transpose();
        assert!((p - &expected).amax() < 1e-14);
        assert!((expected - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);

        let g = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let psd = &g * g.transpose();
        assert!((project_psd(&psd).unwrap() - &psd).amax() < 1e-10);
    }

    #[test]
    fn rank1_ratio_examples() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(rank1_ratio(&(&v * v.transpose())).unwrap(), f64::INFINITY);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![20.0, 1.0]));
        assert_abs_diff_eq!(rank1_ratio(&d).unwrap(), 20.0, epsilon = 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![19.9, 1.0]));
        let r = rank1_ratio(&d).unwrap();
        assert_abs_diff_eq!(r, 19.9, epsilon = 1e-12);
        assert!(r < 20.0);
        assert!(rank1_ratio(&DMatrix::zeros(2, 2)).is_err());
    }

    fn random_problem(rng: &mut ChaCha8Rng, q: usize) -> SdpProblem {
        let g = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
        let cost = (&g + g.transpose()) * 0.5;
        // Diagonal-block trace constraints plus one nonneg off-diagonal entry,
        // the same shape as the localization relaxations.
        let mut eq = vec![];
        for i in 0..q {
            eq.push(EqConstraint { a: unit(q, i, i), b: rng.random_range(0.5..1.5) });
        }
        SdpProblem { dim: q, cost, eq_constraints: eq, nonneg_entries: vec![(0, q - 1)] }
    }

    /// Brute-force feasible point: project a random symmetric matrix onto the
    /// PSD cone and rescale it to satisfy the diagonal constraints.
    fn random_feasible(rng: &mut ChaCha8Rng, p: &SdpProblem) -> Option<DMatrix<f64>> {
        let q = p.dim;
        let g = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
        let psd = &g * g.transpose() + DMatrix::identity(q, q) * 1e-3;
        let mut scale = DVector::from_element(q, 1.0);
        for (i, c) in p.eq_constraints.iter().enumerate() {
            scale[i] = (c.b / psd[(i, i)]).sqrt();
        }
        let d = DMatrix::from_diagonal(&scale);
        let w = &d * psd * &d;
        if w[(0, q - 1)] >= 0.0 {
            Some(w)
        } else {
            None
        }
    }

    #[test]
    fn converged_solutions_beat_sampled_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let p = random_problem(&mut rng, 5);
            let tol = 1e-7;
            let s = solve(&p, tol, 100_000).unwrap();
            assert_eq!(s.status, SdpStatus::Converged);
            assert!(s.primal_residual <= tol);
            let lmin = jacobi_eigen(&s.w).unwrap().values.min();
            assert!(lmin >= -tol * s.w.norm());
            let mut checked = 0;
            while checked < 200 {
                if let Some(wf) = random_feasible(&mut rng, &p) {
                    assert!(s.objective <= p.cost.dot(&wf) + 10.0 * tol);
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn overlapping_supports_use_alternating_projection() {
        // Equality on W[0,1] and nonnegativity on the same entry.
        let q = 2;
        let p = SdpProblem {
            dim: q,
            cost: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
            eq_constraints: vec![
                EqConstraint { a: unit(q, 0, 0), b: 1.0 },
                EqConstraint { a: unit(q, 1, 1), b: 1.0 },
                EqConstraint { a: DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]) + unit(q, 0, 0), b: 1.2 },
            ],
            nonneg_entries: vec![(0, 1)],
        };
        let s = solve(&p, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, SdpStatus::Converged);
        assert_abs_diff_eq!(s.w[(0, 1)], 0.2, epsilon = 1e-6);
    }

    #[test]
    fn solve_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_problem(&mut rng, 6);
        let a = solve(&p, 1e-7, 20_000).unwrap();
        let b = solve(&p, 1e-7, 20_000).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert!(a.w.iter().zip(b.w.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    fn admm(tol: f64, max_iters: usize) -> SdpSettings {
        SdpSettings { tol, max_iters, method: SdpMethod::Admm }
    }

    #[test]
    fn admm_agrees_with_interior_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..4 {
            let p = random_problem(&mut rng, 5);
            let ipm = solve(&p, 1e-9, 200).unwrap();
            let a = solve_with(&p, &admm(1e-8, 200_000)).unwrap();
            assert_eq!(ipm.status, SdpStatus::Converged);
            assert_eq!(a.status, SdpStatus::Converged);
            assert!(a.primal_residual <= 1e-8);
            assert_abs_diff_eq!(a.objective, ipm.objective, epsilon = 1e-5 * (1.0 + ipm.objective.abs()));
        }
    }

    #[test]
    fn admm_flags_infeasibility() {
        let p = SdpProblem {
            dim: 2,
            cost: DMatrix::identity(2, 2),
            eq_constraints: vec![EqConstraint { a: unit(2, 0, 0), b: -1.0 }],
            nonneg_entries: vec![],
        };
        assert_eq!(solve_with(&p, &admm(1e-7, 100_000)).unwrap().status, SdpStatus::InfeasibleSuspected);
    }

    #[test]
    fn admm_scalar_and_eigen_examples() {
        let p = SdpProblem {
            dim: 2,
            cost: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
            eq_constraints: vec![EqConstraint { a: DMatrix::identity(2, 2), b: 1.0 }],
            nonneg_entries: vec![],
        };
        let s = solve_with(&p, &admm(1e-9, 100_000)).unwrap();
        assert_eq!(s.status, SdpStatus::Converged);
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-7);
    }
}
