//! Infeasible-start primal-dual path following with the HKM search
//! direction and Mehrotra's predictor-corrector.
//!
//! Flagged entries become linear slacks, `⟨E_rc, W⟩ − s = 0` with `s ≥ 0`, so
//! the cone is `PSD(q) × ℝ₊ᵏ`. Each iteration forms the Schur complement
//! `H_ij = tr(A_i W A_j Z⁻¹)` (plus `s/z` on slack rows) directly from the
//! sparse constraint entries, so its cost is dominated by a handful of dense
//! `q × q` products.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{ConstraintSet, SdpProblem, SdpSettings, SdpSolution, SdpStatus, SparseSym, STALL_FACTOR};
use crate::error::{Error, Result};

const MAX_IPM_ITERS: usize = 200;
const STEP_FRACTION: f64 = 0.98;
/// Relative duality gap at which iteration stops early.
const GAP_TARGET: f64 = 1e-12;

struct Rows {
    a: Vec<SparseSym>,
    b: DVector<f64>,
    /// Number of equality rows; the remaining rows carry a `−s_j` term.
    me: usize,
}

impl Rows {
    fn new(set: &ConstraintSet) -> Self {
        let mut a = set.rows.clone();
        let me = a.len();
        for &(r, c) in &set.nonneg {
            let entries = if r == c { vec![(r, r, 1.0)] } else { vec![(r, c, 0.5), (c, r, 0.5)] };
            a.push(SparseSym { entries });
        }
        let mut b = DVector::zeros(a.len());
        for (i, v) in set.rhs.iter().enumerate() {
            b[i] = *v;
        }
        Self { a, b, me }
    }

    fn len(&self) -> usize {
        self.a.len()
    }

    fn adjoint(&self, y: &DVector<f64>, q: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(q, q);
        for (row, &yi) in self.a.iter().zip(y.iter()) {
            row.axpy(yi, &mut out);
        }
        out
    }
}

#[derive(Clone)]
struct Point {
    x: DMatrix<f64>,
    s: DVector<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
    zs: DVector<f64>,
}

struct Direction {
    dx: DMatrix<f64>,
    ds: DVector<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    dzs: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rd: DMatrix<f64>,
    rd_lin: DVector<f64>,
    mu: f64,
    gap: f64,
    pobj: f64,
    dobj: f64,
}

pub(super) fn solve(problem: &SdpProblem, set: &ConstraintSet, settings: &SdpSettings) -> Result<SdpSolution> {
    let q = problem.dim;
    let rows = Rows::new(set);
    let m = rows.len();
    let k = m - rows.me;
    let c = &problem.cost;

    let norm_a = |r: &SparseSym| r.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
    let sq = (q as f64).sqrt();
    let xi = rows
        .a
        .iter()
        .zip(rows.b.iter())
        .map(|(r, b)| sq * (1.0 + b.abs()) / (1.0 + norm_a(r)))
        .fold(10f64.max(sq), f64::max);
    let eta = rows.a.iter().map(norm_a).fold(10f64.max(sq).max(c.norm()), f64::max);
    let mut pt = Point {
        x: DMatrix::identity(q, q) * xi,
        s: DVector::from_element(k, xi),
        y: DVector::zeros(m),
        z: DMatrix::identity(q, q) * eta,
        zs: DVector::from_element(k, eta),
    };

    let max_iters = settings.max_iters.min(MAX_IPM_ITERS);
    let mut iterations = 0;
    let mut best_mu = f64::INFINITY;
    let mut stalled = 0;
    let mut res = residuals(&pt, &rows, c);
    for it in 1..=max_iters {
        if converged(&pt, &res, set, settings.tol) && res.gap <= GAP_TARGET * (res.pobj.abs() + res.dobj.abs()).max(1e-4) {
            break;
        }
        iterations = it;
        let Some(step) = iterate(&pt, &res, &rows, q) else {
            log::debug!("interior-point step failed at iteration {it}");
            break;
        };
        let (next, ap, ad) = step;
        pt = next;
        res = residuals(&pt, &rows, c);
        if res.mu < 0.5 * best_mu || ap.min(ad) > 1e-3 {
            stalled = 0;
        } else {
            stalled += 1;
        }
        best_mu = best_mu.min(res.mu);
        if stalled >= 5 || ap.max(ad) < 1e-10 {
            break;
        }
    }
    if pt.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("interior-point iterate diverged".into()));
    }

    let primal = set.primal_residual(&pt.x);
    let dual = res.rd.norm().max(res.rd_lin.amax());
    let status = if converged(&pt, &res, set, settings.tol) {
        SdpStatus::Converged
    } else if primal.max(dual) > STALL_FACTOR * settings.tol {
        SdpStatus::InfeasibleSuspected
    } else {
        SdpStatus::MaxIters
    };
    Ok(SdpSolution {
        objective: c.dot(&pt.x),
        primal_residual: primal,
        dual_residual: dual,
        consensus_residual: res.gap.abs(),
        w: pt.x,
        iterations,
        status,
    })
}

fn converged(pt: &Point, res: &Residuals, set: &ConstraintSet, tol: f64) -> bool {
    set.primal_residual(&pt.x) <= tol
        && res.rd.norm() <= tol
        && (res.rd_lin.is_empty() || res.rd_lin.amax() <= tol)
        && res.gap <= tol * res.pobj.abs().max(1.0)
}

fn residuals(pt: &Point, rows: &Rows, c: &DMatrix<f64>) -> Residuals {
    let q = pt.x.nrows();
    let m = rows.len();
    let mut rp = rows.b.clone();
    for i in 0..m {
        let mut v = rows.a[i].inner(&pt.x);
        if i >= rows.me {
            v -= pt.s[i - rows.me];
        }
        rp[i] -= v;
    }
    let rd = c - rows.adjoint(&pt.y, q) - &pt.z;
    let rd_lin = DVector::from_fn(pt.s.len(), |j, _| pt.y[rows.me + j] - pt.zs[j]);
    let gap = pt.x.dot(&pt.z) + pt.s.dot(&pt.zs);
    Residuals {
        rp,
        rd,
        rd_lin,
        mu: gap / (q + pt.s.len()) as f64,
        gap,
        pobj: c.dot(&pt.x),
        dobj: rows.b.dot(&pt.y),
    }
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

fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut inv = Cholesky::new(a.clone())?.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// Linear solve with the Schur matrix; falls back to an eigenvalue
/// pseudo-inverse when constraints are linearly dependent.
enum SchurFactor {
    Chol(Cholesky<f64, Dyn>),
    Pinv(DMatrix<f64>),
}

impl SchurFactor {
    fn new(h: DMatrix<f64>) -> Self {
        match Cholesky::new(h.clone()) {
            Some(ch) => SchurFactor::Chol(ch),
            None => {
                let eig = h.symmetric_eigen();
                let cut = 1e-14 * eig.eigenvalues.amax().max(1e-300);
                let inv = DVector::from_iterator(
                    eig.eigenvalues.len(),
                    eig.eigenvalues.iter().map(|&l| if l > cut { 1.0 / l } else { 0.0 }),
                );
                let v = &eig.eigenvectors;
                SchurFactor::Pinv(v * DMatrix::from_diagonal(&inv) * v.transpose())
            }
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurFactor::Chol(ch) => ch.solve(rhs),
            SchurFactor::Pinv(p) => p * rhs,
        }
    }
}

fn iterate(pt: &Point, res: &Residuals, rows: &Rows, q: usize) -> Option<(Point, f64, f64)> {
    let m = rows.len();
    let me = rows.me;
    let k = pt.s.len();
    let zinv = spd_inverse(&pt.z)?;

    let mut h = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut v = 0.0;
            for &(a, b, alpha) in &rows.a[i].entries {
                for &(cc, d, beta) in &rows.a[j].entries {
                    v += alpha * beta * pt.x[(b, cc)] * zinv[(d, a)];
                }
            }
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    for j in 0..k {
        h[(me + j, me + j)] += pt.s[j] / pt.zs[j];
    }
    let factor = SchurFactor::new(h);

    let x_rd_zinv = &pt.x * &res.rd * &zinv;
    let direction = |sigma_mu: f64, corr: Option<&Direction>| -> Direction {
        let mut g = &zinv * sigma_mu - &pt.x - &x_rd_zinv;
        let mut gl = DVector::from_fn(k, |j, _| sigma_mu / pt.zs[j] - pt.s[j] - pt.s[j] / pt.zs[j] * res.rd_lin[j]);
        if let Some(a) = corr {
            g -= &a.dx * &a.dz * &zinv;
            for j in 0..k {
                gl[j] -= a.ds[j] * a.dzs[j] / pt.zs[j];
            }
        }
        let mut rhs = res.rp.clone();
        for i in 0..m {
            rhs[i] -= rows.a[i].inner(&g);
            if i >= me {
                rhs[i] += gl[i - me];
            }
        }
        let dy = factor.solve(&rhs);
        let ady = rows.adjoint(&dy, q);
        let dz = &res.rd - &ady;
        let mut dx = g + &pt.x * &ady * &zinv;
        symmetrize(&mut dx);
        let dzs = DVector::from_fn(k, |j, _| res.rd_lin[j] + dy[me + j]);
        let mut ds = DVector::from_fn(k, |j, _| sigma_mu / pt.zs[j] - pt.s[j] - pt.s[j] / pt.zs[j] * dzs[j]);
        if let Some(a) = corr {
            for j in 0..k {
                ds[j] -= a.ds[j] * a.dzs[j] / pt.zs[j];
            }
        }
        Direction { dx, ds, dy, dz, dzs }
    };

    let steps = |d: &Direction| -> Option<(f64, f64)> {
        let ap = max_step(&pt.x, &d.dx)?.min(max_step_lin(&pt.s, &d.ds));
        let ad = max_step(&pt.z, &d.dz)?.min(max_step_lin(&pt.zs, &d.dzs));
        Some((ap.min(1.0), ad.min(1.0)))
    };

    let aff = direction(0.0, None);
    let (ap, ad) = steps(&aff)?;
    let gap_aff = (&pt.x + &aff.dx * ap).dot(&(&pt.z + &aff.dz * ad))
        + (&pt.s + &aff.ds * ap).dot(&(&pt.zs + &aff.dzs * ad));
    let mu_aff = gap_aff / (q + k) as f64;
    let sigma = if res.mu > 0.0 { (mu_aff / res.mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

    let d = direction(sigma * res.mu, Some(&aff));
    let (ap, ad) = steps(&d)?;
    let (ap, ad) = ((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0));
    let mut next = Point {
        x: &pt.x + &d.dx * ap,
        s: &pt.s + &d.ds * ap,
        y: &pt.y + &d.dy * ad,
        z: &pt.z + &d.dz * ad,
        zs: &pt.zs + &d.dzs * ad,
    };
    symmetrize(&mut next.x);
    symmetrize(&mut next.z);
    Some((next, ap, ad))
}

/// Largest `α` with `X + αΔX ⪰ 0`, given `X ≻ 0` (`∞` when unbounded).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let linv = match Cholesky::new(x.clone()) {
        Some(ch) => ch.l().solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows()))?,
        None => {
            let eig = x.clone().symmetric_eigen();
            // Cholesky can fail on a PD iterate whose smallest eigenvalues
            // sit near rounding level; the eigenbasis still gives the step.
            if eig.eigenvalues.min() <= 0.0 {
                return None;
            }
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
            d * eig.eigenvectors.transpose()
        }
    };
    let mut m = &linv * dx * linv.transpose();
    symmetrize(&mut m);
    let lmin = m.symmetric_eigenvalues().min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn max_step_lin(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}
