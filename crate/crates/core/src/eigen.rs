//! Cyclic Jacobi eigendecomposition for small dense symmetric matrices.
//!
//! Each rotation annihilates one off-diagonal pair; sweeps repeat until the
//! off-diagonal Frobenius norm falls below `OFF_DIAG_TOL · ‖A‖_F`. A starting
//! orthogonal basis may be supplied: the rotations then run on `V₀ᵀAV₀`,
//! which for a basis taken from a nearby matrix is already close to diagonal
//! and converges in one or two sweeps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const OFF_DIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 60;

/// Eigenpairs of a symmetric matrix, eigenvalues sorted in decreasing order
/// and eigenvectors stored as the matching columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut out = DMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            out.ger(w, &v, &v, 1.0);
        }
        out
    }
}

pub fn jacobi_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    jacobi_eigen_from(a, None)
}

/// Jacobi iteration started from the orthogonal basis `start` (columns).
pub fn jacobi_eigen_from(a: &DMatrix<f64>, start: Option<&DMatrix<f64>>) -> Result<SymEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument("eigendecomposition needs a square matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let (mut b, mut v) = match start {
        Some(v0) if v0.nrows() == n && v0.ncols() == n => (v0.transpose() * a * v0, v0.clone()),
        _ => (a.clone(), DMatrix::identity(n, n)),
    };
    // Symmetrize whatever round-off the basis change left behind.
    for p in 0..n {
        for q in (p + 1)..n {
            let m = 0.5 * (b[(p, q)] + b[(q, p)]);
            b[(p, q)] = m;
            b[(q, p)] = m;
        }
    }

    let scale = a.norm();
    if scale == 0.0 {
        return Ok(finish(b, v));
    }
    let target = OFF_DIAG_TOL * scale;
    let skip = target / (n as f64);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&b) <= target {
            return Ok(finish(b, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = b[(p, q)];
                if apq.abs() <= skip {
                    continue;
                }
                rotate(&mut b, &mut v, p, q, apq);
            }
        }
    }
    if off_diagonal_norm(&b) <= target {
        return Ok(finish(b, v));
    }
    Err(Error::Numerical(format!(
        "Jacobi eigendecomposition did not converge in {MAX_SWEEPS} sweeps"
    )))
}

fn rotate(b: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, apq: f64) {
    let n = b.nrows();
    let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    b[(p, p)] -= t * apq;
    b[(q, q)] += t * apq;
    b[(p, q)] = 0.0;
    b[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let g = b[(k, p)];
        let h = b[(k, q)];
        let gp = g - s * (h + tau * g);
        let hq = h + s * (g - tau * h);
        b[(k, p)] = gp;
        b[(p, k)] = gp;
        b[(k, q)] = hq;
        b[(q, k)] = hq;
    }
    // Columns are contiguous in nalgebra's column-major storage.
    let (mut cp, mut cq) = v.columns_range_pair_mut(p, q);
    for k in 0..n {
        let g = cp[k];
        let h = cq[k];
        cp[k] = g - s * (h + tau * g);
        cq[k] = h + s * (g - tau * h);
    }
}

fn off_diagonal_norm(b: &DMatrix<f64>) -> f64 {
    let n = b.nrows();
    let mut acc = 0.0;
    for q in 0..n {
        for p in 0..n {
            if p != q {
                acc += b[(p, q)] * b[(p, q)];
            }
        }
    }
    acc.sqrt()
}

fn finish(b: DMatrix<f64>, v: DMatrix<f64>) -> SymEigen {
    let n = b.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b[(j, j)].total_cmp(&b[(i, i)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| b[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    SymEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn matches_nalgebra_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 5, 21, 29] {
            let a = random_symmetric(n, &mut rng);
            let ours = jacobi_eigen(&a).unwrap();
            let mut theirs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in ours.values.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-11, "n={n}: {x} vs {y}");
            }
            let recon = ours.reconstruct_with(|l| l);
            assert!((recon - &a).norm() < 1e-11 * (1.0 + a.norm()));
            let vtv = ours.vectors.transpose() * &ours.vectors;
            assert!((vtv - DMatrix::identity(n, n)).norm() < 1e-12 * n as f64);
        }
    }

    #[test]
    fn warm_start_reaches_same_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_symmetric(12, &mut rng);
        let base = jacobi_eigen(&a).unwrap();
        let perturbed = &a + random_symmetric(12, &mut rng) * 1e-4;
        let cold = jacobi_eigen(&perturbed).unwrap();
        let warm = jacobi_eigen_from(&perturbed, Some(&base.vectors)).unwrap();
        assert!((cold.values - &warm.values).amax() < 1e-12);
        let recon = warm.reconstruct_with(|l| l);
        assert!((recon - &perturbed).norm() < 1e-11);
    }

    #[test]
    fn diagonal_input_is_sorted() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, -2.0]));
        let e = jacobi_eigen(&a).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 1.0, -2.0]);
    }

    #[test]
    fn non_finite_input_fails() {
        let a = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(jacobi_eigen(&a), Err(Error::Numerical(_))));
    }
}
