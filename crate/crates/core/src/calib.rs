//! Self-calibration of a camera rig against a range-based positioning frame.
//!
//! A camera rigidly mounted on a range-localized sensor observes a fiducial
//! marker that defines the visual frame. Each sample pairs the range-based
//! position `x_r` (global frame) with the camera pose `(R_v, t_v)` in the
//! visual frame. With `t_0` the camera-to-sensor offset,
//!
//! ```text
//! x_r = R_g^v (R_v t_0 + t_v) + t_g^v
//! ```
//!
//! Differencing two samples removes `t_g^v`; the remaining problem in
//! `(R_g^v, t_0)` is solved by alternating an orthogonal Procrustes step and
//! a linear least-squares step, each an exact block minimizer, so the
//! objective never increases.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Bearing;

pub const DEFAULT_EPS: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 500;
/// Sample count up to which every unordered pair is used.
pub const ALL_PAIRS_LIMIT: usize = 25;
pub const MAX_PAIRS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample", into = "RawSample")]
pub struct PoseSample {
    pub x_r: Vector3<f64>,
    pub r_v: Matrix3<f64>,
    pub t_v: Vector3<f64>,
}

/// File layout: rotations as row-major nested arrays.
#[derive(Serialize, Deserialize)]
struct RawSample {
    x_r: [f64; 3],
    #[serde(rename = "R_v")]
    r_v: [[f64; 3]; 3],
    t_v: [f64; 3],
}

impl TryFrom<RawSample> for PoseSample {
    type Error = Error;

    fn try_from(raw: RawSample) -> Result<Self> {
        let r = raw.r_v;
        PoseSample::new(
            Vector3::from(raw.x_r),
            Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]),
            Vector3::from(raw.t_v),
        )
    }
}

impl From<PoseSample> for RawSample {
    fn from(s: PoseSample) -> Self {
        let m = s.r_v;
        RawSample {
            x_r: s.x_r.into(),
            r_v: [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]),
            t_v: s.t_v.into(),
        }
    }
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).amax() <= tol && (r.determinant() - 1.0).abs() <= tol
}

impl PoseSample {
    pub fn new(x_r: Vector3<f64>, r_v: Matrix3<f64>, t_v: Vector3<f64>) -> Result<Self> {
        if !is_rotation(&r_v, 1e-9) {
            return invalid("R_v is not a proper rotation (tolerance 1e-9)");
        }
        if x_r.iter().chain(t_v.iter()).any(|v| !v.is_finite()) {
            return invalid("pose sample contains non-finite values");
        }
        Ok(Self { x_r, r_v, t_v })
    }

    /// Camera-rig position in the visual frame: `R_v t_0 + t_v`.
    pub fn rig_in_visual(&self, t_0: &Vector3<f64>) -> Vector3<f64> {
        self.r_v * t_0 + self.t_v
    }
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<PoseSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse { path: path.into(), source })
}

pub fn save_samples(path: impl AsRef<Path>, samples: &[PoseSample]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(samples).expect("samples serialize");
    fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.into(), source })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairPolicy {
    AllPairs,
    /// All pairs up to [`ALL_PAIRS_LIMIT`] samples; beyond that the
    /// consecutive pairs plus a seeded uniform sample, [`MAX_PAIRS`] in total.
    Auto { seed: u64 },
}

/// One differenced sample: `(x_ri − x_rj, R_vi − R_vj, t_vi − t_vj)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseDiff {
    pub x_r: Vector3<f64>,
    pub r_v: Matrix3<f64>,
    pub t_v: Vector3<f64>,
}

pub fn pair_indices(count: usize, policy: PairPolicy) -> Result<Vec<(usize, usize)>> {
    if count < 2 {
        return invalid(format!("need at least 2 samples, got {count}"));
    }
    let all: Vec<(usize, usize)> = (0..count).flat_map(|i| (i + 1..count).map(move |j| (i, j))).collect();
    match policy {
        PairPolicy::AllPairs => Ok(all),
        PairPolicy::Auto { .. } if count <= ALL_PAIRS_LIMIT => Ok(all),
        PairPolicy::Auto { seed } => {
            let mut pairs: Vec<(usize, usize)> = (0..count - 1).map(|i| (i, i + 1)).collect();
            let rest: Vec<(usize, usize)> = all.into_iter().filter(|&(i, j)| j != i + 1).collect();
            let extra = MAX_PAIRS.saturating_sub(pairs.len()).min(rest.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = sample(&mut rng, rest.len(), extra).into_vec();
            picked.sort_unstable();
            pairs.extend(picked.into_iter().map(|k| rest[k]));
            Ok(pairs)
        }
    }
}

pub fn pairwise_differences(samples: &[PoseSample], policy: PairPolicy) -> Result<Vec<PoseDiff>> {
    Ok(pair_indices(samples.len(), policy)?
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (&samples[i], &samples[j]);
            PoseDiff { x_r: a.x_r - b.x_r, r_v: a.r_v - b.r_v, t_v: a.t_v - b.t_v }
        })
        .collect())
}

/// Proper rotation minimizing `Σ‖p_l − R q_l‖²` (Kabsch).
pub fn procrustes(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<Matrix3<f64>> {
    if p.len() != q.len() || p.len() < 3 {
        return invalid("procrustes needs two equally long lists of at least 3 vectors");
    }
    let h: Matrix3<f64> = p.iter().zip(q).map(|(a, b)| a * b.transpose()).sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = svd.singular_values;
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    // Rank 2 still pins down a proper rotation; rank ≤ 1 (collinear data) does not.
    if !(s[1] > 1e-12 * s[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateGeometry("collinear point sets: rotation is not determined".into()));
    }
    let d = (u * v_t).determinant().signum();
    Ok(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t)
}

/// Least-squares `t_0` for fixed `R`: stacks `R̃_v t_0 = Rᵀx̃_r − t̃_v` over pairs.
pub fn solve_t0(r_g_v: &Matrix3<f64>, diffs: &[PoseDiff]) -> Result<Vector3<f64>> {
    if diffs.is_empty() {
        return invalid("no pairwise differences");
    }
    let mut a = DMatrix::zeros(3 * diffs.len(), 3);
    let mut b = DVector::zeros(3 * diffs.len());
    let rt = r_g_v.transpose();
    for (l, d) in diffs.iter().enumerate() {
        a.fixed_view_mut::<3, 3>(3 * l, 0).copy_from(&d.r_v);
        b.fixed_rows_mut::<3>(3 * l).copy_from(&(rt * d.x_r - d.t_v));
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(f64::MIN_POSITIVE)).count();
    if rank < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "offset unobservable: stacked rotation differences have rank {rank} < 3 (poses lack rotational diversity)"
        )));
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::Numerical(e.into()))?;
    Ok(Vector3::new(x[0], x[1], x[2]))
}

/// `Σ‖x̃_r − R(R̃_v t_0 + t̃_v)‖²` over the differenced samples.
pub fn pairwise_objective(r_g_v: &Matrix3<f64>, t_0: &Vector3<f64>, diffs: &[PoseDiff]) -> f64 {
    diffs.iter().map(|d| (d.x_r - r_g_v * (d.r_v * t_0 + d.t_v)).norm_squared()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Serialized row-major as `R_g_v`, like the rotations of sample files.
    #[serde(rename = "R_g_v", with = "row_major")]
    pub r_g_v: Matrix3<f64>,
    pub t_g_v: Vector3<f64>,
    pub t_0: Vector3<f64>,
    /// RMS of `‖x_r − (R(R_v t_0 + t_v) + t_g^v)‖` over samples.
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Pairwise objective after each alternation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_history: Vec<f64>,
}

mod row_major {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let r = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| r[i][j]))
    }
}

impl CalibrationResult {
    /// Predicted range-based position for a pose sample.
    pub fn predict(&self, sample: &PoseSample) -> Vector3<f64> {
        self.r_g_v * sample.rig_in_visual(&self.t_0) + self.t_g_v
    }
}

pub fn calibrate(samples: &[PoseSample], eps_tol: f64, max_iters: usize) -> Result<CalibrationResult> {
    calibrate_with(samples, eps_tol, max_iters, PairPolicy::Auto { seed: 0 })
}

/// Alternating Procrustes / offset solve from `t_0 = 0` until the rotation
/// moves by at most `eps_tol` (Frobenius). On hitting `max_iters` the last
/// (and best, by monotonicity) iterate is returned with `converged = false`.
pub fn calibrate_with(samples: &[PoseSample], eps_tol: f64, max_iters: usize, policy: PairPolicy) -> Result<CalibrationResult> {
    if !(eps_tol > 0.0) || max_iters == 0 {
        return invalid("eps_tol must be positive and max_iters nonzero");
    }
    let diffs = pairwise_differences(samples, policy)?;
    let p: Vec<Vector3<f64>> = diffs.iter().map(|d| d.x_r).collect();
    let mut t_0 = Vector3::zeros();
    let mut r: Option<Matrix3<f64>> = None;
    let mut eps = f64::INFINITY;
    let mut history = Vec::new();
    let mut iterations = 0;
    while eps > eps_tol && iterations < max_iters {
        let q: Vec<Vector3<f64>> = diffs.iter().map(|d| d.r_v * t_0 + d.t_v).collect();
        let r_new = procrustes(&p, &q)?;
        t_0 = solve_t0(&r_new, &diffs)?;
        eps = r.map_or(f64::INFINITY, |r_old| (r_new - r_old).norm());
        r = Some(r_new);
        iterations += 1;
        history.push(pairwise_objective(&r_new, &t_0, &diffs));
    }
    let r_g_v = r.expect("at least one iteration");
    let t_g_v = samples.iter().map(|s| s.x_r - r_g_v * s.rig_in_visual(&t_0)).sum::<Vector3<f64>>() / samples.len() as f64;
    let mut result = CalibrationResult {
        r_g_v,
        t_g_v,
        t_0,
        residual_rms: 0.0,
        iterations,
        converged: eps <= eps_tol,
        objective_history: history,
    };
    let ss: f64 = samples.iter().map(|s| (s.x_r - result.predict(s)).norm_squared()).sum();
    result.residual_rms = (ss / samples.len() as f64).sqrt();
    if !result.converged {
        log::warn!("calibration stopped after {iterations} iterations without meeting eps_tol");
    }
    Ok(result)
}

/// Global-frame bearing toward `x_v` (visual-frame coordinates), or toward
/// the camera rig itself when `target` is `None`.
pub fn bearing_to_global(
    r_v: &Matrix3<f64>,
    t_v: &Vector3<f64>,
    calib: &CalibrationResult,
    target: Option<&Vector3<f64>>,
) -> Result<Bearing> {
    let x_v = target.copied().unwrap_or_else(|| r_v * calib.t_0 + t_v);
    if x_v.norm() < 1e-9 {
        return Err(Error::NoBearing("target coincides with the visual frame origin".into()));
    }
    let g = (calib.r_g_v * x_v).normalize();
    Bearing::from_direction(DVector::from_column_slice(g.as_slice()))
}

/// Geodesic angle between two rotations, in radians.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    // acos loses precision near 0; use the skew part as well.
    let m = a.transpose() * b;
    let s = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm() / 2.0;
    s.atan2(c.clamp(-1.0, 1.0))
}
