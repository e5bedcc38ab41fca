//! Geometric primitives shared by every solver: positions, unit bearings,
//! projections onto balls and lines through the origin, and the squared
//! set-distances that make up the hybrid least-squares costs.
//!
//! A range measurement `d` between two points constrains their difference
//! `z` to the sphere `S = {y : ‖y‖ = d}`; a bearing `u` constrains it to the
//! line `L = {t·u : t ∈ ℝ}`. The hybrid cost of a configuration is the sum of
//! squared distances `D²_S(z)` and `D²_L(z)` over all measured pairs.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative tolerance on the norm of an ingested bearing. Vectors within it
/// are renormalized, anything further off is rejected.
pub const UNIT_TOL: f64 = 1e-9;

/// A point in `ℝⁿ`, `n ≥ 2`, with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Position(DVector<f64>);

impl Position {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(coords))
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        if v.len() < 2 {
            return invalid(format!("position dimension must be >= 2, got {}", v.len()));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return invalid("position has non-finite coordinates");
        }
        Ok(Self(v))
    }

    pub fn origin(dim: usize) -> Self {
        Self(DVector::zeros(dim.max(2)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Position {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Position::new(v)
    }
}

impl From<Position> for Vec<f64> {
    fn from(p: Position) -> Self {
        p.0.as_slice().to_vec()
    }
}

/// A unit direction vector, expressed in the global frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Bearing(DVector<f64>);

impl Bearing {
    /// Accepts a vector whose norm is 1 within [`UNIT_TOL`] (relative) and
    /// renormalizes it exactly.
    pub fn new(v: DVector<f64>) -> Result<Self> {
        if v.len() < 2 || v.iter().any(|c| !c.is_finite()) {
            return invalid("bearing must be a finite vector of dimension >= 2");
        }
        let norm = v.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return invalid(format!("bearing is not unit-norm (norm = {norm})"));
        }
        Ok(Self(v / norm))
    }

    /// Normalizes an arbitrary nonzero direction.
    pub fn from_direction(v: DVector<f64>) -> Result<Self> {
        if v.len() < 2 || v.iter().any(|c| !c.is_finite()) {
            return invalid("direction must be a finite vector of dimension >= 2");
        }
        let norm = v.norm();
        if norm < 1e-300 {
            return invalid("cannot take the direction of a zero vector");
        }
        Ok(Self(v / norm))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl TryFrom<Vec<f64>> for Bearing {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Bearing::new(DVector::from_vec(v))
    }
}

impl From<Bearing> for Vec<f64> {
    fn from(b: Bearing) -> Self {
        b.0.as_slice().to_vec()
    }
}

/// Distance between `observer` and `target` (meters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeMeasurement {
    pub observer: String,
    pub target: String,
    pub distance: f64,
}

/// Unit vector pointing from `observer` toward `target`, in the global frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BearingMeasurement {
    pub observer: String,
    pub target: String,
    pub bearing: Bearing,
}

impl RangeMeasurement {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance.is_finite() && self.distance >= 0.0) {
            return invalid(format!(
                "range {}->{} must be finite and nonnegative, got {}",
                self.observer, self.target, self.distance
            ));
        }
        if self.observer == self.target {
            return invalid(format!("range measurement from {} to itself", self.observer));
        }
        Ok(())
    }
}

impl BearingMeasurement {
    pub fn validate(&self) -> Result<()> {
        if self.observer == self.target {
            return invalid(format!("bearing measurement from {} to itself", self.observer));
        }
        Ok(())
    }
}

fn check_finite(z: &DVector<f64>) -> Result<()> {
    if z.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        invalid("non-finite input vector")
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius >= 0.0 {
        Ok(())
    } else {
        invalid(format!("radius must be finite and nonnegative, got {radius}"))
    }
}

fn check_unit(z: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
    if z.len() != u.len() {
        return invalid(format!("dimension mismatch: {} vs {}", z.len(), u.len()));
    }
    check_finite(u)?;
    if (u.norm() - 1.0).abs() > UNIT_TOL {
        return invalid("line direction is not unit-norm");
    }
    Ok(())
}

/// Orthogonal projection of `z` onto the closed ball of the given radius
/// centered at the origin.
pub fn project_ball(z: &DVector<f64>, radius: f64) -> Result<DVector<f64>> {
    check_finite(z)?;
    check_radius(radius)?;
    let mut out = z.clone();
    ball_project_in_place(out.as_mut_slice(), radius);
    Ok(out)
}

/// Orthogonal projection `u(uᵀz)` of `z` onto the line spanned by `u`.
pub fn project_line(z: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_finite(z)?;
    check_unit(z, u)?;
    Ok(u * u.dot(z))
}

/// `(‖z‖ − radius)²`, the squared distance from `z` to the sphere.
pub fn dist2_sphere(z: &DVector<f64>, radius: f64) -> Result<f64> {
    check_finite(z)?;
    check_radius(radius)?;
    Ok(sphere_dist2(z.as_slice(), radius))
}

/// `zᵀ(I − uuᵀ)z`, the squared distance from `z` to the line spanned by `u`.
pub fn dist2_line(z: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
    check_finite(z)?;
    check_unit(z, u)?;
    Ok(line_dist2(z.as_slice(), u.as_slice()))
}

// Unchecked slice kernels for the inner loops of the solvers.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn sphere_dist2(z: &[f64], radius: f64) -> f64 {
    let r = norm(z) - radius;
    r * r
}

#[inline]
pub(crate) fn ball_dist2(z: &[f64], radius: f64) -> f64 {
    let r = norm(z) - radius;
    if r > 0.0 {
        r * r
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn line_dist2(z: &[f64], u: &[f64]) -> f64 {
    let s = dot(z, u);
    (dot(z, z) - s * s).max(0.0)
}

#[inline]
pub(crate) fn ball_project_in_place(z: &mut [f64], radius: f64) {
    let nz = norm(z);
    if nz > radius {
        let scale = radius / nz;
        z.iter_mut().for_each(|c| *c *= scale);
    }
}

/// Writes `z − P_ball(z)` into `out` (the gradient of `½D²_B`).
#[inline]
pub(crate) fn ball_residual(z: &[f64], radius: f64, out: &mut [f64]) {
    let nz = norm(z);
    if nz > radius {
        let scale = 1.0 - radius / nz;
        for (o, c) in out.iter_mut().zip(z) {
            *o = c * scale;
        }
    } else {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Writes `z − P_line(z)` into `out` (the gradient of `½D²_L`).
#[inline]
pub(crate) fn line_residual(z: &[f64], u: &[f64], out: &mut [f64]) {
    let s = dot(z, u);
    for ((o, c), ui) in out.iter_mut().zip(z).zip(u) {
        *o = c - s * ui;
    }
}

/// Writes `a − b` into `out`.
#[inline]
pub(crate) fn diff_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x - y;
    }
}

/// An anchor as seen by the single-source cost: a known position.
#[derive(Clone, Debug)]
pub struct AnchorRef<'a> {
    pub id: &'a str,
    pub pos: &'a Position,
}

/// Single-source hybrid least-squares cost
/// `Σ_R D²_S(x − a_k) + Σ_T D²_L(x − a_j)`.
///
/// Each measurement must relate the source to one of `anchors`; whichever of
/// `observer` / `target` names an anchor is taken as that anchor.
pub fn hybrid_cost_single(
    x: &Position,
    anchors: &[AnchorRef<'_>],
    ranges: &[RangeMeasurement],
    bearings: &[BearingMeasurement],
) -> Result<f64> {
    let lookup = |obs: &str, tgt: &str| -> Result<&Position> {
        anchors
            .iter()
            .find(|a| a.id == obs || a.id == tgt)
            .map(|a| a.pos)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("measurement {obs}->{tgt} references no known anchor"))
            })
    };
    let n = x.dim();
    let mut z = vec![0.0; n];
    let mut cost = 0.0;
    for r in ranges {
        r.validate()?;
        let a = lookup(&r.observer, &r.target)?;
        if a.dim() != n {
            return invalid("anchor dimension mismatch");
        }
        diff_into(x.as_slice(), a.as_slice(), &mut z);
        cost += sphere_dist2(&z, r.distance);
    }
    for b in bearings {
        b.validate()?;
        let a = lookup(&b.observer, &b.target)?;
        if a.dim() != n || b.bearing.dim() != n {
            return invalid("anchor or bearing dimension mismatch");
        }
        diff_into(x.as_slice(), a.as_slice(), &mut z);
        cost += line_dist2(&z, b.bearing.as_slice());
    }
    Ok(cost)
}
