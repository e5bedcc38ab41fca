use serde::{Deserialize, Serialize};

use crate::geometry::Position;

/// What every solver returns: estimates plus diagnostics.
///
/// Non-finite numbers (e.g. an exactly rank-1 ratio of `+∞`) serialize as
/// JSON `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub algorithm: String,
    pub node_ids: Vec<String>,
    pub positions: Vec<Position>,
    pub iterations: usize,
    /// Cost the method minimizes, at the returned positions.
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank1_ratio: Option<f64>,
    pub converged: bool,
    /// Nodes without any measurement; left at their initial guess.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unidentified: Vec<String>,
    pub wall_time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
}

impl SolverReport {
    pub fn flat_positions(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| p.as_slice().iter().copied()).collect()
    }
}
