//! Index-based view of a cooperative localization problem.

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::floris::{FlorisProblem, SourceTerm};
use crate::geometry::{ball_dist2, line_dist2, sphere_dist2, Bearing, Position};
use crate::model::{Endpoint, MeasurementSet, Scenario};

/// One internode measurement between nodes `i` and `j` (`i ≠ j`).
#[derive(Clone, Debug)]
pub struct NodeEdge<T> {
    pub i: usize,
    pub j: usize,
    pub value: T,
}

/// One node–anchor measurement.
#[derive(Clone, Debug)]
pub struct AnchorEdge<T> {
    pub node: usize,
    pub anchor: DVector<f64>,
    pub value: T,
}

#[derive(Clone, Debug)]
pub struct NetworkProblem {
    pub n: usize,
    pub node_ids: Vec<String>,
    pub range_edges: Vec<NodeEdge<f64>>,
    /// Bearing `u_ij` points from node `i` toward node `j`.
    pub bearing_edges: Vec<NodeEdge<Bearing>>,
    pub anchor_ranges: Vec<AnchorEdge<f64>>,
    /// Bearing `u` points from the anchor toward the node.
    pub anchor_bearings: Vec<AnchorEdge<Bearing>>,
    /// Anchor positions, used for bounding boxes.
    pub anchor_positions: Vec<DVector<f64>>,
}

impl NetworkProblem {
    pub fn from_scenario(scenario: &Scenario, ms: &MeasurementSet) -> Result<Self> {
        scenario.validate_measurements(ms)?;
        let n = scenario.dim;
        let mut p = NetworkProblem {
            n,
            node_ids: scenario.nodes.iter().map(|x| x.id.clone()).collect(),
            range_edges: vec![],
            bearing_edges: vec![],
            anchor_ranges: vec![],
            anchor_bearings: vec![],
            anchor_positions: scenario.anchors.iter().map(|a| a.pos.coords().clone()).collect(),
        };
        let resolve = |id: &str| {
            scenario
                .resolve(id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown id {id}")))
        };
        for r in &ms.ranges {
            match (resolve(&r.observer)?, resolve(&r.target)?) {
                (Endpoint::Node(i), Endpoint::Node(j)) => p.range_edges.push(NodeEdge { i, j, value: r.distance }),
                (Endpoint::Anchor(a), Endpoint::Node(i)) | (Endpoint::Node(i), Endpoint::Anchor(a)) => {
                    p.anchor_ranges.push(AnchorEdge {
                        node: i,
                        anchor: scenario.anchors[a].pos.coords().clone(),
                        value: r.distance,
                    })
                }
                _ => return invalid("range between two anchors"),
            }
        }
        for b in &ms.bearings {
            match (resolve(&b.observer)?, resolve(&b.target)?) {
                (Endpoint::Node(i), Endpoint::Node(j)) => {
                    p.bearing_edges.push(NodeEdge { i, j, value: b.bearing.clone() })
                }
                (Endpoint::Anchor(a), Endpoint::Node(i)) => p.anchor_bearings.push(AnchorEdge {
                    node: i,
                    anchor: scenario.anchors[a].pos.coords().clone(),
                    value: b.bearing.clone(),
                }),
                (Endpoint::Node(i), Endpoint::Anchor(a)) => p.anchor_bearings.push(AnchorEdge {
                    node: i,
                    anchor: scenario.anchors[a].pos.coords().clone(),
                    value: Bearing::from_direction(-b.bearing.direction())?,
                }),
                _ => return invalid("bearing between two anchors"),
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid("dimension must be >= 2");
        }
        let nn = self.node_ids.len();
        for e in &self.range_edges {
            if e.i >= nn || e.j >= nn || e.i == e.j || !(e.value.is_finite() && e.value >= 0.0) {
                return invalid("malformed internode range edge");
            }
        }
        for e in &self.bearing_edges {
            if e.i >= nn || e.j >= nn || e.i == e.j || e.value.dim() != self.n {
                return invalid("malformed internode bearing edge");
            }
        }
        for e in &self.anchor_ranges {
            if e.node >= nn || e.anchor.len() != self.n || !(e.value.is_finite() && e.value >= 0.0) {
                return invalid("malformed anchor range");
            }
        }
        for e in &self.anchor_bearings {
            if e.node >= nn || e.anchor.len() != self.n || e.value.dim() != self.n {
                return invalid("malformed anchor bearing");
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    /// Same problem with every bearing dropped.
    pub fn ranges_only(&self) -> Self {
        Self { bearing_edges: vec![], anchor_bearings: vec![], ..self.clone() }
    }

    /// Per-node count of measurements of any kind.
    pub fn measurement_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_nodes()];
        for e in &self.range_edges {
            c[e.i] += 1;
            c[e.j] += 1;
        }
        for e in &self.bearing_edges {
            c[e.i] += 1;
            c[e.j] += 1;
        }
        for e in &self.anchor_ranges {
            c[e.node] += 1;
        }
        for e in &self.anchor_bearings {
            c[e.node] += 1;
        }
        c
    }

    /// The single-source problem when there is exactly one node and no
    /// internode measurements.
    pub fn to_floris(&self) -> Result<FlorisProblem> {
        if self.num_nodes() != 1 || !self.range_edges.is_empty() || !self.bearing_edges.is_empty() {
            return invalid("FLORIS handles exactly one node with anchor measurements only");
        }
        let mut terms: Vec<SourceTerm> = self
            .anchor_ranges
            .iter()
            .map(|e| SourceTerm::Range { anchor: e.anchor.clone(), distance: e.value })
            .collect();
        terms.extend(
            self.anchor_bearings
                .iter()
                .map(|e| SourceTerm::Bearing { anchor: e.anchor.clone(), bearing: e.value.clone() }),
        );
        FlorisProblem::new(self.n, terms)
    }

    fn check_flat(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n * self.num_nodes() {
            return invalid(format!(
                "expected {} coordinates, got {}",
                self.n * self.num_nodes(),
                x.len()
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite coordinates");
        }
        Ok(())
    }

    /// Nonconvex hybrid cost over internode and node–anchor terms; `x` is
    /// the concatenation of node positions.
    pub fn cost(&self, x: &[f64]) -> Result<f64> {
        self.check_flat(x)?;
        Ok(self.cost_unchecked(x, sphere_dist2))
    }

    /// Disk-relaxed convex cost: half squared distances to balls and lines.
    pub fn relaxed_cost(&self, x: &[f64]) -> Result<f64> {
        self.check_flat(x)?;
        Ok(0.5 * self.cost_unchecked(x, ball_dist2))
    }

    pub(crate) fn cost_unchecked(&self, x: &[f64], range_term: fn(&[f64], f64) -> f64) -> f64 {
        let n = self.n;
        let node = |i: usize| &x[i * n..(i + 1) * n];
        let mut z = vec![0.0; n];
        let diff = |a: &[f64], b: &[f64], z: &mut Vec<f64>| {
            for k in 0..n {
                z[k] = a[k] - b[k];
            }
        };
        let mut total = 0.0;
        for e in &self.range_edges {
            diff(node(e.i), node(e.j), &mut z);
            total += range_term(&z, e.value);
        }
        for e in &self.bearing_edges {
            diff(node(e.i), node(e.j), &mut z);
            total += line_dist2(&z, e.value.as_slice());
        }
        for e in &self.anchor_ranges {
            diff(node(e.node), e.anchor.as_slice(), &mut z);
            total += range_term(&z, e.value);
        }
        for e in &self.anchor_bearings {
            diff(node(e.node), e.anchor.as_slice(), &mut z);
            total += line_dist2(&z, e.value.as_slice());
        }
        total
    }

    /// Axis-aligned bounding box of the anchors (`None` without anchors).
    pub fn anchor_box(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let first = self.anchor_positions.first()?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for a in &self.anchor_positions[1..] {
            lo = lo.inf(a);
            hi = hi.sup(a);
        }
        Some((lo, hi))
    }
}

/// Nonconvex network cost for positions given per node, in scenario order.
pub fn hybrid_cost_network(x: &[Position], scenario: &Scenario, ms: &MeasurementSet) -> Result<f64> {
    let p = NetworkProblem::from_scenario(scenario, ms)?;
    if x.len() != p.num_nodes() {
        return invalid(format!("expected {} positions, got {}", p.num_nodes(), x.len()));
    }
    let flat: Vec<f64> = x.iter().flat_map(|v| v.as_slice().iter().copied()).collect();
    p.cost(&flat)
}

/// Concatenates positions into one coordinate vector.
pub fn flatten(x: &[Position]) -> Vec<f64> {
    x.iter().flat_map(|v| v.as_slice().iter().copied()).collect()
}

/// Splits a coordinate vector into positions of dimension `n`.
pub fn unflatten(x: &[f64], n: usize) -> Result<Vec<Position>> {
    x.chunks(n).map(|c| Position::new(c.to_vec())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{hybrid_cost_single, AnchorRef, BearingMeasurement, RangeMeasurement};
    use crate::model::{Anchor, AnchorKind, Edge, MeasurementType, Node};
    use approx::assert_abs_diff_eq;

    fn p(c: &[f64]) -> Position {
        Position::new(c.to_vec()).unwrap()
    }

    fn two_nodes() -> (Scenario, MeasurementSet) {
        let s = Scenario {
            dim: 2,
            anchors: vec![
                Anchor { id: "a".into(), pos: p(&[0.0, 0.0]), kind: AnchorKind::Range },
                Anchor { id: "v".into(), pos: p(&[1.0, 0.0]), kind: AnchorKind::Visual },
            ],
            nodes: vec![
                Node { id: "x1".into(), pos: Some(p(&[0.2, 0.6])) },
                Node { id: "x2".into(), pos: Some(p(&[0.8, 0.9])) },
            ],
            edges: vec![
                Edge { from: "a".into(), to: "x1".into(), types: vec![MeasurementType::Range] },
                Edge { from: "v".into(), to: "x2".into(), types: vec![MeasurementType::Bearing] },
                Edge { from: "x1".into(), to: "x2".into(), types: vec![MeasurementType::Range] },
            ],
            measurements: None,
        };
        let ms = MeasurementSet {
            ranges: vec![
                RangeMeasurement { observer: "a".into(), target: "x1".into(), distance: 0.5 },
                RangeMeasurement { observer: "x1".into(), target: "x2".into(), distance: 0.4 },
            ],
            bearings: vec![BearingMeasurement {
                observer: "v".into(),
                target: "x2".into(),
                bearing: Bearing::from_direction(DVector::from_vec(vec![-0.1, 1.0])).unwrap(),
            }],
        };
        (s, ms)
    }

    #[test]
    fn network_cost_matches_term_by_term_oracle() {
        let (s, ms) = two_nodes();
        let x = [p(&[0.25, 0.55]), p(&[0.7, 1.0])];
        let got = hybrid_cost_network(&x, &s, &ms).unwrap();
        // Explicit loop over the four term groups.
        let x1 = x[0].coords();
        let x2 = x[1].coords();
        let t1 = ((x1 - DVector::from_vec(vec![0.0, 0.0])).norm() - 0.5).powi(2);
        let t2 = ((x1 - x2).norm() - 0.4).powi(2);
        let u = DVector::from_vec(vec![-0.1, 1.0]).normalize();
        let z = x2 - DVector::from_vec(vec![1.0, 0.0]);
        let t3 = z.norm_squared() - z.dot(&u).powi(2);
        assert_abs_diff_eq!(got, t1 + t2 + t3, epsilon = 1e-14);
    }

    #[test]
    fn single_node_reduces_to_single_cost() {
        let (mut s, mut ms) = two_nodes();
        s.nodes.truncate(1);
        s.edges.truncate(1);
        ms.ranges.truncate(1);
        ms.bearings[0].target = "x1".into();
        let x = p(&[0.3, 0.1]);
        let net = hybrid_cost_network(std::slice::from_ref(&x), &s, &ms).unwrap();
        let refs: Vec<AnchorRef> = s.anchors.iter().map(|a| AnchorRef { id: &a.id, pos: &a.pos }).collect();
        let single = hybrid_cost_single(&x, &refs, &ms.ranges, &ms.bearings).unwrap();
        assert_abs_diff_eq!(net, single, epsilon = 1e-15);
    }

    #[test]
    fn node_to_anchor_bearing_is_reversed() {
        let (s, mut ms) = two_nodes();
        let b = &mut ms.bearings[0];
        std::mem::swap(&mut b.observer, &mut b.target);
        b.bearing = Bearing::from_direction(-b.bearing.direction()).unwrap();
        let p1 = NetworkProblem::from_scenario(&s, &ms).unwrap();
        let p2 = NetworkProblem::from_scenario(&s, &two_nodes().1).unwrap();
        assert!((p1.anchor_bearings[0].value.direction() - p2.anchor_bearings[0].value.direction()).amax() < 1e-15);
    }

    #[test]
    fn relaxed_cost_underestimates() {
        let (s, ms) = two_nodes();
        let p = NetworkProblem::from_scenario(&s, &ms).unwrap();
        for x in [[0.0, 0.0, 0.0, 0.0], [0.1, 0.2, 0.3, 0.4], [2.0, -1.0, 0.5, 0.5]] {
            assert!(2.0 * p.relaxed_cost(&x).unwrap() <= p.cost(&x).unwrap() + 1e-15);
        }
    }
}
