//! Scenario files: ground-truth geometry, measurement topology and,
//! optionally, the measurements themselves.
//!
//! Edge direction convention: for an edge `from → to` the displacement is
//! `δ = pos(to) − pos(from)` and a bearing points from `from` toward `to`.
//! Anchor edges are normally written anchor → node, so anchor bearings are
//! `u = (x − a)/‖x − a‖`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{BearingMeasurement, Position, RangeMeasurement};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKind {
    /// Supplies distances (acoustic/RF ranging).
    Range,
    /// Supplies bearings (camera observing a marker).
    Visual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementType {
    Range,
    Bearing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: String,
    pub pos: Position,
    pub kind: AnchorKind,
}

/// An unknown-position node; `pos` is the ground truth when known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Position>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub types: Vec<MeasurementType>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    #[serde(default)]
    pub ranges: Vec<RangeMeasurement>,
    #[serde(default)]
    pub bearings: Vec<BearingMeasurement>,
}

impl MeasurementSet {
    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty() && self.bearings.is_empty()
    }

    /// Drops every bearing (the range-only baseline).
    pub fn ranges_only(&self) -> Self {
        Self { ranges: self.ranges.clone(), bearings: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dim: usize,
    pub anchors: Vec<Anchor>,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Measurements synthesized for this scenario, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<MeasurementSet>,
}

/// What an id refers to inside a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Anchor(usize),
    Node(usize),
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|source| Error::Parse { path: path.into(), source })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("scenario serializes");
        fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.into(), source })
    }

    pub fn resolve(&self, id: &str) -> Option<Endpoint> {
        if let Some(i) = self.anchors.iter().position(|a| a.id == id) {
            return Some(Endpoint::Anchor(i));
        }
        self.nodes.iter().position(|n| n.id == id).map(Endpoint::Node)
    }

    /// Ground-truth node positions, if every node has one.
    pub fn truth(&self) -> Option<Vec<Position>> {
        self.nodes.iter().map(|n| n.pos.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return invalid(format!("dimension must be >= 2, got {}", self.dim));
        }
        let mut ids = BTreeSet::new();
        for a in &self.anchors {
            if a.pos.dim() != self.dim {
                return invalid(format!("anchor {} has dimension {}, expected {}", a.id, a.pos.dim(), self.dim));
            }
            if !ids.insert(a.id.as_str()) {
                return invalid(format!("duplicate id {}", a.id));
            }
        }
        for n in &self.nodes {
            if let Some(p) = &n.pos {
                if p.dim() != self.dim {
                    return invalid(format!("node {} has dimension {}, expected {}", n.id, p.dim(), self.dim));
                }
            }
            if !ids.insert(n.id.as_str()) {
                return invalid(format!("duplicate id {}", n.id));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let (Some(from), Some(to)) = (self.resolve(&e.from), self.resolve(&e.to)) else {
                return invalid(format!("edge {}->{} references an unknown id", e.from, e.to));
            };
            if e.from == e.to {
                return invalid(format!("edge from {} to itself", e.from));
            }
            if e.types.is_empty() {
                return invalid(format!("edge {}->{} carries no measurement type", e.from, e.to));
            }
            let anchor = match (from, to) {
                (Endpoint::Anchor(_), Endpoint::Anchor(_)) => {
                    return invalid(format!("edge {}->{} joins two anchors", e.from, e.to));
                }
                (Endpoint::Anchor(a), _) | (_, Endpoint::Anchor(a)) => Some(&self.anchors[a]),
                _ => None,
            };
            for t in &e.types {
                if let Some(a) = anchor {
                    let ok = matches!(
                        (a.kind, t),
                        (AnchorKind::Range, MeasurementType::Range) | (AnchorKind::Visual, MeasurementType::Bearing)
                    );
                    if !ok {
                        return invalid(format!("{:?} anchor {} cannot supply a {:?} measurement", a.kind, a.id, t));
                    }
                }
                let key = if e.from < e.to { (&e.from, &e.to, *t) } else { (&e.to, &e.from, *t) };
                if !seen.insert(key) {
                    return invalid(format!("duplicate {:?} edge between {} and {}", t, e.from, e.to));
                }
            }
        }
        if let Some(ms) = &self.measurements {
            self.validate_measurements(ms)?;
        }
        Ok(())
    }

    pub fn validate_measurements(&self, ms: &MeasurementSet) -> Result<()> {
        let check = |obs: &str, tgt: &str| -> Result<()> {
            match (self.resolve(obs), self.resolve(tgt)) {
                (Some(Endpoint::Anchor(_)), Some(Endpoint::Anchor(_))) => {
                    invalid(format!("measurement {obs}->{tgt} joins two anchors"))
                }
                (Some(_), Some(_)) => Ok(()),
                _ => invalid(format!("measurement {obs}->{tgt} references an unknown id")),
            }
        };
        for r in &ms.ranges {
            r.validate()?;
            check(&r.observer, &r.target)?;
        }
        for b in &ms.bearings {
            b.validate()?;
            if b.bearing.dim() != self.dim {
                return invalid(format!("bearing {}->{} has wrong dimension", b.observer, b.target));
            }
            check(&b.observer, &b.target)?;
        }
        Ok(())
    }

    /// The measurements embedded in the file, or an error naming what is missing.
    pub fn require_measurements(&self) -> Result<&MeasurementSet> {
        self.measurements
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("scenario carries no measurements".into()))
    }

    /// Converts every visual anchor to a range anchor and every bearing
    /// edge to a range edge: the range-only counterpart of a hybrid network.
    pub fn range_only_variant(&self) -> Self {
        let mut out = self.clone();
        for a in &mut out.anchors {
            a.kind = AnchorKind::Range;
        }
        for e in &mut out.edges {
            e.types = vec![MeasurementType::Range];
        }
        out.measurements = None;
        out
    }

    pub fn count_anchors(&self, kind: AnchorKind) -> usize {
        self.anchors.iter().filter(|a| a.kind == kind).count()
    }

    /// Number of measurement edges per node id.
    pub fn node_degrees(&self) -> BTreeMap<&str, usize> {
        let mut deg: BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
        for e in &self.edges {
            for id in [&e.from, &e.to] {
                if let Some(d) = deg.get_mut(id.as_str()) {
                    *d += e.types.len();
                }
            }
        }
        deg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Position {
        Position::new(c.to_vec()).unwrap()
    }

    fn small() -> Scenario {
        Scenario {
            dim: 2,
            anchors: vec![
                Anchor { id: "a0".into(), pos: p(&[0.0, 0.0]), kind: AnchorKind::Range },
                Anchor { id: "a1".into(), pos: p(&[1.0, 0.0]), kind: AnchorKind::Visual },
            ],
            nodes: vec![Node { id: "x".into(), pos: Some(p(&[0.5, 0.5])) }],
            edges: vec![
                Edge { from: "a0".into(), to: "x".into(), types: vec![MeasurementType::Range] },
                Edge { from: "a1".into(), to: "x".into(), types: vec![MeasurementType::Bearing] },
            ],
            measurements: None,
        }
    }

    #[test]
    fn json_round_trip_matches_external_format() {
        let s = small();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains(r#""kind":"visual""#));
        assert!(text.contains(r#""types":["bearing"]"#));
        assert!(!text.contains("measurements"));
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let minimal = r#"{"dim":2,"anchors":[{"id":"a","pos":[0,0],"kind":"range"}],
            "nodes":[{"id":"n"}],"edges":[{"from":"a","to":"n","types":["range"]}]}"#;
        let parsed: Scenario = serde_json::from_str(minimal).unwrap();
        parsed.validate().unwrap();
        assert!(parsed.truth().is_none());
    }

    #[test]
    fn validation_rejects_bad_topology() {
        let mut s = small();
        s.edges.push(Edge { from: "x".into(), to: "a0".into(), types: vec![MeasurementType::Range] });
        assert!(s.validate().is_err(), "duplicate undirected edge");

        let mut s = small();
        s.edges[0].types = vec![MeasurementType::Bearing];
        assert!(s.validate().is_err(), "range anchor cannot supply bearings");

        let mut s = small();
        s.edges.push(Edge { from: "a0".into(), to: "a1".into(), types: vec![MeasurementType::Range] });
        assert!(s.validate().is_err());

        let mut s = small();
        s.edges[0].to = "ghost".into();
        assert!(s.validate().is_err());

        let mut s = small();
        s.nodes[0].id = "a0".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn range_only_variant_drops_bearings() {
        let r = small().range_only_variant();
        r.validate().unwrap();
        assert_eq!(r.count_anchors(AnchorKind::Visual), 0);
        assert!(r.edges.iter().all(|e| e.types == vec![MeasurementType::Range]));
    }
}
