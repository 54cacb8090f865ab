//! In-memory HD-map model: lane graph, boundaries, traffic control and
//! pedestrian routes, plus lane-graph queries and the native JSON format.

mod native;
mod query;
mod validate;

pub use native::{load_native, save_native, NATIVE_VERSION};
pub use query::{CenterlineSample, LaneProjection};
pub use validate::{validate, Violation, ViolationRule};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("unknown lane `{0}`")]
    UnknownLane(String),
    #[error("map has no lanes")]
    EmptyMap,
    #[error("spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("malformed map document: {0}")]
    Malformed(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unsupported native map version {found} (expected {expected})")]
    Version { found: i64, expected: i64 },
    #[error("map failed validation with {} violation(s): {}", .0.len(), summarize(.0))]
    Invalid(Vec<Violation>),
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .take(5)
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A point in the local map frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl LanePoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn planar_distance(&self, other: &LanePoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn distance(&self, other: &LanePoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    pub fn lerp(&self, other: &LanePoint, t: f64) -> LanePoint {
        LanePoint {
            x: self.x + (other.x - self.x) * t,
            y: self.y + (other.y - self.y) * t,
            z: self.z + (other.z - self.z) * t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnType {
    #[default]
    Straight,
    Left,
    Right,
    UTurn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: String,
    pub centerline: Vec<LanePoint>,
    #[serde(default)]
    pub left_boundary_id: Option<String>,
    #[serde(default)]
    pub right_boundary_id: Option<String>,
    #[serde(default)]
    pub successors: Vec<String>,
    #[serde(default)]
    pub predecessors: Vec<String>,
    pub speed_limit: f64,
    #[serde(default)]
    pub turn_type: TurnType,
}

impl Lane {
    /// A lane with no links or boundaries and the default urban speed limit.
    pub fn new(id: impl Into<String>, centerline: Vec<LanePoint>) -> Self {
        Self {
            id: id.into(),
            centerline,
            left_boundary_id: None,
            right_boundary_id: None,
            successors: Vec::new(),
            predecessors: Vec::new(),
            speed_limit: DEFAULT_SPEED_LIMIT,
            turn_type: TurnType::Straight,
        }
    }

    /// Planar arc length of the centerline.
    pub fn length(&self) -> f64 {
        polyline_length(&self.centerline)
    }
}

/// 50 km/h.
pub const DEFAULT_SPEED_LIMIT: f64 = 13.89;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryStyle {
    #[default]
    Solid,
    Dashed,
    Double,
    Curb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryLine {
    pub id: String,
    pub polyline: Vec<LanePoint>,
    #[serde(default)]
    pub style: BoundaryStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPhase {
    Red,
    Yellow,
    Green,
}

impl SignalPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignalPhase::Red => "red",
            SignalPhase::Yellow => "yellow",
            SignalPhase::Green => "green",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "red" => Some(SignalPhase::Red),
            "yellow" => Some(SignalPhase::Yellow),
            "green" => Some(SignalPhase::Green),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSignal {
    pub id: String,
    pub stop_line: [LanePoint; 2],
    pub controlled_lane_ids: Vec<String>,
    pub initial_state: SignalPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignKind {
    Stop,
    Yield,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSign {
    pub id: String,
    pub kind: SignKind,
    pub stop_line: [LanePoint; 2],
    pub controlled_lane_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianRoute {
    pub id: String,
    pub waypoints: Vec<LanePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoOrigin {
    pub lat: f64,
    pub lon: f64,
}

/// HD map. Collections are keyed by element id so iteration order is the
/// lexicographic id order everywhere.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HdMap {
    pub origin: GeoOrigin,
    pub lanes: BTreeMap<String, Lane>,
    pub boundaries: BTreeMap<String, BoundaryLine>,
    pub signals: BTreeMap<String, TrafficSignal>,
    pub signs: BTreeMap<String, TrafficSign>,
    pub pedestrian_routes: BTreeMap<String, PedestrianRoute>,
}

impl HdMap {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Self {
        Self {
            origin: GeoOrigin {
                lat: origin_lat,
                lon: origin_lon,
            },
            ..Default::default()
        }
    }

    pub fn lane(&self, id: &str) -> Result<&Lane, MapError> {
        self.lanes
            .get(id)
            .ok_or_else(|| MapError::UnknownLane(id.to_string()))
    }

    /// Inserts a lane and mirrors its successor/predecessor links onto the
    /// referenced lanes. Every referenced lane must already exist.
    pub fn add_lane(&mut self, lane: Lane) -> Result<(), MapError> {
        if self.lanes.contains_key(&lane.id) {
            return Err(MapError::DuplicateId {
                kind: "lane",
                id: lane.id,
            });
        }
        for other in lane.successors.iter().chain(&lane.predecessors) {
            if !self.lanes.contains_key(other) {
                return Err(MapError::UnknownLane(other.clone()));
            }
        }
        let id = lane.id.clone();
        let succ = lane.successors.clone();
        let pred = lane.predecessors.clone();
        self.lanes.insert(id.clone(), lane);
        for s in succ {
            push_unique(&mut self.lanes.get_mut(&s).unwrap().predecessors, &id);
        }
        for p in pred {
            push_unique(&mut self.lanes.get_mut(&p).unwrap().successors, &id);
        }
        Ok(())
    }

    /// Adds the directed link `from → to` on both ends.
    pub fn connect(&mut self, from: &str, to: &str) -> Result<(), MapError> {
        if !self.lanes.contains_key(to) {
            return Err(MapError::UnknownLane(to.to_string()));
        }
        let a = self
            .lanes
            .get_mut(from)
            .ok_or_else(|| MapError::UnknownLane(from.to_string()))?;
        push_unique(&mut a.successors, to);
        push_unique(&mut self.lanes.get_mut(to).unwrap().predecessors, from);
        Ok(())
    }

    /// Removes a lane together with every link and control reference to it.
    pub fn remove_lane(&mut self, id: &str) -> Result<Lane, MapError> {
        let lane = self
            .lanes
            .remove(id)
            .ok_or_else(|| MapError::UnknownLane(id.to_string()))?;
        for other in self.lanes.values_mut() {
            other.successors.retain(|s| s != id);
            other.predecessors.retain(|s| s != id);
        }
        for s in self.signals.values_mut() {
            s.controlled_lane_ids.retain(|l| l != id);
        }
        for s in self.signs.values_mut() {
            s.controlled_lane_ids.retain(|l| l != id);
        }
        Ok(lane)
    }

    pub fn add_boundary(&mut self, b: BoundaryLine) -> Result<(), MapError> {
        insert_unique(&mut self.boundaries, "boundary", b.id.clone(), b)
    }

    pub fn add_signal(&mut self, s: TrafficSignal) -> Result<(), MapError> {
        insert_unique(&mut self.signals, "signal", s.id.clone(), s)
    }

    pub fn add_sign(&mut self, s: TrafficSign) -> Result<(), MapError> {
        insert_unique(&mut self.signs, "sign", s.id.clone(), s)
    }

    pub fn add_pedestrian_route(&mut self, r: PedestrianRoute) -> Result<(), MapError> {
        insert_unique(&mut self.pedestrian_routes, "pedestrian_route", r.id.clone(), r)
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
            && self.boundaries.is_empty()
            && self.signals.is_empty()
            && self.signs.is_empty()
            && self.pedestrian_routes.is_empty()
    }
}

fn insert_unique<T>(
    map: &mut BTreeMap<String, T>,
    kind: &'static str,
    id: String,
    value: T,
) -> Result<(), MapError> {
    if map.contains_key(&id) {
        return Err(MapError::DuplicateId { kind, id });
    }
    map.insert(id, value);
    Ok(())
}

fn push_unique(list: &mut Vec<String>, id: &str) {
    if !list.iter().any(|x| x == id) {
        list.push(id.to_string());
    }
}

/// Planar length of a polyline.
pub fn polyline_length(points: &[LanePoint]) -> f64 {
    points
        .windows(2)
        .map(|w| w[0].planar_distance(&w[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(id: &str, y0: f64, y1: f64) -> Lane {
        Lane::new(
            id,
            vec![LanePoint::new(0.0, y0, 0.0), LanePoint::new(0.0, y1, 0.0)],
        )
    }

    #[test]
    fn add_lane_mirrors_links() {
        let mut m = HdMap::default();
        m.add_lane(straight("a", 0.0, 10.0)).unwrap();
        let mut b = straight("b", 10.0, 20.0);
        b.predecessors.push("a".into());
        m.add_lane(b).unwrap();
        assert_eq!(m.lanes["a"].successors, vec!["b".to_string()]);
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn add_lane_rejects_dangling_and_duplicates() {
        let mut m = HdMap::default();
        let mut a = straight("a", 0.0, 10.0);
        a.successors.push("zz".into());
        assert!(matches!(m.add_lane(a), Err(MapError::UnknownLane(_))));
        m.add_lane(straight("a", 0.0, 10.0)).unwrap();
        assert!(matches!(
            m.add_lane(straight("a", 0.0, 10.0)),
            Err(MapError::DuplicateId { .. })
        ));
    }

    #[test]
    fn remove_lane_keeps_symmetry() {
        let mut m = HdMap::default();
        m.add_lane(straight("a", 0.0, 10.0)).unwrap();
        m.add_lane(straight("b", 10.0, 20.0)).unwrap();
        m.add_lane(straight("c", 20.0, 30.0)).unwrap();
        m.connect("a", "b").unwrap();
        m.connect("b", "c").unwrap();
        m.remove_lane("b").unwrap();
        assert!(m.lanes["a"].successors.is_empty());
        assert!(m.lanes["c"].predecessors.is_empty());
        assert!(validate(&m).is_empty());
    }
}
