//! Random map generation and round-trip comparison.

use super::{hausdorff_one_sided, polyline_distance, LANE_WIDTH};
use avsim::mapcore::{
    BoundaryLine, BoundaryStyle, HdMap, Lane, LanePoint, PedestrianRoute, SignalPhase, TrafficSignal,
};
use proptest::prelude::*;
use std::collections::BTreeSet;

#[derive(Debug, Clone)]
pub struct LaneSpec {
    pub parent: usize,
    /// `(heading change, length)` per segment.
    pub segments: Vec<(f64, f64)>,
    pub signal: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct TreeSpec {
    pub heading: f64,
    pub lanes: Vec<LaneSpec>,
}

pub fn lane_spec() -> impl Strategy<Value = LaneSpec> {
    (
        any::<usize>(),
        prop::collection::vec((-0.6f64..0.6, 5.0f64..40.0), 1..5),
        prop::option::of(any::<bool>()),
    )
        .prop_map(|(parent, segments, signal)| LaneSpec { parent, segments, signal })
}

pub fn tree_spec() -> impl Strategy<Value = TreeSpec> {
    (-3.1f64..3.1, prop::collection::vec(lane_spec(), 1..6)).prop_map(|(heading, lanes)| TreeSpec { heading, lanes })
}

/// Trees of lanes grown from a root; children start where their parent
/// ends. Boundaries are the centerline shifted by a per-tree constant
/// normal so their midline is the centerline.
pub fn build_map(trees: &[TreeSpec], origin: (f64, f64), routes: usize) -> HdMap {
    let mut m = HdMap::new(origin.0, origin.1);
    for (t, tree) in trees.iter().enumerate() {
        let base = LanePoint::new(1000.0 * t as f64, -500.0 * t as f64, 0.0);
        let normal = (
            -tree.heading.sin() * LANE_WIDTH / 2.0,
            tree.heading.cos() * LANE_WIDTH / 2.0,
        );
        let mut ends: Vec<(LanePoint, f64)> = Vec::new();
        for (i, spec) in tree.lanes.iter().enumerate() {
            let parent = (i > 0).then(|| spec.parent % i);
            let (mut p, mut h) = parent.map(|k| ends[k]).unwrap_or((base, tree.heading));
            let mut pts = vec![p];
            for (dh, len) in &spec.segments {
                h += dh;
                p = LanePoint::new(p.x + len * h.cos(), p.y + len * h.sin(), 0.0);
                pts.push(p);
            }
            ends.push((p, h));
            let id = format!("t{t}_l{i}");
            let shift = |s: f64| {
                pts.iter()
                    .map(|q| LanePoint::new(q.x + s * normal.0, q.y + s * normal.1, 0.0))
                    .collect::<Vec<_>>()
            };
            for (side, s, style) in [("l", 1.0, BoundaryStyle::Solid), ("r", -1.0, BoundaryStyle::Dashed)] {
                m.add_boundary(BoundaryLine {
                    id: format!("{id}_{side}"),
                    polyline: shift(s),
                    style,
                })
                .unwrap();
            }
            let mut lane = Lane::new(id.clone(), pts.clone());
            lane.left_boundary_id = Some(format!("{id}_l"));
            lane.right_boundary_id = Some(format!("{id}_r"));
            lane.speed_limit = 5.0 + i as f64;
            m.add_lane(lane).unwrap();
            if let Some(k) = parent {
                m.connect(&format!("t{t}_l{k}"), &id).unwrap();
            }
            if let Some(green) = spec.signal {
                let (a, b) = (pts[pts.len() - 2], pts[pts.len() - 1]);
                let mid = a.lerp(&b, 0.5);
                let stop = [
                    LanePoint::new(mid.x + normal.0, mid.y + normal.1, 0.0),
                    LanePoint::new(mid.x - normal.0, mid.y - normal.1, 0.0),
                ];
                m.add_signal(TrafficSignal {
                    id: format!("sig_{id}"),
                    stop_line: stop,
                    controlled_lane_ids: vec![id.clone()],
                    initial_state: if green { SignalPhase::Green } else { SignalPhase::Red },
                })
                .unwrap();
            }
        }
    }
    for r in 0..routes {
        let y = 300.0 + 10.0 * r as f64;
        m.add_pedestrian_route(PedestrianRoute {
            id: format!("walk{r}"),
            waypoints: vec![LanePoint::new(-50.0, y, 0.0), LanePoint::new(-40.0, y + 3.0, 0.0)],
        })
        .unwrap();
    }
    m
}

pub fn map_strategy() -> impl Strategy<Value = HdMap> {
    (
        prop::collection::vec(tree_spec(), 1..4),
        -60.0f64..60.0,
        -170.0f64..170.0,
        0usize..3,
    )
        .prop_map(|(trees, lat, lon, routes)| build_map(&trees, (lat, lon), routes))
}

pub fn successor_sets(m: &HdMap) -> Vec<(String, BTreeSet<String>, BTreeSet<String>)> {
    m.lanes
        .values()
        .map(|l| {
            (
                l.id.clone(),
                l.successors.iter().cloned().collect(),
                l.predecessors.iter().cloned().collect(),
            )
        })
        .collect()
}

pub fn max_point_error(a: &[LanePoint], b: &[LanePoint]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(p, q)| p.distance(q)).fold(0.0, f64::max)
}

/// Checks topology and returns the worst geometric error.
pub fn check_lanelet2(original: &HdMap, back: &HdMap) -> Result<f64, String> {
    if successor_sets(original) != successor_sets(back) {
        return Err("lane topology differs".into());
    }
    let mut worst = 0.0f64;
    for (id, b) in &original.boundaries {
        let other = back.boundaries.get(id).ok_or(format!("boundary {id} missing"))?;
        worst = worst.max(max_point_error(&b.polyline, &other.polyline));
    }
    // Imported centerlines are resampled boundary midlines: they must lie
    // on the original centerline and keep its endpoints.
    for (id, l) in &original.lanes {
        let c = &back.lanes[id].centerline;
        worst = worst
            .max(hausdorff_one_sided(c, &l.centerline))
            .max(c[0].distance(&l.centerline[0]))
            .max(c.last().unwrap().distance(l.centerline.last().unwrap()));
    }
    for (id, s) in &original.signals {
        let o = back.signals.get(id).ok_or(format!("signal {id} missing"))?;
        if o.controlled_lane_ids != s.controlled_lane_ids || o.initial_state != s.initial_state {
            return Err(format!("signal {id} differs"));
        }
        worst = worst.max(max_point_error(&s.stop_line, &o.stop_line));
    }
    for (id, r) in &original.pedestrian_routes {
        let o = back.pedestrian_routes.get(id).ok_or(format!("route {id} missing"))?;
        worst = worst.max(max_point_error(&r.waypoints, &o.waypoints));
    }
    Ok(worst)
}

pub fn check_opendrive(original: &HdMap, back: &HdMap) -> Result<f64, String> {
    if successor_sets(original) != successor_sets(back) {
        return Err("lane topology differs".into());
    }
    let mut worst = 0.0f64;
    for (id, l) in &original.lanes {
        worst = worst.max(polyline_distance(&l.centerline, &back.lanes[id].centerline));
        if back.lanes[id].turn_type != l.turn_type {
            return Err(format!("turn type of {id} differs"));
        }
    }
    let ids = |m: &HdMap| m.signals.values().map(|s| (s.id.clone(), s.controlled_lane_ids.clone(), s.initial_state)).collect::<Vec<_>>();
    if ids(original) != ids(back) {
        return Err("signals differ".into());
    }
    Ok(worst)
}

/// Five maps drawn from a fixed seed.
pub fn fixed_seed_maps() -> Vec<HdMap> {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]));
    (0..5).map(|_| map_strategy().new_tree(&mut runner).unwrap().current()).collect()
}
