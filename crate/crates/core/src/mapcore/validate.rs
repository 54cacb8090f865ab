use super::{HdMap, LanePoint};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which structural rule an element breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationRule {
    AsymmetricLink,
    DanglingRef,
    DegeneratePolyline,
    EmptyControlList,
    IdMismatch,
    NonFinite,
    NonPositiveSpeed,
    TooFewPoints,
}

impl ViolationRule {
    pub fn code(&self) -> &'static str {
        match self {
            ViolationRule::AsymmetricLink => "asymmetric_link",
            ViolationRule::DanglingRef => "dangling_ref",
            ViolationRule::DegeneratePolyline => "degenerate_polyline",
            ViolationRule::EmptyControlList => "empty_control_list",
            ViolationRule::IdMismatch => "id_mismatch",
            ViolationRule::NonFinite => "non_finite",
            ViolationRule::NonPositiveSpeed => "non_positive_speed",
            ViolationRule::TooFewPoints => "too_few_points",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `kind:id`, e.g. `lane:A`.
    pub element: String,
    pub rule: ViolationRule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.element, self.rule.code(), self.detail)
    }
}

/// Checks every structural invariant of the map and reports one
/// [`Violation`] per breakage, sorted by element then rule.
pub fn validate(map: &HdMap) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |element: String, rule: ViolationRule, detail: String| {
        out.push(Violation {
            element,
            rule,
            detail,
        })
    };

    for (key, lane) in &map.lanes {
        let el = format!("lane:{key}");
        if &lane.id != key {
            push(el.clone(), ViolationRule::IdMismatch, format!("stored id `{}`", lane.id));
        }
        check_polyline(&el, &lane.centerline, &mut push);
        if !(lane.speed_limit.is_finite() && lane.speed_limit > 0.0) {
            push(
                el.clone(),
                ViolationRule::NonPositiveSpeed,
                format!("speed_limit {}", lane.speed_limit),
            );
        }
        for (field, bid) in [
            ("left_boundary_id", &lane.left_boundary_id),
            ("right_boundary_id", &lane.right_boundary_id),
        ] {
            if let Some(b) = bid {
                if !map.boundaries.contains_key(b) {
                    push(el.clone(), ViolationRule::DanglingRef, format!("{field} → {b}"));
                }
            }
        }
        for s in &lane.successors {
            match map.lanes.get(s) {
                None => push(el.clone(), ViolationRule::DanglingRef, format!("{key}→{s}")),
                Some(other) if !other.predecessors.contains(key) => push(
                    el.clone(),
                    ViolationRule::AsymmetricLink,
                    format!("{s} does not list {key} as predecessor"),
                ),
                _ => {}
            }
        }
        for p in &lane.predecessors {
            match map.lanes.get(p) {
                None => push(el.clone(), ViolationRule::DanglingRef, format!("{p}→{key}")),
                Some(other) if !other.successors.contains(key) => push(
                    el.clone(),
                    ViolationRule::AsymmetricLink,
                    format!("{p} does not list {key} as successor"),
                ),
                _ => {}
            }
        }
    }

    for (key, b) in &map.boundaries {
        let el = format!("boundary:{key}");
        if &b.id != key {
            push(el.clone(), ViolationRule::IdMismatch, format!("stored id `{}`", b.id));
        }
        check_polyline(&el, &b.polyline, &mut push);
    }

    let controls = map
        .signals
        .iter()
        .map(|(k, s)| ("signal", k, &s.id, &s.stop_line, &s.controlled_lane_ids))
        .chain(
            map.signs
                .iter()
                .map(|(k, s)| ("sign", k, &s.id, &s.stop_line, &s.controlled_lane_ids)),
        );
    for (kind, key, id, line, lanes) in controls {
        let el = format!("{kind}:{key}");
        if id != key {
            push(el.clone(), ViolationRule::IdMismatch, format!("stored id `{id}`"));
        }
        check_polyline(&el, line, &mut push);
        if lanes.is_empty() {
            push(el.clone(), ViolationRule::EmptyControlList, String::new());
        }
        for l in lanes {
            if !map.lanes.contains_key(l) {
                push(el.clone(), ViolationRule::DanglingRef, format!("controls {l}"));
            }
        }
    }

    for (key, r) in &map.pedestrian_routes {
        let el = format!("pedestrian_route:{key}");
        if &r.id != key {
            push(el.clone(), ViolationRule::IdMismatch, format!("stored id `{}`", r.id));
        }
        check_polyline(&el, &r.waypoints, &mut push);
    }

    out.sort_by(|a, b| {
        (a.element.as_str(), a.rule, a.detail.as_str()).cmp(&(
            b.element.as_str(),
            b.rule,
            b.detail.as_str(),
        ))
    });
    out
}

fn check_polyline(
    el: &str,
    pts: &[LanePoint],
    push: &mut impl FnMut(String, ViolationRule, String),
) {
    if pts.len() < 2 {
        push(
            el.to_string(),
            ViolationRule::TooFewPoints,
            format!("{} point(s)", pts.len()),
        );
    }
    if let Some(i) = pts.iter().position(|p| !p.is_finite()) {
        push(el.to_string(), ViolationRule::NonFinite, format!("point {i}"));
    }
    for (i, w) in pts.windows(2).enumerate() {
        if w[0] == w[1] {
            push(
                el.to_string(),
                ViolationRule::DegeneratePolyline,
                format!("points {i} and {} coincide", i + 1),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapcore::{Lane, TrafficSignal, SignalPhase};

    #[test]
    fn empty_map_has_no_violations() {
        assert!(validate(&HdMap::default()).is_empty());
    }

    #[test]
    fn dangling_successor_reported_once() {
        let mut m = HdMap::default();
        let mut a = Lane::new("A", vec![LanePoint::new(0., 0., 0.), LanePoint::new(1., 0., 0.)]);
        a.successors.push("B".into());
        m.lanes.insert("A".into(), a);
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, ViolationRule::DanglingRef);
        assert_eq!(v[0].element, "lane:A");
        assert_eq!(v[0].detail, "A→B");
    }

    #[test]
    fn repeated_centerline_point_is_degenerate() {
        let mut m = HdMap::default();
        let p = LanePoint::new(3., 4., 0.);
        m.lanes.insert(
            "L".into(),
            Lane::new("L", vec![LanePoint::new(0., 0., 0.), p, p]),
        );
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, ViolationRule::DegeneratePolyline);
    }

    #[test]
    fn asymmetric_link_and_signal_refs() {
        let mut m = HdMap::default();
        let mut a = Lane::new("a", vec![LanePoint::new(0., 0., 0.), LanePoint::new(1., 0., 0.)]);
        a.successors.push("b".into());
        m.lanes.insert("a".into(), a);
        m.lanes.insert(
            "b".into(),
            Lane::new("b", vec![LanePoint::new(1., 0., 0.), LanePoint::new(2., 0., 0.)]),
        );
        m.signals.insert(
            "s".into(),
            TrafficSignal {
                id: "s".into(),
                stop_line: [LanePoint::new(1., -1., 0.), LanePoint::new(1., 1., 0.)],
                controlled_lane_ids: vec!["nope".into()],
                initial_state: SignalPhase::Red,
            },
        );
        let v = validate(&m);
        let rules: Vec<_> = v.iter().map(|v| (v.element.as_str(), v.rule)).collect();
        assert_eq!(
            rules,
            vec![
                ("lane:a", ViolationRule::AsymmetricLink),
                ("signal:s", ViolationRule::DanglingRef)
            ]
        );
        assert_eq!(v, validate(&m));
    }
}
