#![allow(dead_code)]

pub mod mapgen;
pub mod ws;

use avsim::mapcore::{
    BoundaryLine, BoundaryStyle, HdMap, Lane, LanePoint, PedestrianRoute, SignalPhase,
    TrafficSignal, TurnType,
};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;

pub const LANE_WIDTH: f64 = 3.5;
pub const ARM_LENGTH: f64 = 100.0;
/// Half size of the junction box; arms start this far from the center.
pub const JUNCTION_HALF: f64 = 7.0;
/// Stop lines sit this far before the junction box.
pub const STOP_SETBACK: f64 = 1.0;
pub const ARMS: [&str; 4] = ["s", "e", "n", "w"];

pub fn testdata() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../testdata"))
}

pub fn sim_dir() -> PathBuf {
    testdata().join("autonomous_driving_simulator_headless_determinis")
}

pub fn read(path: impl AsRef<std::path::Path>) -> Vec<u8> {
    let p = path.as_ref();
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Compares `actual` against a golden file, rewriting it when
/// `AVSIM_BLESS=1`.
pub fn golden(path: impl AsRef<std::path::Path>, actual: &[u8]) {
    let p = path.as_ref();
    if std::env::var("AVSIM_BLESS").as_deref() == Ok("1") {
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, actual).unwrap();
        return;
    }
    let expected = read(p);
    assert!(expected == actual, "{} differs from generated output (rerun with AVSIM_BLESS=1)", p.display());
}

fn rot(k: usize, x: f64, y: f64) -> LanePoint {
    let (s, c) = (k as f64 * FRAC_PI_2).sin_cos();
    // Snap so quarter turns are exact.
    let (s, c) = (s.round(), c.round());
    LanePoint::new(c * x - s * y + 0.0, s * x + c * y + 0.0, 0.0)
}

fn line(k: usize, a: (f64, f64), b: (f64, f64)) -> Vec<LanePoint> {
    vec![rot(k, a.0, a.1), rot(k, b.0, b.1)]
}

fn arc(k: usize, center: (f64, f64), r: f64, from: f64, to: f64, n: usize) -> Vec<LanePoint> {
    (0..=n)
        .map(|i| {
            let t = from + (to - from) * i as f64 / n as f64;
            rot(k, center.0 + r * t.cos(), center.1 + r * t.sin())
        })
        .collect()
}

fn add_lane(
    m: &mut HdMap,
    id: String,
    center: Vec<LanePoint>,
    left: Vec<LanePoint>,
    right: Vec<LanePoint>,
    style: BoundaryStyle,
    speed: f64,
    turn: TurnType,
) {
    let (l, r) = (format!("{id}_l"), format!("{id}_r"));
    m.add_boundary(BoundaryLine {
        id: l.clone(),
        polyline: left,
        style,
    })
    .unwrap();
    m.add_boundary(BoundaryLine {
        id: r.clone(),
        polyline: right,
        style,
    })
    .unwrap();
    let mut lane = Lane::new(id, center);
    lane.left_boundary_id = Some(l);
    lane.right_boundary_id = Some(r);
    lane.speed_limit = speed;
    lane.turn_type = turn;
    m.add_lane(lane).unwrap();
}

/// Four-arm signalized intersection centered on the origin, right-hand
/// traffic, one lane per direction. Arm `a` has lanes `a_in` (towards the
/// center) and `a_out`; junction lanes are `a_in_b` for every exit arm `b`.
pub fn intersection_map() -> HdMap {
    let mut m = HdMap::new(37.3861, -122.0839);
    let (h, w, j, len) = (LANE_WIDTH / 2.0, LANE_WIDTH, JUNCTION_HALF, ARM_LENGTH);
    for (k, arm) in ARMS.iter().enumerate() {
        add_lane(
            &mut m,
            format!("{arm}_in"),
            line(k, (h, -len), (h, -j)),
            line(k, (0.0, -len), (0.0, -j)),
            line(k, (w, -len), (w, -j)),
            BoundaryStyle::Solid,
            13.89,
            TurnType::Straight,
        );
        add_lane(
            &mut m,
            format!("{arm}_out"),
            line(k, (-h, -j), (-h, -len)),
            line(k, (0.0, -j), (0.0, -len)),
            line(k, (-w, -j), (-w, -len)),
            BoundaryStyle::Solid,
            13.89,
            TurnType::Straight,
        );
    }
    for (k, arm) in ARMS.iter().enumerate() {
        let straight = ARMS[(k + 2) % 4];
        let right = ARMS[(k + 1) % 4];
        let left = ARMS[(k + 3) % 4];
        add_lane(
            &mut m,
            format!("{arm}_in_{straight}"),
            line(k, (h, -j), (h, j)),
            line(k, (0.0, -j), (0.0, j)),
            line(k, (w, -j), (w, j)),
            BoundaryStyle::Dashed,
            13.89,
            TurnType::Straight,
        );
        add_lane(
            &mut m,
            format!("{arm}_in_{right}"),
            arc(k, (j, -j), j - h, PI, FRAC_PI_2, 12),
            arc(k, (j, -j), j, PI, FRAC_PI_2, 12),
            arc(k, (j, -j), j - w, PI, FRAC_PI_2, 12),
            BoundaryStyle::Dashed,
            5.0,
            TurnType::Right,
        );
        add_lane(
            &mut m,
            format!("{arm}_in_{left}"),
            arc(k, (-j, -j), j + h, 0.0, FRAC_PI_2, 16),
            arc(k, (-j, -j), j, 0.0, FRAC_PI_2, 16),
            arc(k, (-j, -j), j + w, 0.0, FRAC_PI_2, 16),
            BoundaryStyle::Dashed,
            7.0,
            TurnType::Left,
        );
        for exit in [straight, right, left] {
            let via = format!("{arm}_in_{exit}");
            m.connect(&format!("{arm}_in"), &via).unwrap();
            m.connect(&via, &format!("{exit}_out")).unwrap();
        }
    }
    for (k, arm) in ARMS.iter().enumerate() {
        let y = -(j + STOP_SETBACK);
        m.add_signal(TrafficSignal {
            id: format!("sig_{arm}"),
            stop_line: [rot(k, 0.0, y), rot(k, w, y)],
            controlled_lane_ids: vec![format!("{arm}_in")],
            initial_state: if k % 2 == 0 { SignalPhase::Green } else { SignalPhase::Red },
        })
        .unwrap();
    }
    for (k, arm) in [(0usize, "s"), (2, "n")] {
        m.add_pedestrian_route(PedestrianRoute {
            id: format!("cw_{arm}"),
            waypoints: vec![rot(k, -6.0, -11.0), rot(k, 0.0, -11.0), rot(k, 6.0, -11.0)],
        })
        .unwrap();
    }
    m
}

/// Lane ids in route order for a straight run through the intersection.
pub fn straight_route(arm: usize) -> [String; 3] {
    let a = ARMS[arm];
    let b = ARMS[(arm + 2) % 4];
    [format!("{a}_in"), format!("{a}_in_{b}"), format!("{b}_out")]
}

/// Single-lane map along +x from `x0` to `x1` with a signal whose stop line
/// crosses it at `stop_x`.
pub fn signal_corridor(x0: f64, x1: f64, stop_x: f64, initial: SignalPhase) -> HdMap {
    let mut m = HdMap::new(0.0, 0.0);
    m.add_lane(Lane::new("road", vec![LanePoint::new(x0, 0.0, 0.0), LanePoint::new(x1, 0.0, 0.0)]))
        .unwrap();
    m.add_signal(TrafficSignal {
        id: "sig".into(),
        stop_line: [
            LanePoint::new(stop_x, -LANE_WIDTH / 2.0, 0.0),
            LanePoint::new(stop_x, LANE_WIDTH / 2.0, 0.0),
        ],
        controlled_lane_ids: vec!["road".into()],
        initial_state: initial,
    })
    .unwrap();
    m
}

/// Largest distance from any point of `a` to the polyline `b`.
pub fn hausdorff_one_sided(a: &[LanePoint], b: &[LanePoint]) -> f64 {
    a.iter()
        .map(|p| {
            b.windows(2)
                .map(|s| point_segment(p, &s[0], &s[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Symmetric polyline distance.
pub fn polyline_distance(a: &[LanePoint], b: &[LanePoint]) -> f64 {
    hausdorff_one_sided(a, b).max(hausdorff_one_sided(b, a))
}

fn point_segment(p: &LanePoint, a: &LanePoint, b: &LanePoint) -> f64 {
    let (dx, dy, dz) = (b.x - a.x, b.y - a.y, b.z - a.z);
    let len2 = dx * dx + dy * dy + dz * dz;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy + (p.z - a.z) * dz) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = LanePoint::new(a.x + t * dx, a.y + t * dy, a.z + t * dz);
    p.distance(&q)
}
