mod common;

use avsim::agents::AgentKind;
use avsim::datagen::kitti::{frame_labels, occlusion_level};
use avsim::datagen::{write_kitti_frame, KittiLabel, KittiRig, Metrics, StopCounterConfig, StopCounterState};
use avsim::geometry::Pose;
use avsim::mapcore::HdMap;
use avsim::sensors::parse_sensor_config;
use avsim::world::{Shape, SpawnConfig, WorldState};
use proptest::prelude::*;

fn label_strategy() -> impl Strategy<Value = KittiLabel> {
    (
        prop::sample::select(vec!["Car", "Pedestrian", "DontCare"]),
        0.0f64..1.0,
        0u8..3,
        -3.14f64..3.14,
        prop::array::uniform4(0.0f64..2000.0),
        prop::array::uniform3(0.1f64..10.0),
        prop::array::uniform3(-100.0f64..100.0),
        -3.14f64..3.14,
    )
        .prop_map(|(kind, truncated, occluded, alpha, bbox, dimensions, location, rotation_y)| KittiLabel {
            kind: kind.into(),
            truncated,
            occluded,
            alpha,
            bbox,
            dimensions,
            location,
            rotation_y,
        })
}

fn count(trace: &[(f64, f64)]) -> u32 {
    let mut s = StopCounterState::new(StopCounterConfig::default());
    for &(t, v) in trace {
        s.update(v, t);
    }
    s.count
}

/// Speed samples at 100 Hz from `(duration, speed)` segments.
fn trace(segments: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut tick = 0u64;
    for &(dur, v) in segments {
        let n = (dur * 100.0).round() as u64;
        for _ in 0..n {
            out.push((tick as f64 / 100.0, v));
            tick += 1;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kitti_line_round_trips(l in label_strategy()) {
        let q = l.quantized();
        let line = q.to_line();
        prop_assert_eq!(line.split(' ').count(), 15);
        prop_assert_eq!(KittiLabel::parse(&line).unwrap(), q.clone());
        prop_assert_eq!(q.clone().quantized(), q);
    }

    #[test]
    fn stop_counter_counts_each_long_stop_once(
        segs in prop::collection::vec((0.05f64..3.0, prop::bool::ANY), 1..20),
    ) {
        // Alternate fully stopped and clearly moving segments.
        let segments: Vec<(f64, f64)> = segs.iter().map(|&(d, stopped)| (d, if stopped { 0.0 } else { 10.0 })).collect();
        let t = trace(&segments);
        // Oracle: maximal runs of stopped samples lasting at least the dwell.
        let mut expected = 0;
        let mut run_start: Option<f64> = None;
        let mut counted = false;
        for &(time, v) in &t {
            if v < 0.5 {
                let s = *run_start.get_or_insert(time);
                if !counted && time - s >= 1.0 - 1e-9 {
                    expected += 1;
                    counted = true;
                }
            } else {
                run_start = None;
                counted = false;
            }
        }
        prop_assert_eq!(count(&t), expected);
    }

    #[test]
    fn stop_counter_never_counts_twice_without_rearming(
        speeds in prop::collection::vec(0.0f64..0.69, 1..2000),
    ) {
        let t: Vec<(f64, f64)> = speeds.iter().enumerate().map(|(i, v)| (i as f64 / 100.0, *v)).collect();
        prop_assert!(count(&t) <= 1);
    }
}

#[test]
fn stop_counter_traces() {
    let dip = trace(&[(2.0, 8.0), (0.6, 0.1), (2.0, 8.0)]);
    let long = trace(&[(2.0, 8.0), (5.0, 0.0), (2.0, 8.0)]);
    // Stops, then hovers around the threshold without clearing the hysteresis band.
    let mut osc = trace(&[(2.0, 8.0), (1.5, 0.0)]);
    for k in 0..400 {
        let v = if (k / 20) % 2 == 0 { 0.45 } else { 0.6 };
        osc.push((3.5 + k as f64 / 100.0, v));
    }
    let counts = [count(&dip), count(&long), count(&osc)];
    assert_eq!(counts, [0, 1, 1]);
}

fn kitti_world() -> (WorldState, u32) {
    let mut w = WorldState::new(HdMap::new(48.0, 11.0), 3);
    w.add_static("road", Shape::GroundPlane { z: 0.0 }).unwrap();
    let ego = w.spawn_agent(AgentKind::Ego, Pose::from_xyz_yaw(0.0, 0.0, 0.0, 0.0), &SpawnConfig::default()).unwrap();
    let parked = SpawnConfig { allow_multiple_ego: true, ..Default::default() };
    w.spawn_agent(AgentKind::Ego, Pose::from_xyz_yaw(20.0, 3.0, 0.0, 0.3), &parked).unwrap();
    w.spawn_agent(AgentKind::Pedestrian, Pose::from_xyz_yaw(12.0, -2.0, 0.0, 1.0), &SpawnConfig::default()).unwrap();
    (w, ego)
}

#[test]
fn kitti_frame_writes_every_file() {
    let sensors = common::read(common::sim_dir().join("sensors.json"));
    let rig = KittiRig::from_sensors(&parse_sensor_config(&sensors, 100).unwrap()).unwrap();
    let (w, ego) = kitti_world();
    let dir = tempfile::tempdir().unwrap();
    write_kitti_frame(dir.path(), 3, &w, ego, &rig).unwrap();
    for (sub, ext) in [("label_2", "txt"), ("velodyne", "pcd"), ("depth", "pfm"), ("semantic", "ppm"), ("calib", "txt")] {
        let p = dir.path().join(sub).join(format!("000003.{ext}"));
        assert!(p.is_file(), "{}", p.display());
    }
    let labels = std::fs::read_to_string(dir.path().join("label_2/000003.txt")).unwrap();
    let parsed: Vec<KittiLabel> = labels.lines().map(|l| KittiLabel::parse(l).unwrap()).collect();
    assert_eq!(parsed, frame_labels(&w, ego, &rig));
    assert_eq!(parsed.iter().map(|l| l.kind.as_str()).collect::<Vec<_>>(), ["Car", "Pedestrian"]);
    for l in &parsed {
        assert_eq!(l.occluded, occlusion_level(0.0));
        assert_eq!(l.truncated, 0.0);
        assert!(l.location[2] > 0.0);
    }
    let calib = std::fs::read_to_string(dir.path().join("calib/000003.txt")).unwrap();
    assert!(calib.starts_with("P2: ") && calib.contains("\nTr_velo_to_cam: "));
}

#[test]
fn metrics_json_is_stable() {
    let (mut w, _) = kitti_world();
    for _ in 0..50 {
        w.step(&[]);
    }
    let a = Metrics::of(&w).to_json();
    assert_eq!(a, Metrics::of(&w).to_json());
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["tick"], 50);
    assert_eq!(v["seed"], 3);
}
