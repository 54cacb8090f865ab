mod common;

use avsim::agents::AgentKind;
use avsim::geometry::{Pose, Vec3};
use avsim::mapcore::HdMap;
use avsim::mapio::geo::LocalTangentPlane;
use avsim::sensors::formats::{read_pcd, read_pfm, read_ppm, write_pcd, write_pfm, write_ppm};
use avsim::sensors::segmentation::{hue_distance, rgb_hue};
use avsim::sensors::*;
use avsim::world::{Shape, SpawnConfig, WorldState};
use proptest::prelude::*;

fn ground_world() -> WorldState {
    let mut w = WorldState::new(HdMap::new(37.0, -122.0), 1);
    w.add_static("road", Shape::GroundPlane { z: 0.0 }).unwrap();
    w
}

fn cluttered_world(boxes: &[(f64, f64, f64, f64)]) -> WorldState {
    let mut w = ground_world();
    for &(x, y, s, yaw) in boxes {
        w.add_static("building", Shape::Box { center: Vec3::new(x, y, s), size: Vec3::new(s, s, 2.0 * s), yaw })
            .unwrap();
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gps_round_trip_within_ten_km(
        lat0 in -70.0f64..70.0, lon0 in -179.0f64..179.0,
        x in -10_000.0f64..10_000.0, y in -10_000.0f64..10_000.0, z in -50.0f64..500.0,
    ) {
        let w = WorldState::new(HdMap::new(lat0, lon0), 1);
        let fix = gps_read(&w, &Pose::from_xyz_yaw(x, y, z, 0.3));
        let (bx, by) = LocalTangentPlane::new(lat0, lon0).to_local(fix.lat, fix.lon);
        prop_assert!(((bx - x).powi(2) + (by - y).powi(2)).sqrt() < 1e-6);
        prop_assert_eq!(fix.alt, z);
    }

    #[test]
    fn lidar_count_and_range_bounds(
        beams in 1u32..16, step in 1.0f64..20.0, max_range in 5.0f64..80.0,
        boxes in prop::collection::vec((-40.0f64..40.0, -40.0f64..40.0, 1.0f64..6.0, -1.0f64..1.0), 0..6),
        h in 0.5f64..4.0,
    ) {
        let w = cluttered_world(&boxes);
        let p = LidarParams { beam_count: beams, horizontal_step_deg: step, max_range, ..Default::default() };
        let cloud = lidar_scan(&w, &Pose::from_xyz_yaw(0.0, 0.0, h, 0.4), &p, None);
        prop_assert_eq!(p.max_points(), beams as usize * p.azimuths().len());
        prop_assert!(cloud.points.len() <= p.max_points());
        for pt in &cloud.points {
            prop_assert!(pt.range() <= max_range + 1e-9);
            prop_assert!(pt.range() > 0.0);
            prop_assert!((0.1..=1.0).contains(&pt.intensity));
            prop_assert!(pt.x.is_finite() && pt.y.is_finite() && pt.z.is_finite());
        }
        prop_assert_eq!(lidar_scan(&w, &Pose::from_xyz_yaw(0.0, 0.0, h, 0.4), &p, None), cloud);
    }

    #[test]
    fn segmentation_color_is_pure_and_clustered(a in 0u32..1_000_000, b in 0u32..1_000_000) {
        let rule = SegmentationRule::default();
        let ca = segmentation_color("car", a, &rule);
        prop_assert_eq!(ca, segmentation_color("car", a, &rule));
        let hue = rgb_hue(ca).unwrap();
        prop_assert!(hue_distance(hue, rule.hue("car")) <= 10.0);
        if a != b && a < 10_000 && b < 10_000 {
            prop_assert_ne!(ca, segmentation_color("car", b, &rule));
        }
        prop_assert_eq!(segmentation_color("building", a, &rule), segmentation_color("building", b, &rule));
    }

    #[test]
    fn schedule_follows_rate_divisors(tick in 0u64..1000, rates in prop::collection::btree_set(
        prop::sample::select(vec![1u32, 2, 4, 5, 10, 20, 25, 50, 100]), 1..6)) {
        let doc: Vec<serde_json::Value> = rates.iter().enumerate().map(|(i, r)| serde_json::json!({
            "type": "gps", "name": format!("g{}", 9 - i), "rate_hz": r, "topic": format!("/g{i}")
        })).collect();
        let cfgs = parse_sensor_value(&serde_json::Value::Array(doc), 100).unwrap();
        let due = schedule(&cfgs, tick, 100);
        for c in &cfgs {
            let period = 100 / c.rate_hz as u64;
            prop_assert_eq!(due.iter().any(|d| d.name == c.name), tick % period == 0);
        }
        for pair in due.windows(2) {
            prop_assert!((pair[0].rate_hz, &pair[0].name) < (pair[1].rate_hz, &pair[1].name));
        }
    }

    #[test]
    fn file_formats_round_trip(
        pts in prop::collection::vec((-100.0f32..100.0, -100.0f32..100.0, -10.0f32..10.0, 0.0f32..1.0), 0..50),
        w in 1u32..8, h in 1u32..8, seed in any::<u32>(),
    ) {
        let cloud: Vec<LidarPoint> = pts.iter().map(|&(x, y, z, i)| LidarPoint { x: x as f64, y: y as f64, z: z as f64, intensity: i as f64 }).collect();
        let back = read_pcd(&write_pcd(&cloud)).unwrap();
        prop_assert_eq!(back, pts.iter().map(|&(x, y, z, i)| [x, y, z, i]).collect::<Vec<_>>());
        let n = (w * h) as usize;
        let depth: Vec<f32> = (0..n).map(|k| (k as u32 ^ seed) as f32 * 0.25).collect();
        prop_assert_eq!(read_pfm(&write_pfm(w, h, &depth)).unwrap(), (w, h, depth));
        let rgb: Vec<[u8; 3]> = (0..n).map(|k| { let v = (k as u32).wrapping_mul(seed | 1); [v as u8, (v >> 8) as u8, (v >> 16) as u8] }).collect();
        prop_assert_eq!(read_ppm(&write_ppm(w, h, &rgb)).unwrap(), (w, h, rgb));
    }
}

#[test]
fn vlp16_elevations_are_uniform() {
    let e = LidarParams::default().elevations();
    assert_eq!(e.len(), 16);
    for (k, el) in e.iter().enumerate() {
        assert!((el.to_degrees() - (-15.0 + 2.0 * k as f64)).abs() < 1e-12);
    }
}

#[test]
fn lidar_ground_ranges_are_analytic() {
    let w = ground_world();
    let h = 2.0;
    let p = LidarParams {
        max_range: 200.0,
        horizontal_step_deg: 1.0,
        ..Default::default()
    };
    let cloud = lidar_scan(&w, &Pose::from_xyz_yaw(0.0, 0.0, h, 0.0), &p, None);
    let down: Vec<f64> = p.elevations().into_iter().filter(|e| *e < 0.0).collect();
    assert_eq!(cloud.points.len(), down.len() * 360);
    for (i, pt) in cloud.points.iter().enumerate() {
        let el = down[i % down.len()];
        assert!((pt.range() - h / el.abs().sin()).abs() < 1e-6);
        assert!((pt.z + h).abs() < 1e-9);
    }
}

#[test]
fn depth_center_pixel_is_the_axis_ray() {
    let mut w = ground_world();
    w.add_static("wall", Shape::Box { center: Vec3::new(10.5, 0.0, 5.0), size: Vec3::new(1.0, 40.0, 10.0), yaw: 0.0 })
        .unwrap();
    let pose = Pose::from_xyz_yaw(0.0, 0.0, 1.5, 0.0);
    let p = CameraParams { width: 65, height: 37, ..Default::default() };
    let img = depth_image(&w, &pose, &p, None);
    let axis = w.raycast(&pose.position, &pose.forward(), p.max_range).unwrap().range;
    assert_eq!(img.at(32, 18), axis as f32);
    assert_eq!(axis, 10.0);
    // Off-axis pixels see the wall plane at 10/cos(angle).
    let k = p.intrinsics();
    let ray = k.pixel_ray(40, 18);
    let expected = 10.0 / (ray.x / ray.norm());
    assert!((img.at(40, 18) as f64 - expected).abs() < 1e-4);
    let one = depth_image(&w, &pose, &CameraParams { width: 1, height: 1, ..Default::default() }, None);
    assert_eq!(one.at(0, 0), 10.0);
}

#[test]
fn radar_reports_closing_target() {
    let mut w = ground_world();
    let me = w.spawn_agent(AgentKind::Ego, Pose::from_xyz_yaw(0.0, 0.0, 0.0, 0.0), &SpawnConfig::default()).unwrap();
    let oncoming = SpawnConfig { speed: 5.0, allow_multiple_ego: true, ..Default::default() };
    let t = w
        .spawn_agent(AgentKind::Ego, Pose::from_xyz_yaw(50.0, 0.0, 0.0, std::f64::consts::PI), &oncoming)
        .unwrap();
    let me = w.agents[&me].clone();
    let h = w.agents[&t].box_center().z;
    let pose = Pose::from_xyz_yaw(0.0, 0.0, h, 0.0);
    let d = radar_scan(&w, &pose, &me, &RadarParams::default());
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].instance_id, w.agents[&t].instance_id);
    assert!((d[0].range - 50.0).abs() < 1e-9);
    assert!(d[0].azimuth.abs() < 1e-12 && d[0].elevation.abs() < 1e-12);
    assert!((d[0].range_rate + 5.0).abs() < 1e-9, "{}", d[0].range_rate);
    let behind = Pose::from_xyz_yaw(0.0, 0.0, h, std::f64::consts::PI);
    assert!(radar_scan(&w, &behind, &me, &RadarParams::default()).is_empty());
}

#[test]
fn config_errors_are_typed() {
    let err = parse_sensor_config(br#"[{"type":"gps","name":"g","rate_hz":7,"topic":"/g"}]"#, 100).unwrap_err();
    assert_eq!(err.code, "rate_not_divisor");
    let err = parse_sensor_config(br#"[{"type":"sonar","name":"g","rate_hz":10,"topic":"/g"}]"#, 100).unwrap_err();
    assert_eq!(err.code, "unknown_sensor_type");
    let err = parse_sensor_config(br#"[{"type":"lidar","name":"l","rate_hz":10,"topic":"/l","beam_cnt":16}]"#, 100)
        .unwrap_err();
    assert_eq!(err.code, "invalid_config");
    assert!(err.path.starts_with("[0]") && err.message.contains("beam_cnt"), "{err}");
    let cfg = parse_sensor_config(br#"[{"type":"lidar","name":"l","rate_hz":10,"topic":"/l","beam_count":16}]"#, 100)
        .unwrap();
    assert!(matches!(&cfg[0].params, SensorParams::Lidar(p) if p.beam_count == 16));
}

#[test]
fn every_sensor_is_a_pure_function_of_the_world() {
    let json = common::read(common::sim_dir().join("sensors.json"));
    let mut w = avsim::world::load_scene(
        common::intersection_map(),
        &common::read(common::sim_dir().join("intersection_scene.json")),
        5,
    )
    .unwrap();
    let cfgs = parse_sensor_config(&json, w.tick_rate).unwrap();
    for _ in 0..150 {
        w.step(&[]);
    }
    let ego = w.first_ego().unwrap();
    for c in &cfgs {
        let a = evaluate(&w, ego, c).unwrap();
        assert_eq!(Some(&a), evaluate(&w, ego, c).as_ref(), "{}", c.name);
        let (h1, b1) = encode_output(&a, c, w.tick);
        assert_eq!((h1, b1), encode_output(&a, c, w.tick));
    }
}
