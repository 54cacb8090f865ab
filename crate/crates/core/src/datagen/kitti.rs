//! KITTI object labels: 2D projection with truncation, grid-sampled
//! occlusion, and the per-frame file writer.

use crate::agents::AgentState;
use crate::geometry::{wrap_angle, Pose, Vec3};
use crate::sensors::camera::{sensor_to_optical, CameraParams, Intrinsics};
use crate::sensors::formats::{write_pcd, write_pfm, write_ppm};
use crate::sensors::{
    depth_image, lidar_scan, segmentation_image, LidarParams, SegmentationRule, SensorConfig, SensorParams,
};
use crate::world::WorldState;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use thiserror::Error;

pub const NEAR_PLANE: f64 = 0.1;
pub const OCCLUSION_GRID: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum KittiError {
    #[error("expected 15 fields, found {0}")]
    FieldCount(usize),
    #[error("field {index}: cannot parse `{value}`")]
    Field { index: usize, value: String },
}

/// One label line. Numeric fields hold the values exactly as written
/// (two decimals), so a line parses back into an equal label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KittiLabel {
    pub kind: String,
    pub truncated: f64,
    pub occluded: u8,
    pub alpha: f64,
    /// `(x1, y1, x2, y2)` pixels.
    pub bbox: [f64; 4],
    /// `(h, w, l)` meters.
    pub dimensions: [f64; 3],
    /// Bottom center in the camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
}

/// Rounds to the value written with two decimals.
pub fn quantize(x: f64) -> f64 {
    let q: f64 = format!("{x:.2}").parse().unwrap();
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

impl KittiLabel {
    pub fn quantized(mut self) -> Self {
        self.truncated = quantize(self.truncated);
        self.alpha = quantize(self.alpha);
        self.bbox = self.bbox.map(quantize);
        self.dimensions = self.dimensions.map(quantize);
        self.location = self.location.map(quantize);
        self.rotation_y = quantize(self.rotation_y);
        self
    }

    pub fn to_line(&self) -> String {
        let mut s = format!("{} {:.2} {} {:.2}", self.kind, self.truncated, self.occluded, self.alpha);
        for v in self.bbox.iter().chain(&self.dimensions).chain(&self.location) {
            write!(s, " {:.2}", quantize(*v)).unwrap();
        }
        write!(s, " {:.2}", quantize(self.rotation_y)).unwrap();
        s
    }

    pub fn parse(line: &str) -> Result<Self, KittiError> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 15 {
            return Err(KittiError::FieldCount(f.len()));
        }
        let num = |i: usize| -> Result<f64, KittiError> {
            f[i].parse().map_err(|_| KittiError::Field {
                index: i,
                value: f[i].to_string(),
            })
        };
        Ok(Self {
            kind: f[0].to_string(),
            truncated: num(1)?,
            occluded: f[2].parse().map_err(|_| KittiError::Field {
                index: 2,
                value: f[2].to_string(),
            })?,
            alpha: num(3)?,
            bbox: [num(4)?, num(5)?, num(6)?, num(7)?],
            dimensions: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
        })
    }
}

/// Camera placement for projection: world pose of the sensor frame plus
/// intrinsics and image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    pub pose: Pose,
    pub k: Intrinsics,
    pub width: u32,
    pub height: u32,
}

impl CameraView {
    pub fn new(pose: Pose, p: &CameraParams) -> Self {
        Self {
            pose,
            k: p.intrinsics(),
            width: p.width,
            height: p.height,
        }
    }

    /// World point in the optical frame (x right, y down, z forward).
    pub fn to_optical(&self, p: &Vec3) -> Vec3 {
        sensor_to_optical(&self.pose.inverse_transform_point(p))
    }
}

/// The 8 corners of an agent's box in world coordinates.
pub fn box_corners(a: &AgentState) -> [Vec3; 8] {
    let (l, w, h) = (a.bbox.x / 2.0, a.bbox.y / 2.0, a.bbox.z);
    let mut out = [Vec3::zeros(); 8];
    let mut i = 0;
    for z in [0.0, h] {
        for (x, y) in [(l, w), (l, -w), (-l, -w), (-l, w)] {
            out[i] = a.pose.transform_point(&Vec3::new(x, y, z));
            i += 1;
        }
    }
    out
}

const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
];

/// Projects optical-frame corners after clipping the box edges at the near
/// plane. Returns the clipped 2D box and truncation, or `None` when nothing
/// of the box is in front of the camera or inside the image.
pub fn project_corners(corners: &[Vec3; 8], view: &CameraView) -> Option<([f64; 4], f64)> {
    let mut pts: Vec<Vec3> = corners.iter().filter(|c| c.z >= NEAR_PLANE).copied().collect();
    if pts.is_empty() {
        return None;
    }
    for (i, j) in BOX_EDGES {
        let (a, b) = (corners[i], corners[j]);
        if (a.z - NEAR_PLANE) * (b.z - NEAR_PLANE) < 0.0 {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            pts.push(a + (b - a) * t);
        }
    }
    let (mut x1, mut y1, mut x2, mut y2) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        let (u, v) = view.k.project(p);
        x1 = x1.min(u);
        y1 = y1.min(v);
        x2 = x2.max(u);
        y2 = y2.max(v);
    }
    let full = (x2 - x1) * (y2 - y1);
    let (cx1, cy1) = (x1.max(0.0), y1.max(0.0));
    let (cx2, cy2) = (x2.min(view.width as f64), y2.min(view.height as f64));
    if !(cx2 > cx1 && cy2 > cy1) || !(full > 0.0) {
        return None;
    }
    let clipped = (cx2 - cx1) * (cy2 - cy1);
    let truncated = (1.0 - clipped / full).clamp(0.0, 1.0);
    Some(([cx1, cy1, cx2, cy2], truncated))
}

pub fn project_box_2d(a: &AgentState, view: &CameraView) -> Option<([f64; 4], f64)> {
    let corners = box_corners(a).map(|c| view.to_optical(&c));
    project_corners(&corners, view)
}

/// Fraction of grid samples on the camera-facing faces of `a` whose ray
/// from `eye` first hits another instance.
pub fn occlusion_fraction(world: &WorldState, a: &AgentState, eye: &Vec3, exclude: Option<u32>) -> f64 {
    let (l, w, h) = (a.bbox.x, a.bbox.y, a.bbox.z);
    // (center offset, normal, in-face axis u with half-extent, axis v with half-extent), local frame
    let faces = [
        (Vec3::new(l / 2.0, 0.0, h / 2.0), Vec3::x(), (Vec3::y(), w / 2.0), (Vec3::z(), h / 2.0)),
        (Vec3::new(-l / 2.0, 0.0, h / 2.0), -Vec3::x(), (Vec3::y(), w / 2.0), (Vec3::z(), h / 2.0)),
        (Vec3::new(0.0, w / 2.0, h / 2.0), Vec3::y(), (Vec3::x(), l / 2.0), (Vec3::z(), h / 2.0)),
        (Vec3::new(0.0, -w / 2.0, h / 2.0), -Vec3::y(), (Vec3::x(), l / 2.0), (Vec3::z(), h / 2.0)),
        (Vec3::new(0.0, 0.0, h), Vec3::z(), (Vec3::x(), l / 2.0), (Vec3::y(), w / 2.0)),
        (Vec3::new(0.0, 0.0, 0.0), -Vec3::z(), (Vec3::x(), l / 2.0), (Vec3::y(), w / 2.0)),
    ];
    let n = OCCLUSION_GRID;
    let (mut total, mut hidden) = (0usize, 0usize);
    for (c, normal, (u, hu), (v, hv)) in faces {
        let center = a.pose.transform_point(&c);
        if a.pose.transform_vector(&normal).dot(&(eye - center)) <= 1e-12 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                let fu = -1.0 + (2 * i + 1) as f64 / n as f64;
                let fv = -1.0 + (2 * j + 1) as f64 / n as f64;
                let p = a.pose.transform_point(&(c + u * (fu * hu) + v * (fv * hv)));
                let d = p - eye;
                let dist = d.norm();
                total += 1;
                if dist <= 0.0 {
                    continue;
                }
                let hit = world.raycast_excluding(eye, &(d / dist), dist + 1e-6, exclude);
                if hit.is_some_and(|hit| hit.instance_id != a.instance_id && hit.range < dist - 1e-6) {
                    hidden += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hidden as f64 / total as f64
    }
}

pub fn occlusion_level(fraction: f64) -> u8 {
    if fraction < 0.2 {
        0
    } else if fraction < 0.6 {
        1
    } else {
        2
    }
}

/// Camera-frame heading angle about the y (down) axis.
pub fn rotation_y(view: &CameraView, yaw_world: f64) -> f64 {
    let d = sensor_to_optical(&view.pose.inverse_transform_vector(&Vec3::new(yaw_world.cos(), yaw_world.sin(), 0.0)));
    (-d.z).atan2(d.x)
}

pub fn default_classes() -> BTreeMap<String, String> {
    [("car", "Car"), ("pedestrian", "Pedestrian")]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Camera, LiDAR and label settings used for KITTI export.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiRig {
    pub camera: CameraParams,
    pub camera_mount: Pose,
    /// Camera publishing rate.
    pub rate_hz: f64,
    pub lidar: LidarParams,
    pub lidar_mount: Pose,
    pub segmentation: SegmentationRule,
    pub classes: BTreeMap<String, String>,
    pub max_range: f64,
}

impl KittiRig {
    /// Uses the first camera (depth or segmentation) and the first LiDAR
    /// among `sensors`.
    pub fn from_sensors(sensors: &[SensorConfig]) -> Result<Self, String> {
        let cam = sensors
            .iter()
            .find(|s| matches!(s.params, SensorParams::DepthCamera(_) | SensorParams::SegmentationCamera(..)))
            .ok_or("no depth or segmentation camera configured")?;
        let lidar = sensors
            .iter()
            .find_map(|s| match &s.params {
                SensorParams::Lidar(p) => Some((p.clone(), s.transform)),
                _ => None,
            })
            .ok_or("no lidar configured")?;
        let seg = sensors.iter().find_map(|s| match &s.params {
            SensorParams::SegmentationCamera(_, r) => Some(r.clone()),
            _ => None,
        });
        let camera = match &cam.params {
            SensorParams::DepthCamera(p) | SensorParams::SegmentationCamera(p, _) => p.clone(),
            _ => unreachable!(),
        };
        Ok(Self {
            camera,
            camera_mount: cam.transform,
            rate_hz: cam.rate_hz,
            lidar: lidar.0,
            lidar_mount: lidar.1,
            segmentation: seg.unwrap_or_default(),
            classes: default_classes(),
            max_range: 100.0,
        })
    }
}

/// Labels for every agent other than `ego` that projects into the image,
/// ordered by instance id.
pub fn frame_labels(world: &WorldState, ego: u32, rig: &KittiRig) -> Vec<KittiLabel> {
    let Some(me) = world.agents.get(&ego) else {
        return Vec::new();
    };
    let view = CameraView::new(me.pose.compose(&rig.camera_mount), &rig.camera);
    let mut agents: Vec<&AgentState> = world
        .agents
        .values()
        .filter(|a| a.id != ego && (a.box_center() - view.pose.position).norm() <= rig.max_range)
        .collect();
    agents.sort_by_key(|a| a.instance_id);
    let mut out = Vec::new();
    for a in agents {
        let Some((bbox, truncated)) = project_box_2d(a, &view) else {
            continue;
        };
        let occ = occlusion_fraction(world, a, &view.pose.position, Some(me.instance_id));
        let loc = view.to_optical(&a.pose.position);
        let ry = wrap_angle(rotation_y(&view, a.pose.yaw()));
        out.push(
            KittiLabel {
                kind: rig.classes.get(&a.semantic).cloned().unwrap_or_else(|| "DontCare".into()),
                truncated,
                occluded: occlusion_level(occ),
                alpha: wrap_angle(ry - loc.x.atan2(loc.z)),
                bbox,
                dimensions: [a.bbox.z, a.bbox.y, a.bbox.x],
                location: [loc.x, loc.y, loc.z],
                rotation_y: ry,
            }
            .quantized(),
        );
    }
    out
}

fn matrix_line(name: &str, m: &[f64; 12]) -> String {
    let vals: Vec<String> = m.iter().map(|v| format!("{:.6e}", if *v == 0.0 { 0.0 } else { *v })).collect();
    format!("{name}: {}\n", vals.join(" "))
}

/// Calibration text: `P2` (camera intrinsics, row-major 3x4) and
/// `Tr_velo_to_cam` (LiDAR frame to camera optical frame).
pub fn calib_text(rig: &KittiRig) -> String {
    let p2 = rig.camera.intrinsics().projection_matrix();
    let rel = rig.camera_mount.inverse_transform_point(&rig.lidar_mount.position);
    let mut tr = [0.0; 12];
    for c in 0..3 {
        let axis = Vec3::from_fn(|r, _| if r == c { 1.0 } else { 0.0 });
        let col = sensor_to_optical(&rig.camera_mount.inverse_transform_vector(&rig.lidar_mount.transform_vector(&axis)));
        for r in 0..3 {
            tr[r * 4 + c] = col[r];
        }
    }
    let t = sensor_to_optical(&rel);
    for r in 0..3 {
        tr[r * 4 + 3] = t[r];
    }
    matrix_line("P2", &p2) + &matrix_line("Tr_velo_to_cam", &tr)
}

/// Writes frame `index` of the dataset under `dir`.
pub fn write_kitti_frame(dir: &Path, index: u32, world: &WorldState, ego: u32, rig: &KittiRig) -> io::Result<()> {
    let me = world
        .agents
        .get(&ego)
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("agent {ego} not found")))?;
    let name = format!("{index:06}");
    for sub in ["label_2", "velodyne", "depth", "semantic", "calib"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    let labels: String = frame_labels(world, ego, rig).iter().map(|l| l.to_line() + "\n").collect();
    std::fs::write(dir.join("label_2").join(format!("{name}.txt")), labels)?;

    let own = Some(me.instance_id);
    let lidar_pose = me.pose.compose(&rig.lidar_mount);
    let cloud = lidar_scan(world, &lidar_pose, &rig.lidar, own);
    std::fs::write(dir.join("velodyne").join(format!("{name}.pcd")), write_pcd(&cloud.points))?;

    let cam_pose = me.pose.compose(&rig.camera_mount);
    let depth = depth_image(world, &cam_pose, &rig.camera, own);
    std::fs::write(
        dir.join("depth").join(format!("{name}.pfm")),
        write_pfm(depth.width, depth.height, &depth.data),
    )?;
    let seg = segmentation_image(world, &cam_pose, &rig.camera, &rig.segmentation, own);
    std::fs::write(
        dir.join("semantic").join(format!("{name}.ppm")),
        write_ppm(seg.width, seg.height, &seg.data),
    )?;
    std::fs::write(dir.join("calib").join(format!("{name}.txt")), calib_text(rig))?;
    Ok(())
}
