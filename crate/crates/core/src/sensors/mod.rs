//! Sensor configuration, publishing schedule and the raycast-based sensor
//! implementations.
//!
//! Configs are a JSON array. Every entry has `type`, `name`, `rate_hz`,
//! `topic`, optional `frame` and `transform` (`x y z` meters, `roll pitch
//! yaw` degrees, ego frame x-forward y-left z-up). Type-specific parameters
//! go in a `params` object or inline at the top level. Unknown keys are
//! rejected with the JSON path of the offending value.

pub mod camera;
pub mod formats;
pub mod lidar;
pub mod nav;
pub mod radar;
pub mod segmentation;
pub mod truth;

use crate::geometry::Pose;
use crate::world::WorldState;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeSet;
use thiserror::Error;

pub use camera::{depth_image, CameraParams, DepthImage, Intrinsics};
pub use lidar::{lidar_scan, LidarParams, LidarPoint, PointCloud};
pub use nav::{gps_read, imu_read, GpsFix, ImuReading};
pub use radar::{radar_scan, RadarDetection, RadarParams};
pub use segmentation::{segmentation_color, segmentation_image, ColorImage, SegmentationRule};
pub use truth::{ground_truth_boxes, Box3D, BoxParams};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct SensorError {
    /// JSON path, e.g. `[0].params.beam_count`.
    pub path: String,
    pub message: String,
    pub code: &'static str,
}

impl SensorError {
    fn new(path: impl Into<String>, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
            code,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorType {
    Lidar,
    Radar,
    Gps,
    Imu,
    DepthCamera,
    SegmentationCamera,
    Bbox3d,
    StopCounter,
}

impl SensorType {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "lidar" => Self::Lidar,
            "radar" => Self::Radar,
            "gps" => Self::Gps,
            "imu" => Self::Imu,
            "depth_camera" => Self::DepthCamera,
            "segmentation_camera" => Self::SegmentationCamera,
            "bbox3d" => Self::Bbox3d,
            "stop_counter" => Self::StopCounter,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SensorParams {
    Lidar(LidarParams),
    Radar(RadarParams),
    Gps,
    Imu,
    DepthCamera(CameraParams),
    SegmentationCamera(CameraParams, SegmentationRule),
    Bbox3d(BoxParams),
    StopCounter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub kind: SensorType,
    pub name: String,
    /// Mount pose in the ego frame.
    pub transform: Pose,
    pub rate_hz: f64,
    pub topic: String,
    pub frame: String,
    pub params: SensorParams,
}

impl SensorConfig {
    /// Ticks between publications at `tick_rate`.
    pub fn period_ticks(&self, tick_rate: u32) -> Option<u64> {
        let p = tick_rate as f64 / self.rate_hz;
        let r = p.round();
        (self.rate_hz > 0.0 && r >= 1.0 && (p - r).abs() < 1e-9).then_some(r as u64)
    }

    pub fn check_rate(&self, tick_rate: u32) -> Result<(), SensorError> {
        self.period_ticks(tick_rate).map(|_| ()).ok_or_else(|| {
            SensorError::new(
                format!("{}.rate_hz", self.name),
                "rate_not_divisor",
                format!("rate {} Hz does not divide the tick rate {tick_rate} Hz", self.rate_hz),
            )
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformSpec {
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    #[serde(default)]
    z: f64,
    #[serde(default)]
    roll: f64,
    #[serde(default)]
    pitch: f64,
    #[serde(default)]
    yaw: f64,
}

fn typed<T: DeserializeOwned>(v: Value, path: &str) -> Result<T, SensorError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let full = if inner == "." || inner.is_empty() {
            path.to_string()
        } else {
            format!("{path}.{inner}")
        };
        SensorError::new(full, "invalid_config", e.inner().to_string())
    })
}

const COMMON_KEYS: [&str; 7] = ["type", "name", "rate_hz", "topic", "frame", "transform", "params"];

fn parse_one(i: usize, v: &Value, tick_rate: u32) -> Result<SensorConfig, SensorError> {
    let at = |k: &str| format!("[{i}].{k}");
    let obj = v
        .as_object()
        .ok_or_else(|| SensorError::new(format!("[{i}]"), "invalid_config", "expected an object"))?;
    let ty = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| SensorError::new(at("type"), "invalid_config", "missing string `type`"))?;
    let kind = SensorType::parse(ty)
        .ok_or_else(|| SensorError::new(at("type"), "unknown_sensor_type", format!("unknown sensor type `{ty}`")))?;
    let string = |k: &str| -> Result<String, SensorError> {
        obj.get(k)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| SensorError::new(at(k), "invalid_config", format!("missing string `{k}`")))
    };
    let name = string("name")?;
    let topic = string("topic")?;
    let frame = match obj.get("frame") {
        None => name.clone(),
        Some(_) => string("frame")?,
    };
    let rate_hz = obj
        .get("rate_hz")
        .and_then(Value::as_f64)
        .filter(|r| r.is_finite() && *r > 0.0)
        .ok_or_else(|| SensorError::new(at("rate_hz"), "invalid_config", "`rate_hz` must be a positive number"))?;
    let transform = match obj.get("transform") {
        None => Pose::identity(),
        Some(t) => {
            let t: TransformSpec = typed(t.clone(), &at("transform"))?;
            Pose::from_xyz_rpy(t.x, t.y, t.z, t.roll.to_radians(), t.pitch.to_radians(), t.yaw.to_radians())
        }
    };

    let mut params = Map::new();
    let mut params_path = at("params");
    if let Some(p) = obj.get("params") {
        params = p
            .as_object()
            .cloned()
            .ok_or_else(|| SensorError::new(at("params"), "invalid_config", "`params` must be an object"))?;
    }
    for (k, val) in obj {
        if COMMON_KEYS.contains(&k.as_str()) {
            continue;
        }
        if params.contains_key(k) {
            return Err(SensorError::new(at(k), "invalid_config", format!("`{k}` given both inline and in params")));
        }
        params.insert(k.clone(), val.clone());
        if obj.get("params").is_none() {
            params_path = format!("[{i}]");
        }
    }
    let pv = Value::Object(params);
    let empty = |pv: &Value| -> Result<(), SensorError> {
        if let Some((k, _)) = pv.as_object().and_then(|m| m.iter().next()) {
            return Err(SensorError::new(
                format!("{params_path}.{k}"),
                "invalid_config",
                format!("unknown field `{k}` for sensor type `{ty}`"),
            ));
        }
        Ok(())
    };
    let params = match kind {
        SensorType::Lidar => {
            let p: LidarParams = typed(pv, &params_path)?;
            p.validate().map_err(|m| SensorError::new(params_path.clone(), "invalid_config", m))?;
            SensorParams::Lidar(p)
        }
        SensorType::Radar => SensorParams::Radar(typed(pv, &params_path)?),
        SensorType::Gps => {
            empty(&pv)?;
            SensorParams::Gps
        }
        SensorType::Imu => {
            empty(&pv)?;
            SensorParams::Imu
        }
        SensorType::DepthCamera => {
            let p: CameraParams = typed(pv, &params_path)?;
            p.validate().map_err(|m| SensorError::new(params_path.clone(), "invalid_config", m))?;
            SensorParams::DepthCamera(p)
        }
        SensorType::SegmentationCamera => {
            let mut m = pv.as_object().cloned().unwrap_or_default();
            let mut rule = SegmentationRule::default();
            if let Some(inst) = m.remove("instanced_semantics") {
                rule.instanced = typed(inst, &format!("{params_path}.instanced_semantics"))?;
            }
            if let Some(h) = m.remove("hues") {
                rule.hues = typed(h, &format!("{params_path}.hues"))?;
            }
            rule.validate().map_err(|e| SensorError::new(format!("{params_path}.hues"), "invalid_config", e))?;
            let p: CameraParams = typed(Value::Object(m), &params_path)?;
            p.validate().map_err(|m| SensorError::new(params_path.clone(), "invalid_config", m))?;
            SensorParams::SegmentationCamera(p, rule)
        }
        SensorType::Bbox3d => SensorParams::Bbox3d(typed(pv, &params_path)?),
        SensorType::StopCounter => {
            empty(&pv)?;
            SensorParams::StopCounter
        }
    };
    let cfg = SensorConfig {
        kind,
        name,
        transform,
        rate_hz,
        topic,
        frame,
        params,
    };
    cfg.check_rate(tick_rate)
        .map_err(|e| SensorError::new(at("rate_hz"), e.code, e.message))?;
    Ok(cfg)
}

/// Parses a JSON array of sensor configurations for a world running at
/// `tick_rate` Hz.
pub fn parse_sensor_config(json: &[u8], tick_rate: u32) -> Result<Vec<SensorConfig>, SensorError> {
    let v: Value = serde_json::from_slice(json)
        .map_err(|e| SensorError::new("", "invalid_config", e.to_string()))?;
    parse_sensor_value(&v, tick_rate)
}

pub fn parse_sensor_value(v: &Value, tick_rate: u32) -> Result<Vec<SensorConfig>, SensorError> {
    let arr = v
        .as_array()
        .ok_or_else(|| SensorError::new("", "invalid_config", "expected a JSON array"))?;
    let mut out = Vec::with_capacity(arr.len());
    let mut topics = BTreeSet::new();
    let mut names = BTreeSet::new();
    for (i, item) in arr.iter().enumerate() {
        let cfg = parse_one(i, item, tick_rate)?;
        if !topics.insert(cfg.topic.clone()) {
            return Err(SensorError::new(format!("[{i}].topic"), "duplicate_topic", format!("duplicate topic `{}`", cfg.topic)));
        }
        if !names.insert(cfg.name.clone()) {
            return Err(SensorError::new(format!("[{i}].name"), "duplicate_name", format!("duplicate name `{}`", cfg.name)));
        }
        out.push(cfg);
    }
    Ok(out)
}

/// Sensors due at `tick`, ordered by `(rate_hz, name)`.
pub fn schedule<'a>(configs: &'a [SensorConfig], tick: u64, tick_rate: u32) -> Vec<&'a SensorConfig> {
    let mut due: Vec<&SensorConfig> = configs
        .iter()
        .filter(|c| c.period_ticks(tick_rate).is_some_and(|p| tick % p == 0))
        .collect();
    due.sort_by(|a, b| a.rate_hz.total_cmp(&b.rate_hz).then_with(|| a.name.cmp(&b.name)));
    due
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorOutput {
    PointCloud(PointCloud),
    Radar(Vec<RadarDetection>),
    Gps(GpsFix),
    Imu(ImuReading),
    Depth(DepthImage),
    Segmentation(ColorImage),
    Boxes(Vec<Box3D>),
    StopCount(u32),
}

/// World pose of a sensor mounted on `ego`.
pub fn sensor_pose(world: &WorldState, ego: u32, cfg: &SensorConfig) -> Option<Pose> {
    world.agents.get(&ego).map(|a| a.pose.compose(&cfg.transform))
}

/// Evaluates one sensor on the current world state. `None` when the ego is
/// gone.
pub fn evaluate(world: &WorldState, ego: u32, cfg: &SensorConfig) -> Option<SensorOutput> {
    let agent = world.agents.get(&ego)?;
    let pose = agent.pose.compose(&cfg.transform);
    let own = Some(agent.instance_id);
    Some(match &cfg.params {
        SensorParams::Lidar(p) => SensorOutput::PointCloud(lidar_scan(world, &pose, p, own)),
        SensorParams::Radar(p) => SensorOutput::Radar(radar_scan(world, &pose, agent, p)),
        SensorParams::Gps => SensorOutput::Gps(gps_read(world, &pose)),
        SensorParams::Imu => SensorOutput::Imu(imu_read(world, agent, &cfg.transform)),
        SensorParams::DepthCamera(p) => SensorOutput::Depth(depth_image(world, &pose, p, own)),
        SensorParams::SegmentationCamera(p, rule) => {
            SensorOutput::Segmentation(segmentation_image(world, &pose, p, rule, own))
        }
        SensorParams::Bbox3d(p) => SensorOutput::Boxes(ground_truth_boxes(world, &pose, ego, p)),
        SensorParams::StopCounter => {
            SensorOutput::StopCount(world.stop_counters.get(&ego).map(|c| c.count).unwrap_or(0))
        }
    })
}

/// Wire encoding: JSON header plus optional binary attachment.
pub fn encode_output(out: &SensorOutput, cfg: &SensorConfig, tick: u64) -> (Value, Option<Vec<u8>>) {
    use serde_json::json;
    let base = |ty: &str| json!({"type": ty, "tick": tick, "frame": cfg.frame, "sensor": cfg.name});
    let merge = |mut a: Value, b: Value| {
        if let (Some(a), Value::Object(b)) = (a.as_object_mut(), b) {
            a.extend(b);
        }
        a
    };
    match out {
        SensorOutput::PointCloud(pc) => {
            let mut bytes = Vec::with_capacity(pc.points.len() * 16);
            for p in &pc.points {
                for v in [p.x, p.y, p.z, p.intensity] {
                    bytes.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            (
                merge(
                    base("point_cloud"),
                    json!({"count": pc.points.len(), "fields": ["x", "y", "z", "intensity"], "encoding": "f32le"}),
                ),
                Some(bytes),
            )
        }
        SensorOutput::Depth(img) => (
            merge(base("depth_image"), json!({"width": img.width, "height": img.height, "format": "pfm"})),
            Some(formats::write_pfm(img.width, img.height, &img.data)),
        ),
        SensorOutput::Segmentation(img) => (
            merge(base("segmentation_image"), json!({"width": img.width, "height": img.height, "format": "ppm"})),
            Some(formats::write_ppm(img.width, img.height, &img.data)),
        ),
        SensorOutput::Radar(d) => (merge(base("radar"), json!({"detections": d})), None),
        SensorOutput::Gps(g) => (merge(base("gps"), serde_json::to_value(g).unwrap()), None),
        SensorOutput::Imu(m) => (merge(base("imu"), serde_json::to_value(m).unwrap()), None),
        SensorOutput::Boxes(b) => (merge(base("bbox3d"), json!({"boxes": b})), None),
        SensorOutput::StopCount(c) => (merge(base("stop_counter"), json!({"count": c})), None),
    }
}
