//! Scene descriptor: statics, environment, light cycles and initial spawns.

use super::{EnvironmentState, Shape, SpawnConfig, WorldError, WorldState, DEFAULT_TICK_RATE};
use crate::agents::{AgentKind, TrafficLightState};
use crate::datagen::stop::StopCounterConfig;
use crate::geometry::{Pose, Vec3};
use crate::mapcore::{validate, HdMap, SignalPhase};
use crate::sensors::parse_sensor_value;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    #[serde(default = "yes")]
    pub ground_plane: bool,
    #[serde(default)]
    pub tick_rate: Option<u32>,
    #[serde(default)]
    pub statics: Vec<StaticSpec>,
    #[serde(default)]
    pub environment: Option<EnvironmentState>,
    #[serde(default)]
    pub lights: BTreeMap<String, LightSpec>,
    #[serde(default)]
    pub stop_counter: Option<StopCounterConfig>,
    #[serde(default)]
    pub spawns: Vec<SpawnSpec>,
}

impl Default for SceneDescriptor {
    fn default() -> Self {
        Self {
            ground_plane: true,
            tick_rate: None,
            statics: Vec::new(),
            environment: None,
            lights: BTreeMap::new(),
            stop_counter: None,
            spawns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticSpec {
    pub semantic: String,
    #[serde(default, rename = "box")]
    pub box_: Option<BoxSpec>,
    #[serde(default)]
    pub mesh: Option<MeshSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub size: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub triangles: Vec<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightSpec {
    pub cycle: Vec<(SignalPhase, f64)>,
    #[serde(default)]
    pub offset: f64,
}

/// Planar pose; `yaw` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl PoseSpec {
    pub fn to_pose(self) -> Pose {
        Pose::from_xyz_yaw(self.x, self.y, self.z, self.yaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSpec {
    #[serde(alias = "npc")]
    pub kind: AgentKind,
    pub pose: PoseSpec,
    #[serde(default)]
    pub config: SpawnConfig,
    /// Sensor configurations for an ego, same schema as the sensor file.
    #[serde(default)]
    pub sensors: Option<serde_json::Value>,
}

impl SceneDescriptor {
    pub fn parse(bytes: &[u8]) -> Result<Self, WorldError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            WorldError::Scene(format!("{path}: {}", e.inner()))
        })
    }
}

/// Builds a world at tick 0 from a map, a JSON scene descriptor and a seed.
pub fn load_scene(map: HdMap, descriptor: &[u8], seed: u64) -> Result<WorldState, WorldError> {
    let desc = SceneDescriptor::parse(descriptor)?;
    build_world(map, &desc, seed)
}

pub fn build_world(map: HdMap, desc: &SceneDescriptor, seed: u64) -> Result<WorldState, WorldError> {
    let violations = validate(&map);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(WorldError::Map(list.join("; ")));
    }
    let mut w = WorldState::new(map, seed);
    let rate = desc.tick_rate.unwrap_or(DEFAULT_TICK_RATE);
    if rate == 0 {
        return Err(WorldError::Scene("tick_rate must be positive".into()));
    }
    w.tick_rate = rate;
    if let Some(env) = desc.environment {
        w.set_environment(env)?;
    }
    if let Some(cfg) = desc.stop_counter {
        if !cfg.is_valid() {
            return Err(WorldError::Scene("stop_counter parameters".into()));
        }
        w.stop_counter_config = cfg;
    }
    for (id, spec) in &desc.lights {
        if !w.map.signals.contains_key(id) {
            return Err(WorldError::UnknownSignal(id.clone()));
        }
        let l = TrafficLightState::new(id.clone(), spec.cycle.clone(), spec.offset);
        if !l.is_valid() {
            return Err(WorldError::Scene(format!("lights.{id}: durations must be positive")));
        }
        w.lights.insert(id.clone(), l);
    }
    if desc.ground_plane {
        w.add_static("road", Shape::GroundPlane { z: 0.0 })?;
    }
    for (i, s) in desc.statics.iter().enumerate() {
        let shape = match (&s.box_, &s.mesh) {
            (Some(b), None) => Shape::Box {
                center: Vec3::from(b.center),
                size: Vec3::from(b.size),
                yaw: b.yaw,
            },
            (None, Some(m)) => Shape::Mesh {
                triangles: m
                    .triangles
                    .iter()
                    .map(|t| [Vec3::from(t[0]), Vec3::from(t[1]), Vec3::from(t[2])])
                    .collect(),
            },
            _ => {
                return Err(WorldError::Scene(format!(
                    "statics[{i}]: exactly one of `box` or `mesh` is required"
                )))
            }
        };
        w.add_static(s.semantic.clone(), shape)
            .map_err(|e| WorldError::Scene(format!("statics[{i}]: {e}")))?;
    }
    for (i, sp) in desc.spawns.iter().enumerate() {
        let id = w.spawn_agent(sp.kind, sp.pose.to_pose(), &sp.config)?;
        if let Some(v) = &sp.sensors {
            let configs = parse_sensor_value(v, w.tick_rate)
                .map_err(|e| WorldError::Scene(format!("spawns[{i}].sensors: {e}")))?;
            w.attach_sensors(id, configs)?;
        }
    }
    for l in w.lights.values_mut() {
        l.update(0, rate);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_descriptor_has_ground_only() {
        let w = load_scene(HdMap::default(), b"{}", 1).unwrap();
        assert_eq!(w.tick, 0);
        assert_eq!(w.statics.len(), 1);
        assert_eq!(w.statics[0].semantic, "road");
        assert!(w.agents.is_empty());
    }

    #[test]
    fn box_gets_fresh_id() {
        let doc = br#"{"statics":[{"semantic":"building","box":{"center":[10,0,5],"size":[4,4,10]}}]}"#;
        let w = load_scene(HdMap::default(), doc, 1).unwrap();
        assert_eq!(w.statics.len(), 2);
        assert_ne!(w.statics[0].id, w.statics[1].id);
    }

    #[test]
    fn deterministic_construction() {
        let doc = br#"{"spawns":[{"kind":"ego","pose":{"x":1,"y":2}}]}"#;
        let a = load_scene(HdMap::default(), doc, 5).unwrap();
        let b = load_scene(HdMap::default(), doc, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = load_scene(HdMap::default(), br#"{"statics":[{"semantic":"x","bx":{}}]}"#, 1).unwrap_err();
        match err {
            WorldError::Scene(m) => assert!(m.starts_with("statics[0]"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
