//! Deterministic fixed-timestep world.
//!
//! [`WorldState::step`] is the only path that advances time. One step applies
//! the queued commands, updates traffic lights, updates agents in ascending
//! id order, detects new contacts, advances the environment clock and
//! increments the tick.

pub mod raycast;
pub mod rng;
pub mod scene;
pub mod snapshot;

use crate::agents::{
    npc::{NpcEnv, NpcOutcome},
    obb_overlap, AgentKind, AgentState, ChassisCommand, CollisionEvent, Controller,
    DynamicsRegistry, EgoController, EgoParams, EndPolicy, Footprint, IdmParams, NpcController,
    TrafficLightState, WaypointFollower, CAR_SIZE, DEFAULT_WALK_SPEED, PEDESTRIAN_SIZE,
};
use crate::datagen::stop::{StopCounterConfig, StopCounterState};
use crate::geometry::{Pose, Vec3};
use crate::mapcore::{HdMap, LanePoint, MapError, SignalPhase};
use crate::sensors::SensorConfig;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

pub use raycast::RayHit;
pub use rng::RngStreams;
pub use scene::{load_scene, SceneDescriptor};
pub use snapshot::{restore, snapshot, SnapshotError};

pub const DEFAULT_TICK_RATE: u32 = 100;
/// Maximum distance between an NPC spawn pose and the nearest lane.
pub const NPC_SNAP_DISTANCE: f64 = 5.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown agent {0}")]
    UnknownAgent(u32),
    #[error("no lane within {NPC_SNAP_DISTANCE} m of spawn (nearest {0:.3} m)")]
    NoLaneNearSpawn(f64),
    #[error("an ego vehicle already exists")]
    DuplicateEgo,
    #[error("pose is not finite")]
    InvalidPose,
    #[error("{field} out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("unknown pedestrian route `{0}`")]
    UnknownRoute(String),
    #[error("unknown dynamics provider `{0}`")]
    UnknownDynamics(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("scene descriptor: {0}")]
    Scene(String),
    #[error("map: {0}")]
    Map(String),
}

impl WorldError {
    /// Machine-readable error code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            WorldError::UnknownAgent(_) => "unknown_agent",
            WorldError::NoLaneNearSpawn(_) => "no_lane_near_spawn",
            WorldError::DuplicateEgo => "duplicate_ego",
            WorldError::InvalidPose => "invalid_pose",
            WorldError::OutOfRange { .. } => "out_of_range",
            WorldError::UnknownSignal(_) => "unknown_signal",
            WorldError::UnknownRoute(_) => "unknown_route",
            WorldError::UnknownDynamics(_) => "unknown_dynamics",
            WorldError::InvalidParams(_) => "invalid_params",
            WorldError::Scene(_) => "scene_error",
            WorldError::Map(_) => "map_error",
        }
    }
}

impl From<MapError> for WorldError {
    fn from(e: MapError) -> Self {
        WorldError::Map(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Infinite horizontal plane.
    GroundPlane { z: f64 },
    /// Box around its geometric center, `size = (l, w, h)`, rotated by `yaw`.
    Box { center: Vec3, size: Vec3, yaw: f64 },
    /// Triangles in world coordinates.
    Mesh { triangles: Vec<[Vec3; 3]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticObject {
    pub id: u32,
    pub semantic: String,
    pub shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentState {
    /// Seconds since midnight, `[0, 86400)`.
    pub time_of_day: f64,
    pub rain: f64,
    pub fog: f64,
    pub wetness: f64,
}

impl Default for EnvironmentState {
    fn default() -> Self {
        Self {
            time_of_day: 43_200.0,
            rain: 0.0,
            fog: 0.0,
            wetness: 0.0,
        }
    }
}

impl EnvironmentState {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.time_of_day.is_finite() && (0.0..SECONDS_PER_DAY).contains(&self.time_of_day)) {
            return Err(WorldError::OutOfRange {
                field: "time_of_day",
                value: self.time_of_day,
            });
        }
        for (field, value) in [("rain", self.rain), ("fog", self.fog), ("wetness", self.wetness)] {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(WorldError::OutOfRange { field, value });
            }
        }
        Ok(())
    }
}

/// A world mutation applied at the start of a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Chassis { agent: u32, command: ChassisCommand },
    SetEnvironment(EnvironmentState),
    OverrideLight { signal: String, phase: SignalPhase },
    ClearLightOverride { signal: String },
    RemoveAgent { agent: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldEvent {
    Collision(CollisionEvent),
    Despawned { tick: u64, agent: u32, reason: String },
    RejectedCommand { tick: u64, reason: String },
}

/// Options for [`WorldState::spawn_agent`]. Fields that do not apply to the
/// spawned kind are ignored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpawnConfig {
    /// `(length, width, height)`.
    pub size: Option<[f64; 3]>,
    pub speed: f64,
    pub semantic: Option<String>,
    pub ego: Option<EgoParams>,
    pub dynamics: Option<String>,
    pub allow_multiple_ego: bool,
    pub target_speed: Option<f64>,
    pub idm: Option<IdmParams>,
    pub lookahead: Option<f64>,
    /// Pedestrian route id in the map.
    pub route: Option<String>,
    pub waypoints: Option<Vec<[f64; 3]>>,
    pub walk_speed: Option<f64>,
    pub policy: EndPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub map: Arc<HdMap>,
    pub statics: Vec<StaticObject>,
    pub agents: BTreeMap<u32, AgentState>,
    pub lights: BTreeMap<String, TrafficLightState>,
    pub env: EnvironmentState,
    pub tick: u64,
    pub tick_rate: u32,
    pub seed: u64,
    pub rng: RngStreams,
    pub next_instance_id: u32,
    pub next_agent_id: u32,
    /// Instance pairs currently in contact.
    pub contacts: BTreeSet<(u32, u32)>,
    /// Every event emitted so far, in emission order.
    pub events: Vec<WorldEvent>,
    pub stop_counter_config: StopCounterConfig,
    /// Stop counters for every vehicle agent ever spawned.
    pub stop_counters: BTreeMap<u32, StopCounterState>,
    /// Sensors mounted on each ego.
    pub sensors: BTreeMap<u32, Vec<SensorConfig>>,
}

impl WorldState {
    /// Bare world without statics. Lights start on their default cycles.
    pub fn new(map: HdMap, seed: u64) -> Self {
        let lights = map
            .signals
            .values()
            .map(|s| {
                (
                    s.id.clone(),
                    TrafficLightState::new(s.id.clone(), crate::agents::default_cycle(s.initial_state), 0.0),
                )
            })
            .collect();
        Self {
            map: Arc::new(map),
            statics: Vec::new(),
            agents: BTreeMap::new(),
            lights,
            env: EnvironmentState::default(),
            tick: 0,
            tick_rate: DEFAULT_TICK_RATE,
            seed,
            rng: RngStreams::new(seed),
            next_instance_id: 1,
            next_agent_id: 1,
            contacts: BTreeSet::new(),
            events: Vec::new(),
            stop_counter_config: StopCounterConfig::default(),
            stop_counters: BTreeMap::new(),
            sensors: BTreeMap::new(),
        }
    }

    pub fn fixed_dt(&self) -> f64 {
        1.0 / self.tick_rate as f64
    }

    /// `tick / tick_rate`, computed without accumulation.
    pub fn sim_time(&self) -> f64 {
        self.tick as f64 / self.tick_rate as f64
    }

    fn alloc_instance(&mut self) -> u32 {
        let id = self.next_instance_id;
        self.next_instance_id += 1;
        id
    }

    pub fn add_static(&mut self, semantic: impl Into<String>, shape: Shape) -> Result<u32, WorldError> {
        match &shape {
            Shape::GroundPlane { z } if !z.is_finite() => return Err(WorldError::InvalidParams("ground plane z".into())),
            Shape::Box { center, size, yaw } => {
                if !(center.iter().all(|c| c.is_finite()) && yaw.is_finite()) {
                    return Err(WorldError::InvalidParams("box pose not finite".into()));
                }
                if !size.iter().all(|s| s.is_finite() && *s > 0.0) {
                    return Err(WorldError::InvalidParams("box size must be positive".into()));
                }
            }
            Shape::Mesh { triangles } => {
                for (i, t) in triangles.iter().enumerate() {
                    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
                    if !t.iter().flat_map(|v| v.iter()).all(|c| c.is_finite()) || n.norm() < 1e-12 {
                        return Err(WorldError::InvalidParams(format!("degenerate triangle {i}")));
                    }
                }
            }
            _ => {}
        }
        let id = self.alloc_instance();
        self.statics.push(StaticObject {
            id,
            semantic: semantic.into(),
            shape,
        });
        Ok(id)
    }

    pub fn first_ego(&self) -> Option<u32> {
        self.agents
            .values()
            .find(|a| a.kind == AgentKind::Ego)
            .map(|a| a.id)
    }

    pub fn agent(&self, id: u32) -> Result<&AgentState, WorldError> {
        self.agents.get(&id).ok_or(WorldError::UnknownAgent(id))
    }

    fn agent_mut(&mut self, id: u32) -> Result<&mut AgentState, WorldError> {
        self.agents.get_mut(&id).ok_or(WorldError::UnknownAgent(id))
    }

    pub fn spawn_agent(&mut self, kind: AgentKind, pose: Pose, cfg: &SpawnConfig) -> Result<u32, WorldError> {
        if !pose.is_finite() {
            return Err(WorldError::InvalidPose);
        }
        let default_size = match kind {
            AgentKind::Pedestrian => PEDESTRIAN_SIZE,
            _ => CAR_SIZE,
        };
        let size = cfg.size.unwrap_or(default_size);
        if !size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(WorldError::InvalidParams("size must be positive".into()));
        }
        if !(cfg.speed.is_finite() && cfg.speed >= 0.0) {
            return Err(WorldError::OutOfRange {
                field: "speed",
                value: cfg.speed,
            });
        }
        let id = self.next_agent_id;
        let yaw = pose.yaw();
        let mut pose = pose;
        let controller = match kind {
            AgentKind::Ego => {
                if !cfg.allow_multiple_ego && self.first_ego().is_some() {
                    return Err(WorldError::DuplicateEgo);
                }
                let mut c = EgoController::new(cfg.ego.unwrap_or_default());
                if !c.params.is_valid() {
                    return Err(WorldError::InvalidParams("ego parameters".into()));
                }
                if let Some(d) = &cfg.dynamics {
                    c.dynamics = d.clone();
                }
                Controller::Ego(c)
            }
            AgentKind::NpcVehicle => {
                let p = pose.position;
                let proj = self
                    .map
                    .project_to_lane(&LanePoint::new(p.x, p.y, p.z), None)
                    .map_err(|_| WorldError::NoLaneNearSpawn(f64::INFINITY))?;
                let lane = &self.map.lanes[&proj.lane_id];
                if proj.d.abs() > NPC_SNAP_DISTANCE {
                    return Err(WorldError::NoLaneNearSpawn(proj.d.abs()));
                }
                let (pt, heading) = lane.point_at(proj.s);
                pose = Pose::from_xyz_yaw(pt.x, pt.y, pt.z, heading);
                let mut c = NpcController::new(proj.lane_id.clone(), proj.s);
                c.target_speed = cfg.target_speed;
                if let Some(idm) = cfg.idm {
                    if !idm.is_valid() {
                        return Err(WorldError::InvalidParams("idm parameters".into()));
                    }
                    c.idm = idm;
                }
                if let Some(l) = cfg.lookahead {
                    if !(l.is_finite() && l > 0.0) {
                        return Err(WorldError::InvalidParams("lookahead".into()));
                    }
                    c.lookahead = l;
                }
                c.extend_route(&self.map, self.rng.stream(&format!("npc.{id}.route")));
                Controller::Npc(c)
            }
            AgentKind::Pedestrian => {
                let waypoints: Option<Vec<Vec3>> = match (&cfg.route, &cfg.waypoints) {
                    (Some(r), _) => Some(
                        self.map
                            .pedestrian_routes
                            .get(r)
                            .ok_or_else(|| WorldError::UnknownRoute(r.clone()))?
                            .waypoints
                            .iter()
                            .map(|p| Vec3::new(p.x, p.y, p.z))
                            .collect(),
                    ),
                    (None, Some(w)) => Some(w.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()),
                    (None, None) => None,
                };
                match waypoints {
                    Some(w) => {
                        let f = make_follower(w, cfg.walk_speed.unwrap_or(DEFAULT_WALK_SPEED), cfg.policy)?;
                        let mut f = f;
                        f.s = f.locate(&pose.position);
                        let (p, h) = f.sample(f.s);
                        pose = Pose::from_xyz_yaw(p.x, p.y, p.z, h);
                        Controller::Waypoints(f)
                    }
                    None => Controller::Idle,
                }
            }
        };
        let yaw_now = if matches!(kind, AgentKind::Ego) { yaw } else { pose.yaw() };
        let speed = match &controller {
            Controller::Waypoints(f) => f.speed,
            _ => cfg.speed,
        };
        let semantic = cfg.semantic.clone().unwrap_or_else(|| {
            match kind {
                AgentKind::Pedestrian => "pedestrian",
                _ => "car",
            }
            .to_string()
        });
        let instance_id = self.alloc_instance();
        self.next_agent_id += 1;
        let velocity = Vec3::new(yaw_now.cos() * speed, yaw_now.sin() * speed, 0.0);
        self.agents.insert(
            id,
            AgentState {
                id,
                instance_id,
                kind,
                semantic,
                pose,
                speed,
                yaw_rate: 0.0,
                bbox: Vec3::new(size[0], size[1], size[2]),
                velocity,
                prev_velocity: velocity,
                controller,
            },
        );
        if kind.is_vehicle() {
            self.stop_counters
                .insert(id, StopCounterState::new(self.stop_counter_config));
        }
        Ok(id)
    }

    pub fn remove_agent(&mut self, id: u32) -> Result<AgentState, WorldError> {
        let a = self.agents.remove(&id).ok_or(WorldError::UnknownAgent(id))?;
        self.sensors.remove(&id);
        self.contacts.retain(|(x, y)| *x != a.instance_id && *y != a.instance_id);
        Ok(a)
    }

    pub fn follow_waypoints(
        &mut self,
        id: u32,
        waypoints: Vec<Vec3>,
        speed: f64,
        policy: EndPolicy,
    ) -> Result<(), WorldError> {
        let f = make_follower(waypoints, speed, policy)?;
        let a = self.agent_mut(id)?;
        if a.kind == AgentKind::Ego {
            return Err(WorldError::InvalidParams("ego is driven by chassis commands".into()));
        }
        let (p, h) = f.sample(0.0);
        a.pose = Pose::from_xyz_yaw(p.x, p.y, p.z, h);
        a.controller = Controller::Waypoints(f);
        Ok(())
    }

    pub fn set_npc_params(
        &mut self,
        id: u32,
        target_speed: Option<f64>,
        idm: Option<IdmParams>,
        lookahead: Option<f64>,
    ) -> Result<(), WorldError> {
        let a = self.agent_mut(id)?;
        let Controller::Npc(c) = &mut a.controller else {
            return Err(WorldError::InvalidParams(format!("agent {id} is not a lane-following NPC")));
        };
        if let Some(v) = target_speed {
            if !(v.is_finite() && v >= 0.0) {
                return Err(WorldError::OutOfRange { field: "target_speed", value: v });
            }
            c.target_speed = Some(v);
        }
        if let Some(p) = idm {
            if !p.is_valid() {
                return Err(WorldError::InvalidParams("idm parameters".into()));
            }
            c.idm = p;
        }
        if let Some(l) = lookahead {
            if !(l.is_finite() && l > 0.0) {
                return Err(WorldError::OutOfRange { field: "lookahead", value: l });
            }
            c.lookahead = l;
        }
        Ok(())
    }

    pub fn set_environment(&mut self, env: EnvironmentState) -> Result<(), WorldError> {
        env.validate()?;
        self.env = env;
        Ok(())
    }

    pub fn override_light(&mut self, signal: &str, phase: SignalPhase) -> Result<(), WorldError> {
        let l = self
            .lights
            .get_mut(signal)
            .ok_or_else(|| WorldError::UnknownSignal(signal.to_string()))?;
        l.override_phase = Some(phase);
        l.phase = phase;
        Ok(())
    }

    pub fn clear_light_override(&mut self, signal: &str) -> Result<(), WorldError> {
        let (tick, rate) = (self.tick, self.tick_rate);
        let l = self
            .lights
            .get_mut(signal)
            .ok_or_else(|| WorldError::UnknownSignal(signal.to_string()))?;
        l.override_phase = None;
        l.update(tick, rate);
        Ok(())
    }

    pub fn attach_sensors(&mut self, ego: u32, configs: Vec<SensorConfig>) -> Result<(), WorldError> {
        let a = self.agent(ego)?;
        if a.kind != AgentKind::Ego {
            return Err(WorldError::InvalidParams(format!("agent {ego} is not an ego")));
        }
        let rate = self.tick_rate;
        for c in &configs {
            c.check_rate(rate).map_err(|e| WorldError::InvalidParams(e.to_string()))?;
        }
        self.sensors.insert(ego, configs);
        Ok(())
    }

    fn apply(&mut self, cmd: &Command) -> Result<(), WorldError> {
        match cmd {
            Command::Chassis { agent, command } => {
                let a = self.agent_mut(*agent)?;
                match &mut a.controller {
                    Controller::Ego(e) => {
                        e.command = *command;
                        Ok(())
                    }
                    _ => Err(WorldError::InvalidParams(format!("agent {agent} is not an ego"))),
                }
            }
            Command::SetEnvironment(env) => self.set_environment(*env),
            Command::OverrideLight { signal, phase } => self.override_light(signal, *phase),
            Command::ClearLightOverride { signal } => {
                self.lights
                    .get_mut(signal)
                    .ok_or_else(|| WorldError::UnknownSignal(signal.clone()))?
                    .override_phase = None;
                Ok(())
            }
            Command::RemoveAgent { agent } => self.remove_agent(*agent).map(|_| ()),
        }
    }

    /// Instance pairs whose boxes overlap now, sorted.
    pub fn overlapping_pairs(&self) -> BTreeSet<(u32, u32)> {
        let agents: Vec<(u32, Footprint)> = self
            .agents
            .values()
            .map(|a| (a.instance_id, a.footprint()))
            .collect();
        let statics: Vec<(u32, Footprint)> = self
            .statics
            .iter()
            .filter_map(|s| Footprint::of_static(s).map(|f| (s.id, f)))
            .collect();
        let mut out = BTreeSet::new();
        for (i, (ia, fa)) in agents.iter().enumerate() {
            for (ib, fb) in &agents[i + 1..] {
                if obb_overlap(fa, fb) {
                    out.insert(((*ia).min(*ib), (*ia).max(*ib)));
                }
            }
            for (is, fs) in &statics {
                if obb_overlap(fa, fs) {
                    out.insert(((*ia).min(*is), (*ia).max(*is)));
                }
            }
        }
        out
    }

    fn agent_of_instance(&self, instance: u32) -> Option<u32> {
        self.agents
            .values()
            .find(|a| a.instance_id == instance)
            .map(|a| a.id)
    }

    /// Advances one tick with the built-in dynamics providers.
    pub fn step(&mut self, commands: &[Command]) -> Vec<WorldEvent> {
        self.step_with(commands, &DynamicsRegistry::default())
    }

    /// Advances one tick. Returns the events emitted during the step.
    pub fn step_with(&mut self, commands: &[Command], dynamics: &DynamicsRegistry) -> Vec<WorldEvent> {
        let dt = self.fixed_dt();
        let mut events = Vec::new();
        for cmd in commands {
            if let Err(e) = self.apply(cmd) {
                events.push(WorldEvent::RejectedCommand {
                    tick: self.tick,
                    reason: e.to_string(),
                });
            }
        }

        let next_tick = self.tick + 1;
        for l in self.lights.values_mut() {
            l.update(next_tick, self.tick_rate);
        }

        let ids: Vec<u32> = self.agents.keys().copied().collect();
        for id in ids {
            let Some(mut agent) = self.agents.remove(&id) else { continue };
            let before = agent.velocity;
            let mut controller = std::mem::replace(&mut agent.controller, Controller::Idle);
            let mut despawn = None;
            match &mut controller {
                Controller::Ego(e) => match dynamics.get(&e.dynamics) {
                    Some(model) => model.step(&mut agent, &e.command, &e.params, dt),
                    None => {
                        events.push(WorldEvent::RejectedCommand {
                            tick: self.tick,
                            reason: format!("unknown dynamics provider `{}`", e.dynamics),
                        });
                    }
                },
                Controller::Npc(n) => {
                    let env = NpcEnv {
                        map: &self.map,
                        agents: &self.agents,
                        lights: &self.lights,
                    };
                    let rng = self.rng.stream(&format!("npc.{id}.route"));
                    if n.step(&mut agent, &env, rng, dt) == NpcOutcome::Despawn {
                        despawn = Some("end of lane without successors");
                    }
                }
                Controller::Waypoints(f) => f.step(&mut agent, dt),
                Controller::Idle => {
                    agent.speed = 0.0;
                    agent.yaw_rate = 0.0;
                    agent.velocity = Vec3::zeros();
                }
            }
            agent.controller = controller;
            agent.prev_velocity = before;
            match despawn {
                Some(reason) => {
                    self.sensors.remove(&id);
                    self.contacts
                        .retain(|(x, y)| *x != agent.instance_id && *y != agent.instance_id);
                    events.push(WorldEvent::Despawned {
                        tick: next_tick,
                        agent: id,
                        reason: reason.to_string(),
                    });
                }
                None => {
                    self.agents.insert(id, agent);
                }
            }
        }

        let now = self.overlapping_pairs();
        for &(a, b) in now.difference(&self.contacts) {
            events.push(WorldEvent::Collision(CollisionEvent {
                tick: next_tick,
                a,
                b,
                agent_a: self.agent_of_instance(a),
                agent_b: self.agent_of_instance(b),
            }));
        }
        self.contacts = now;

        self.env.time_of_day = (self.env.time_of_day + dt).rem_euclid(SECONDS_PER_DAY);
        self.tick = next_tick;

        let t = self.sim_time();
        for (id, counter) in self.stop_counters.iter_mut() {
            if let Some(a) = self.agents.get(id) {
                counter.update(a.speed, t);
            }
        }

        self.events.extend(events.iter().cloned());
        events
    }

    /// Collision events recorded so far.
    pub fn collisions(&self) -> impl Iterator<Item = &CollisionEvent> {
        self.events.iter().filter_map(|e| match e {
            WorldEvent::Collision(c) => Some(c),
            _ => None,
        })
    }
}

fn make_follower(waypoints: Vec<Vec3>, speed: f64, policy: EndPolicy) -> Result<WaypointFollower, WorldError> {
    if waypoints.len() < 2 || !waypoints.iter().all(|w| w.iter().all(|c| c.is_finite())) {
        return Err(WorldError::InvalidParams("need at least 2 finite waypoints".into()));
    }
    if waypoints.windows(2).any(|w| w[0] == w[1]) {
        return Err(WorldError::InvalidParams("consecutive identical waypoints".into()));
    }
    if !(speed.is_finite() && speed >= 0.0) {
        return Err(WorldError::OutOfRange { field: "speed", value: speed });
    }
    Ok(WaypointFollower::new(waypoints, speed, policy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_steps_is_one_second() {
        let mut w = WorldState::new(HdMap::default(), 0);
        for _ in 0..100 {
            w.step(&[]);
        }
        assert_eq!(w.tick, 100);
        assert_eq!(w.sim_time(), 1.0);
    }

    #[test]
    fn environment_ranges() {
        let mut w = WorldState::new(HdMap::default(), 0);
        let env = EnvironmentState {
            rain: 0.5,
            ..Default::default()
        };
        w.set_environment(env).unwrap();
        assert_eq!(w.env.rain, 0.5);
        let bad = EnvironmentState {
            time_of_day: 86_400.0,
            ..Default::default()
        };
        assert_eq!(w.set_environment(bad).unwrap_err().code(), "out_of_range");
    }

    #[test]
    fn unknown_agent_command_is_rejected_but_step_completes() {
        let mut w = WorldState::new(HdMap::default(), 0);
        let ev = w.step(&[Command::Chassis {
            agent: 9,
            command: ChassisCommand::default(),
        }]);
        assert!(matches!(ev[0], WorldEvent::RejectedCommand { .. }));
        assert_eq!(w.tick, 1);
    }

    #[test]
    fn identical_poses_collide_once() {
        let mut w = WorldState::new(HdMap::default(), 0);
        let cfg = SpawnConfig {
            allow_multiple_ego: true,
            ..Default::default()
        };
        w.spawn_agent(AgentKind::Ego, Pose::identity(), &cfg).unwrap();
        w.spawn_agent(AgentKind::Ego, Pose::identity(), &cfg).unwrap();
        let first = w.step(&[]);
        assert_eq!(first.len(), 1);
        let second = w.step(&[]);
        assert!(second.is_empty());
    }

    #[test]
    fn duplicate_ego_rejected() {
        let mut w = WorldState::new(HdMap::default(), 0);
        assert_eq!(w.spawn_agent(AgentKind::Ego, Pose::identity(), &SpawnConfig::default()).unwrap(), 1);
        assert_eq!(
            w.spawn_agent(AgentKind::Ego, Pose::identity(), &SpawnConfig::default()),
            Err(WorldError::DuplicateEgo)
        );
    }
}
