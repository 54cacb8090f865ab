//! Simulation runtime: owns the world, drains bridge traffic at tick
//! boundaries, publishes sensor data and serves the scenario API.
//!
//! Every inbound frame is handled between ticks. While `sim/step`,
//! `sim/run` or `data/collect_kitti` is executing, inbound traffic is still
//! drained once per tick; calls that would restart or advance the world
//! answer `busy`, everything else executes at that tick boundary.

use crate::agents::{AgentKind, ChassisCommand, DynamicsRegistry, EndPolicy, IdmParams};
use crate::bridge::{chassis_target, decode_chassis, Frame, Hub, Inbound, EVENTS_TOPIC};
use crate::datagen::kitti::{write_kitti_frame, KittiRig};
use crate::datagen::metrics::{AgentSummary, Metrics};
use crate::geometry::Vec3;
use crate::mapcore::{save_native, HdMap, SignalPhase};
use crate::mapio;
use crate::sensors::{encode_output, evaluate, parse_sensor_value, schedule};
use crate::world::scene::{build_world, PoseSpec, SceneDescriptor};
use crate::world::{snapshot, Command, EnvironmentState, SpawnConfig, WorldError, WorldEvent, WorldState};
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn params(message: impl Into<String>) -> Self {
        Self::new("invalid_params", message)
    }
}

impl From<WorldError> for ApiError {
    fn from(e: WorldError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

/// Every method accepted by [`Simulator::handle_call`].
pub const METHODS: &[&str] = &[
    "sim/load_scene",
    "sim/step",
    "sim/run",
    "sim/reset",
    "sim/snapshot",
    "sim/restore",
    "env/set",
    "agent/spawn",
    "agent/remove",
    "agent/follow_waypoints",
    "agent/set_npc_params",
    "light/override",
    "light/clear_override",
    "query/agents",
    "query/collisions",
    "query/map",
    "query/lights",
    "query/metrics",
    "data/collect_kitti",
];

/// Methods refused with `busy` while the world is advancing.
const EXCLUSIVE: &[&str] = &[
    "sim/load_scene",
    "sim/step",
    "sim/run",
    "sim/reset",
    "sim/restore",
    "data/collect_kitti",
];

/// What `sim/reset` rebuilds from.
#[derive(Debug, Clone)]
pub struct ScenarioSource {
    pub map: HdMap,
    pub scene: SceneDescriptor,
    /// Sensors attached to the first ego after construction.
    pub sensors: Option<Value>,
}

pub struct Simulator {
    pub world: WorldState,
    pub dynamics: DynamicsRegistry,
    pub hub: Arc<Hub>,
    pub source: ScenarioSource,
    /// Wall-clock multiplier used by `sim/run` when none is given; 0 runs
    /// unpaced.
    pub default_pace: f64,
    pending: Vec<Command>,
    advancing: bool,
}

fn params<T: DeserializeOwned>(v: &Value) -> Result<T, ApiError> {
    let v = if v.is_null() { json!({}) } else { v.clone() };
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        ApiError::params(if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        })
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepParams {
    ticks: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunParams {
    seconds: f64,
    #[serde(default)]
    pace: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ResetParams {
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct LoadParams {
    map_path: Option<PathBuf>,
    map: Option<Value>,
    scene_path: Option<PathBuf>,
    scene: Option<Value>,
    sensors: Option<Value>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RestoreParams {
    data: String,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EnvParams {
    time_of_day: Option<f64>,
    rain: Option<f64>,
    fog: Option<f64>,
    wetness: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpawnParams {
    kind: AgentKind,
    pose: PoseSpec,
    #[serde(default)]
    config: SpawnConfig,
    #[serde(default)]
    sensors: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdParams {
    id: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointParams {
    id: u32,
    waypoints: Vec<[f64; 3]>,
    #[serde(default)]
    speed: Option<f64>,
    #[serde(default)]
    policy: EndPolicy,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NpcParams {
    id: u32,
    #[serde(default)]
    target_speed: Option<f64>,
    #[serde(default)]
    idm: Option<IdmParams>,
    #[serde(default)]
    lookahead: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LightParams {
    signal: String,
    #[serde(default)]
    phase: Option<SignalPhase>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KittiParams {
    out: PathBuf,
    frames: u32,
    #[serde(default)]
    ego: Option<u32>,
}

/// Loads a map file, picking the codec from the extension.
pub fn load_map_file(path: &Path) -> Result<HdMap, ApiError> {
    let codec = mapio::codec_for_path(path).map_err(|e| ApiError::new("map_error", e.to_string()))?;
    let bytes = std::fs::read(path).map_err(|e| ApiError::new("io_error", format!("{}: {e}", path.display())))?;
    let (map, report) = codec
        .import(&bytes)
        .map_err(|e| ApiError::new("map_error", format!("{}: {e}", path.display())))?;
    for w in &report.warnings {
        tracing::warn!(file = %path.display(), locator = %w.locator, "{}", w.message);
    }
    Ok(map)
}

impl Simulator {
    pub fn new(source: ScenarioSource, seed: u64) -> Result<Self, ApiError> {
        let world = Self::construct(&source, seed)?;
        Ok(Self {
            world,
            dynamics: DynamicsRegistry::default(),
            hub: Arc::new(Hub::new()),
            source,
            default_pace: 1.0,
            pending: Vec::new(),
            advancing: false,
        })
    }

    /// Empty map, default scene.
    pub fn empty(seed: u64) -> Self {
        Self::new(
            ScenarioSource {
                map: HdMap::default(),
                scene: SceneDescriptor::default(),
                sensors: None,
            },
            seed,
        )
        .expect("the empty scenario is valid")
    }

    fn construct(source: &ScenarioSource, seed: u64) -> Result<WorldState, ApiError> {
        let mut w = build_world(source.map.clone(), &source.scene, seed)?;
        if let Some(s) = &source.sensors {
            let ego = w
                .first_ego()
                .ok_or_else(|| ApiError::new("scene_error", "sensors given but the scene has no ego"))?;
            let cfgs = parse_sensor_value(s, w.tick_rate).map_err(|e| ApiError::new(e.code, e.to_string()))?;
            w.attach_sensors(ego, cfgs)?;
        }
        Ok(w)
    }

    /// Queues a command for the next step.
    pub fn queue(&mut self, cmd: Command) {
        self.pending.push(cmd);
    }

    pub fn chassis(&mut self, agent: u32, command: ChassisCommand) {
        self.queue(Command::Chassis { agent, command });
    }

    /// Handles inbound traffic and returns how many frames were processed.
    pub fn poll(&mut self) -> usize {
        let frames = self.hub.drain();
        let n = frames.len();
        for f in frames {
            self.dispatch(f);
        }
        n
    }

    fn dispatch(&mut self, inbound: Inbound) {
        let Inbound { conn, frame, .. } = inbound;
        match frame {
            Frame::Publish { topic, payload, .. } => match chassis_target(&topic) {
                Some(target) => {
                    let agent = match target.or_else(|| self.world.first_ego()) {
                        Some(a) => a,
                        None => {
                            self.hub.reply(conn, Frame::error(None, "unknown_agent", "no ego for /chassis"));
                            return;
                        }
                    };
                    match decode_chassis(&payload) {
                        Ok(command) => self.chassis(agent, command),
                        Err(m) => self.hub.reply(conn, Frame::error(None, "invalid_params", m)),
                    }
                }
                None => {
                    self.hub.publish_except(&topic, payload, None, Some(conn));
                }
            },
            Frame::Call { id, method, params } => {
                let reply = if self.advancing && EXCLUSIVE.contains(&method.as_str()) {
                    Frame::error(Some(id), "busy", format!("`{method}` is not allowed while the simulation is advancing"))
                } else {
                    match self.handle_call(&method, &params) {
                        Ok(result) => Frame::Result { id, result },
                        Err(e) => Frame::error(Some(id), &e.code, e.message),
                    }
                };
                self.hub.reply(conn, reply);
            }
            _ => {}
        }
    }

    /// Advances one tick: applies queued commands, steps the world and
    /// publishes due sensors and new events.
    pub fn step_once(&mut self) -> Vec<WorldEvent> {
        let cmds = std::mem::take(&mut self.pending);
        let events = self.world.step_with(&cmds, &self.dynamics);
        self.publish_sensors();
        for e in &events {
            let (name, payload) = match e {
                WorldEvent::Collision(c) => ("collision", serde_json::to_value(c).unwrap()),
                WorldEvent::Despawned { tick, agent, reason } => {
                    ("despawned", json!({"tick": tick, "agent": agent, "reason": reason}))
                }
                WorldEvent::RejectedCommand { tick, reason } => {
                    ("rejected_command", json!({"tick": tick, "reason": reason}))
                }
            };
            self.hub.event(EVENTS_TOPIC, name, payload);
        }
        events
    }

    fn publish_sensors(&self) {
        let w = &self.world;
        for (ego, cfgs) in &w.sensors {
            for cfg in schedule(cfgs, w.tick, w.tick_rate) {
                if self.hub.subscriber_count(&cfg.topic) == 0 {
                    continue;
                }
                if let Some(out) = evaluate(w, *ego, cfg) {
                    let (header, bin) = encode_output(&out, cfg, w.tick);
                    self.hub.publish(&cfg.topic, header, bin);
                }
            }
        }
    }

    /// Runs `ticks` steps, draining inbound traffic before each one. A
    /// positive `pace` sleeps to keep `pace` × real time.
    pub fn advance(&mut self, ticks: u64, pace: f64) {
        let was = std::mem::replace(&mut self.advancing, true);
        let start = Instant::now();
        let dt = self.world.fixed_dt();
        for k in 0..ticks {
            self.poll();
            self.step_once();
            if pace > 0.0 {
                let target = start + Duration::from_secs_f64((k + 1) as f64 * dt / pace);
                let now = Instant::now();
                if target > now {
                    std::thread::sleep(target - now);
                }
            }
        }
        self.advancing = was;
    }

    fn clock(&self) -> Value {
        json!({"tick": self.world.tick, "sim_time": self.world.sim_time()})
    }

    fn reset_to(&mut self, world: WorldState) {
        self.world = world;
        self.pending.clear();
    }

    /// Executes one scenario-API call.
    pub fn handle_call(&mut self, method: &str, p: &Value) -> Result<Value, ApiError> {
        match method {
            "sim/load_scene" => {
                let lp: LoadParams = params(p)?;
                let map = match (lp.map_path, lp.map) {
                    (Some(_), Some(_)) => return Err(ApiError::params("give `map_path` or `map`, not both")),
                    (Some(path), None) => load_map_file(&path)?,
                    (None, Some(v)) => crate::mapcore::load_native(v.to_string().as_bytes())
                        .map_err(|e| ApiError::new("map_error", e.to_string()))?,
                    (None, None) => self.source.map.clone(),
                };
                let scene = match (lp.scene_path, lp.scene) {
                    (Some(_), Some(_)) => return Err(ApiError::params("give `scene_path` or `scene`, not both")),
                    (Some(path), None) => {
                        let bytes = std::fs::read(&path)
                            .map_err(|e| ApiError::new("io_error", format!("{}: {e}", path.display())))?;
                        SceneDescriptor::parse(&bytes)?
                    }
                    (None, Some(v)) => SceneDescriptor::parse(v.to_string().as_bytes())?,
                    (None, None) => SceneDescriptor::default(),
                };
                let source = ScenarioSource {
                    map,
                    scene,
                    sensors: lp.sensors,
                };
                let seed = lp.seed.unwrap_or(self.world.seed);
                let world = Self::construct(&source, seed)?;
                self.source = source;
                self.reset_to(world);
                Ok(json!({"tick": 0, "seed": seed, "agents": self.world.agents.len()}))
            }
            "sim/step" => {
                let sp: StepParams = params(p)?;
                self.advance(sp.ticks, 0.0);
                Ok(self.clock())
            }
            "sim/run" => {
                let rp: RunParams = params(p)?;
                if !(rp.seconds.is_finite() && rp.seconds >= 0.0) {
                    return Err(ApiError::params("`seconds` must be a non-negative number"));
                }
                let pace = rp.pace.unwrap_or(self.default_pace);
                if !(pace.is_finite() && pace >= 0.0) {
                    return Err(ApiError::params("`pace` must be a non-negative number"));
                }
                let ticks = (rp.seconds * self.world.tick_rate as f64).round() as u64;
                self.advance(ticks, pace);
                Ok(self.clock())
            }
            "sim/reset" => {
                let rp: ResetParams = params(p)?;
                let seed = rp.seed.unwrap_or(self.world.seed);
                let world = Self::construct(&self.source, seed)?;
                self.reset_to(world);
                Ok(json!({"tick": 0, "seed": seed}))
            }
            "sim/snapshot" => {
                let bytes = snapshot(&self.world);
                Ok(json!({
                    "tick": self.world.tick,
                    "digest": crate::world::snapshot::digest(&bytes),
                    "data": base64::engine::general_purpose::STANDARD.encode(&bytes),
                }))
            }
            "sim/restore" => {
                let rp: RestoreParams = params(p)?;
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(rp.data.as_bytes())
                    .map_err(|e| ApiError::params(format!("data: {e}")))?;
                let world = crate::world::restore(&bytes).map_err(|e| ApiError::new(e.code(), e.to_string()))?;
                self.reset_to(world);
                Ok(self.clock())
            }
            "env/set" => {
                let ep: EnvParams = params(p)?;
                let mut env: EnvironmentState = self.world.env;
                if let Some(v) = ep.time_of_day {
                    env.time_of_day = v;
                }
                if let Some(v) = ep.rain {
                    env.rain = v;
                }
                if let Some(v) = ep.fog {
                    env.fog = v;
                }
                if let Some(v) = ep.wetness {
                    env.wetness = v;
                }
                self.world.set_environment(env)?;
                Ok(serde_json::to_value(self.world.env).unwrap())
            }
            "agent/spawn" => {
                let sp: SpawnParams = params(p)?;
                let configs = match &sp.sensors {
                    Some(v) => Some(
                        parse_sensor_value(v, self.world.tick_rate).map_err(|e| ApiError::new(e.code, e.to_string()))?,
                    ),
                    None => None,
                };
                if configs.is_some() && sp.kind != AgentKind::Ego {
                    return Err(ApiError::params("sensors can only be mounted on an ego"));
                }
                let id = self.world.spawn_agent(sp.kind, sp.pose.to_pose(), &sp.config)?;
                if let Some(c) = configs {
                    self.world.attach_sensors(id, c)?;
                }
                Ok(json!({"id": id, "instance_id": self.world.agents[&id].instance_id}))
            }
            "agent/remove" => {
                let ip: IdParams = params(p)?;
                self.world.remove_agent(ip.id)?;
                Ok(json!({"id": ip.id}))
            }
            "agent/follow_waypoints" => {
                let wp: WaypointParams = params(p)?;
                let pts = wp.waypoints.iter().map(|w| Vec3::from(*w)).collect();
                let speed = wp.speed.unwrap_or(crate::agents::DEFAULT_WALK_SPEED);
                self.world.follow_waypoints(wp.id, pts, speed, wp.policy)?;
                Ok(json!({"id": wp.id}))
            }
            "agent/set_npc_params" => {
                let np: NpcParams = params(p)?;
                self.world.set_npc_params(np.id, np.target_speed, np.idm, np.lookahead)?;
                Ok(json!({"id": np.id}))
            }
            "light/override" => {
                let lp: LightParams = params(p)?;
                let phase = lp.phase.ok_or_else(|| ApiError::params("missing field `phase`"))?;
                self.world.override_light(&lp.signal, phase)?;
                Ok(json!({"signal": lp.signal, "phase": phase}))
            }
            "light/clear_override" => {
                let lp: LightParams = params(p)?;
                self.world.clear_light_override(&lp.signal)?;
                Ok(json!({"signal": lp.signal, "phase": self.world.lights[&lp.signal].phase}))
            }
            "query/agents" => {
                let _: serde_json::Map<String, Value> = params(p)?;
                let list: Vec<AgentSummary> = self.world.agents.values().map(AgentSummary::of).collect();
                Ok(serde_json::to_value(list).unwrap())
            }
            "query/collisions" => {
                let _: serde_json::Map<String, Value> = params(p)?;
                Ok(serde_json::to_value(self.world.collisions().collect::<Vec<_>>()).unwrap())
            }
            "query/map" => {
                let _: serde_json::Map<String, Value> = params(p)?;
                Ok(serde_json::from_slice(&save_native(&self.world.map)).unwrap())
            }
            "query/lights" => {
                let _: serde_json::Map<String, Value> = params(p)?;
                let m: serde_json::Map<String, Value> = self
                    .world
                    .lights
                    .iter()
                    .map(|(k, l)| {
                        (
                            k.clone(),
                            json!({"phase": l.phase, "overridden": l.override_phase.is_some()}),
                        )
                    })
                    .collect();
                Ok(Value::Object(m))
            }
            "query/metrics" => {
                let _: serde_json::Map<String, Value> = params(p)?;
                Ok(serde_json::to_value(Metrics::of(&self.world)).unwrap())
            }
            "data/collect_kitti" => {
                let kp: KittiParams = params(p)?;
                let n = self.collect_kitti(&kp.out, kp.frames, kp.ego)?;
                Ok(json!({"frames": n, "tick": self.world.tick, "out": kp.out}))
            }
            other => Err(ApiError::new("unknown_method", format!("unknown method `{other}`"))),
        }
    }

    /// Steps the world and writes `frames` KITTI frames at the camera rate
    /// of `ego` (default: first ego). Frame 0 is the current tick when it
    /// is a camera tick.
    pub fn collect_kitti(&mut self, out: &Path, frames: u32, ego: Option<u32>) -> Result<u32, ApiError> {
        let ego = ego
            .or_else(|| self.world.first_ego())
            .ok_or_else(|| ApiError::new("unknown_agent", "no ego in the world"))?;
        let sensors = self
            .world
            .sensors
            .get(&ego)
            .ok_or_else(|| ApiError::new("invalid_params", format!("agent {ego} has no sensors")))?;
        let rig = KittiRig::from_sensors(sensors).map_err(ApiError::params)?;
        let period = (self.world.tick_rate as f64 / rig.rate_hz).round().max(1.0) as u64;
        std::fs::create_dir_all(out).map_err(|e| ApiError::new("io_error", e.to_string()))?;
        let was = std::mem::replace(&mut self.advancing, true);
        let mut written = 0;
        let result = loop {
            if written == frames {
                break Ok(written);
            }
            if self.world.tick % period == 0 {
                if !self.world.agents.contains_key(&ego) {
                    break Err(ApiError::new("unknown_agent", format!("ego {ego} left the world")));
                }
                if let Err(e) = write_kitti_frame(out, written, &self.world, ego, &rig) {
                    break Err(ApiError::new("io_error", e.to_string()));
                }
                written += 1;
                if written == frames {
                    break Ok(written);
                }
            }
            self.poll();
            self.step_once();
        };
        self.advancing = was;
        result
    }

    /// Drains the hub until `stop` returns true, sleeping briefly when
    /// idle. Used by the bridge server loop.
    pub fn serve_until(&mut self, mut stop: impl FnMut(&Simulator) -> bool) {
        while !stop(self) {
            if self.poll() == 0 {
                std::thread::sleep(Duration::from_millis(1));
            }
        }
    }
}
