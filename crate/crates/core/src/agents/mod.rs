//! Dynamic agents: ego vehicle, lane-following NPC vehicles, waypoint
//! followers (pedestrians) and traffic-light controllers.

pub mod collision;
pub mod ego;
pub mod lights;
pub mod npc;
pub mod pedestrian;

use crate::geometry::{Pose, Vec3};
use serde::{Deserialize, Serialize};

pub use collision::{obb_overlap, CollisionEvent, Footprint};
pub use ego::{BicycleModel, DynamicsRegistry, EgoController, EgoParams, VehicleDynamics};
pub use lights::{default_cycle, TrafficLightState};
pub use npc::{idm_acceleration, IdmParams, NpcController};
pub use pedestrian::{EndPolicy, WaypointFollower, DEFAULT_WALK_SPEED};

/// Default vehicle box `(length, width, height)`.
pub const CAR_SIZE: [f64; 3] = [4.6, 2.0, 1.5];
/// Default pedestrian box.
pub const PEDESTRIAN_SIZE: [f64; 3] = [0.6, 0.6, 1.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ego,
    NpcVehicle,
    Pedestrian,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Ego => "ego",
            AgentKind::NpcVehicle => "npc_vehicle",
            AgentKind::Pedestrian => "pedestrian",
        }
    }

    pub fn is_vehicle(&self) -> bool {
        matches!(self, AgentKind::Ego | AgentKind::NpcVehicle)
    }
}

/// Low-level control input. Values are clamped on construction through
/// [`ChassisCommand::clamped`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChassisCommand {
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
    pub reverse: bool,
}

impl ChassisCommand {
    pub fn clamped(steering: f64, throttle: f64, brake: f64, reverse: bool) -> Self {
        Self {
            steering: steering.clamp(-1.0, 1.0),
            throttle: throttle.clamp(0.0, 1.0),
            brake: brake.clamp(0.0, 1.0),
            reverse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    Ego(EgoController),
    Npc(NpcController),
    Waypoints(WaypointFollower),
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: u32,
    pub instance_id: u32,
    pub kind: AgentKind,
    pub semantic: String,
    /// Bottom center of the bounding box.
    pub pose: Pose,
    pub speed: f64,
    pub yaw_rate: f64,
    /// `(length, width, height)`.
    pub bbox: Vec3,
    /// World-frame velocity at the current tick.
    pub velocity: Vec3,
    /// World-frame velocity one tick earlier.
    pub prev_velocity: Vec3,
    pub controller: Controller,
}

impl AgentState {
    pub fn footprint(&self) -> Footprint {
        Footprint::of_agent(self)
    }

    /// Point at the center of the front face, at half height.
    pub fn front_center(&self) -> Vec3 {
        self.pose
            .transform_point(&Vec3::new(self.bbox.x / 2.0, 0.0, self.bbox.z / 2.0))
    }

    pub fn box_center(&self) -> Vec3 {
        self.pose.transform_point(&Vec3::new(0.0, 0.0, self.bbox.z / 2.0))
    }

    pub fn npc(&self) -> Option<&NpcController> {
        match &self.controller {
            Controller::Npc(n) => Some(n),
            _ => None,
        }
    }

    pub fn ego(&self) -> Option<&EgoController> {
        match &self.controller {
            Controller::Ego(e) => Some(e),
            _ => None,
        }
    }

    /// Sets planar pose, speed and derived velocity.
    pub(crate) fn set_planar_motion(&mut self, x: f64, y: f64, z: f64, yaw: f64, signed_speed: f64) {
        self.pose = Pose::from_xyz_yaw(x, y, z, yaw);
        self.speed = signed_speed.abs();
        self.velocity = Vec3::new(yaw.cos() * signed_speed, yaw.sin() * signed_speed, 0.0);
    }
}
