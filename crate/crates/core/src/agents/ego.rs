//! Ego vehicle dynamics.
//!
//! Dynamics providers are looked up by name in a [`DynamicsRegistry`]; the
//! built-in `bicycle` provider is an explicit-Euler kinematic bicycle.

use super::{AgentState, ChassisCommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub const BICYCLE: &str = "bicycle";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoParams {
    pub wheelbase: f64,
    pub max_accel: f64,
    pub max_brake_decel: f64,
    pub max_steer: f64,
    pub drag_decel: f64,
}

impl Default for EgoParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.8,
            max_accel: 3.0,
            max_brake_decel: 8.0,
            max_steer: 0.61,
            drag_decel: 0.1,
        }
    }
}

impl EgoParams {
    /// Drag may be zero; every other parameter must be positive.
    pub fn is_valid(&self) -> bool {
        [self.wheelbase, self.max_accel, self.max_brake_decel, self.max_steer]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.drag_decel.is_finite()
            && self.drag_decel >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoController {
    pub params: EgoParams,
    /// Name of the dynamics provider in the registry.
    pub dynamics: String,
    /// Last applied command; held until replaced.
    pub command: ChassisCommand,
}

impl EgoController {
    pub fn new(params: EgoParams) -> Self {
        Self {
            params,
            dynamics: BICYCLE.to_string(),
            command: ChassisCommand::default(),
        }
    }
}

/// A vehicle dynamics provider. Implementations must be deterministic.
pub trait VehicleDynamics: Send + Sync {
    fn step(&self, agent: &mut AgentState, cmd: &ChassisCommand, params: &EgoParams, dt: f64);
}

/// Kinematic bicycle, explicit Euler.
#[derive(Debug, Clone, Copy, Default)]
pub struct BicycleModel;

impl VehicleDynamics for BicycleModel {
    fn step(&self, agent: &mut AgentState, cmd: &ChassisCommand, p: &EgoParams, dt: f64) {
        let v = agent.speed;
        let dir = if cmd.reverse { -1.0 } else { 1.0 };
        let yaw = agent.pose.yaw();
        let delta = cmd.steering * p.max_steer;
        let yaw_rate = dir * v * delta.tan() / p.wheelbase;
        let pos = agent.pose.position;
        let x = pos.x + dir * v * yaw.cos() * dt;
        let y = pos.y + dir * v * yaw.sin() * dt;
        let a = cmd.throttle * p.max_accel - cmd.brake * p.max_brake_decel - p.drag_decel;
        let v_next = (v + a * dt).max(0.0);
        agent.yaw_rate = yaw_rate;
        agent.set_planar_motion(x, y, pos.z, yaw + yaw_rate * dt, dir * v_next);
    }
}

#[derive(Clone)]
pub struct DynamicsRegistry {
    models: BTreeMap<String, Arc<dyn VehicleDynamics>>,
}

impl Default for DynamicsRegistry {
    fn default() -> Self {
        let mut r = Self {
            models: BTreeMap::new(),
        };
        r.register(BICYCLE, Arc::new(BicycleModel));
        r
    }
}

impl fmt::Debug for DynamicsRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.models.keys()).finish()
    }
}

impl DynamicsRegistry {
    pub fn register(&mut self, name: &str, model: Arc<dyn VehicleDynamics>) {
        self.models.insert(name.to_string(), model);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn VehicleDynamics>> {
        self.models.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }
}
