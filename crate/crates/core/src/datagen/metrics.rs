//! Scenario metrics document.

use crate::agents::{AgentKind, CollisionEvent};
use crate::world::{WorldEvent, WorldState};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub id: u32,
    pub instance_id: u32,
    pub kind: AgentKind,
    pub semantic: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    /// `(length, width, height)`.
    pub bbox: [f64; 3],
    pub velocity: [f64; 3],
}

impl AgentSummary {
    pub fn of(a: &crate::agents::AgentState) -> Self {
        let p = a.pose.position;
        Self {
            id: a.id,
            instance_id: a.instance_id,
            kind: a.kind,
            semantic: a.semantic.clone(),
            x: p.x,
            y: p.y,
            z: p.z,
            yaw: a.pose.yaw(),
            speed: a.speed,
            yaw_rate: a.yaw_rate,
            bbox: [a.bbox.x, a.bbox.y, a.bbox.z],
            velocity: [a.velocity.x, a.velocity.y, a.velocity.z],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Despawn {
    pub tick: u64,
    pub agent: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub tick: u64,
    pub sim_time: f64,
    pub collisions: Vec<CollisionEvent>,
    /// Stop count per vehicle agent id (including removed agents).
    pub stop_counts: BTreeMap<u32, u32>,
    pub despawned: Vec<Despawn>,
    pub rejected_commands: u64,
    pub agents: Vec<AgentSummary>,
}

impl Metrics {
    pub fn of(world: &WorldState) -> Self {
        let mut despawned = Vec::new();
        let mut rejected = 0;
        for e in &world.events {
            match e {
                WorldEvent::Despawned { tick, agent, reason } => despawned.push(Despawn {
                    tick: *tick,
                    agent: *agent,
                    reason: reason.clone(),
                }),
                WorldEvent::RejectedCommand { .. } => rejected += 1,
                WorldEvent::Collision(_) => {}
            }
        }
        Self {
            seed: world.seed,
            tick: world.tick,
            sim_time: world.sim_time(),
            collisions: world.collisions().cloned().collect(),
            stop_counts: world.stop_counters.iter().map(|(k, v)| (*k, v.count)).collect(),
            despawned,
            rejected_commands: rejected,
            agents: world.agents.values().map(AgentSummary::of).collect(),
        }
    }

    /// Pretty JSON with a trailing newline; stable for identical worlds.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }
}
