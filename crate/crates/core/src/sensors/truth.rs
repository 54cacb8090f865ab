//! Ground-truth 3D boxes.

use crate::geometry::Pose;
use crate::world::WorldState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxParams {
    pub max_range: f64,
}

impl Default for BoxParams {
    fn default() -> Self {
        Self { max_range: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub instance_id: u32,
    pub agent_id: u32,
    pub semantic: String,
    /// Box center in the world frame.
    pub center: [f64; 3],
    /// `(length, width, height)`.
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 3],
}

/// Every agent other than `ego` whose box center lies within range,
/// sorted by instance id.
pub fn ground_truth_boxes(world: &WorldState, pose: &Pose, ego: u32, p: &BoxParams) -> Vec<Box3D> {
    let mut out: Vec<Box3D> = world
        .agents
        .values()
        .filter(|a| a.id != ego)
        .filter(|a| (a.box_center() - pose.position).norm() <= p.max_range)
        .map(|a| {
            let c = a.box_center();
            Box3D {
                instance_id: a.instance_id,
                agent_id: a.id,
                semantic: a.semantic.clone(),
                center: [c.x, c.y, c.z],
                size: [a.bbox.x, a.bbox.y, a.bbox.z],
                yaw: a.pose.yaw(),
                velocity: [a.velocity.x, a.velocity.y, a.velocity.z],
            }
        })
        .collect();
    out.sort_by_key(|b| b.instance_id);
    out
}
