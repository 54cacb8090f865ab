//! Object-level radar: one detection per visible agent.

use crate::agents::AgentState;
use crate::geometry::Pose;
use crate::world::WorldState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarParams {
    /// Half-angle, degrees.
    pub fov_azimuth_deg: f64,
    /// Half-angle, degrees.
    pub fov_elevation_deg: f64,
    pub max_range: f64,
}

impl Default for RadarParams {
    fn default() -> Self {
        Self {
            fov_azimuth_deg: 60.0,
            fov_elevation_deg: 5.0,
            max_range: 150.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarDetection {
    pub instance_id: u32,
    pub range: f64,
    /// Radians, positive to the left.
    pub azimuth: f64,
    pub elevation: f64,
    /// Negative when closing.
    pub range_rate: f64,
}

/// Detections sorted by instance id. A target is reported when its box
/// center is inside the field of view and the ray to it hits it first.
pub fn radar_scan(world: &WorldState, pose: &Pose, me: &AgentState, p: &RadarParams) -> Vec<RadarDetection> {
    let origin = pose.position;
    let mut out = Vec::new();
    for a in world.agents.values() {
        if a.id == me.id {
            continue;
        }
        let c = a.box_center();
        let rel_world = c - origin;
        let range = rel_world.norm();
        if range <= 0.0 || range > p.max_range {
            continue;
        }
        let rel = pose.inverse_transform_vector(&rel_world);
        let azimuth = rel.y.atan2(rel.x);
        let elevation = rel.z.atan2(rel.x.hypot(rel.y));
        if azimuth.abs() > p.fov_azimuth_deg.to_radians() || elevation.abs() > p.fov_elevation_deg.to_radians() {
            continue;
        }
        let dir = rel_world / range;
        let visible = world
            .raycast_excluding(&origin, &dir, range + 1e-6, Some(me.instance_id))
            .is_some_and(|h| h.instance_id == a.instance_id);
        if !visible {
            continue;
        }
        out.push(RadarDetection {
            instance_id: a.instance_id,
            range,
            azimuth,
            elevation,
            range_rate: (a.velocity - me.velocity).dot(&dir),
        });
    }
    out.sort_by_key(|d| d.instance_id);
    out
}
