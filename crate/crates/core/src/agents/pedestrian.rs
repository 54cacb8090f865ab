//! Constant-speed polyline following, used for pedestrians and scripted
//! waypoint paths.

use super::AgentState;
use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};

pub const DEFAULT_WALK_SPEED: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndPolicy {
    /// Close the polyline and keep walking.
    Loop,
    #[default]
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointFollower {
    /// Path vertices; for [`EndPolicy::Loop`] the closing segment is implied.
    pub waypoints: Vec<Vec3>,
    pub s: f64,
    pub speed: f64,
    pub policy: EndPolicy,
    pub finished: bool,
}

impl WaypointFollower {
    pub fn new(waypoints: Vec<Vec3>, speed: f64, policy: EndPolicy) -> Self {
        Self {
            waypoints,
            s: 0.0,
            speed,
            policy,
            finished: false,
        }
    }

    fn path(&self) -> Vec<Vec3> {
        let mut pts = self.waypoints.clone();
        if self.policy == EndPolicy::Loop {
            if let (Some(first), Some(last)) = (pts.first().copied(), pts.last().copied()) {
                if first != last {
                    pts.push(first);
                }
            }
        }
        pts
    }

    pub fn length(&self) -> f64 {
        self.path().windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Position and heading at arc length `s` on the (closed, if looping)
    /// path.
    pub fn sample(&self, s: f64) -> (Vec3, f64) {
        let pts = self.path();
        if pts.len() < 2 {
            return (pts.first().copied().unwrap_or_else(Vec3::zeros), 0.0);
        }
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if len == 0.0 {
                continue;
            }
            if s <= acc + len {
                let t = ((s - acc) / len).clamp(0.0, 1.0);
                return (w[0] + seg * t, seg.y.atan2(seg.x));
            }
            acc += len;
        }
        let n = pts.len();
        let seg = pts[n - 1] - pts[n - 2];
        (pts[n - 1], seg.y.atan2(seg.x))
    }

    /// Arc length of the closest point on the path to `p`.
    pub fn locate(&self, p: &Vec3) -> f64 {
        let pts = self.path();
        let mut acc = 0.0;
        let mut best = (f64::INFINITY, 0.0);
        for w in pts.windows(2) {
            let seg = w[1] - w[0];
            let len2 = seg.norm_squared();
            let t = if len2 > 0.0 { ((p - w[0]).dot(&seg) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let d = (w[0] + seg * t - p).norm();
            if d < best.0 {
                best = (d, acc + t * len2.sqrt());
            }
            acc += len2.sqrt();
        }
        best.1
    }

    pub fn step(&mut self, agent: &mut AgentState, dt: f64) {
        let total = self.length();
        let mut v = if self.finished || total == 0.0 { 0.0 } else { self.speed };
        self.s += v * dt;
        if self.s >= total {
            match self.policy {
                EndPolicy::Loop if total > 0.0 => self.s = self.s.rem_euclid(total),
                _ => {
                    self.s = total;
                    self.finished = true;
                    v = 0.0;
                }
            }
        }
        let (p, heading) = self.sample(self.s);
        agent.yaw_rate = 0.0;
        agent.set_planar_motion(p.x, p.y, p.z, heading, 0.0);
        agent.speed = v;
        agent.velocity = Vec3::new(heading.cos() * v, heading.sin() * v, 0.0);
    }
}
