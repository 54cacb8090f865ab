//! Box overlap tests for collision detection.
//!
//! Boxes are yaw-only: a 2D separating-axis test on the footprints plus a
//! z-interval test. Intervals are closed with a 1e-9 m tolerance so touching
//! boxes count as overlapping.

use super::AgentState;
use crate::world::{Shape, StaticObject};
use serde::{Deserialize, Serialize};

pub const CONTACT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub cx: f64,
    pub cy: f64,
    pub half_l: f64,
    pub half_w: f64,
    pub yaw: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Footprint {
    pub fn of_agent(a: &AgentState) -> Self {
        let p = a.pose.position;
        Self {
            cx: p.x,
            cy: p.y,
            half_l: a.bbox.x / 2.0,
            half_w: a.bbox.y / 2.0,
            yaw: a.pose.yaw(),
            z_min: p.z,
            z_max: p.z + a.bbox.z,
        }
    }

    /// Footprint of a static; the ground plane has none. Meshes use their
    /// axis-aligned bounds.
    pub fn of_static(s: &StaticObject) -> Option<Self> {
        match &s.shape {
            Shape::GroundPlane { .. } => None,
            Shape::Box { center, size, yaw } => Some(Self {
                cx: center.x,
                cy: center.y,
                half_l: size.x / 2.0,
                half_w: size.y / 2.0,
                yaw: *yaw,
                z_min: center.z - size.z / 2.0,
                z_max: center.z + size.z / 2.0,
            }),
            Shape::Mesh { triangles } => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for v in triangles.iter().flatten() {
                    for i in 0..3 {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                lo[0].is_finite().then(|| Self {
                    cx: (lo[0] + hi[0]) / 2.0,
                    cy: (lo[1] + hi[1]) / 2.0,
                    half_l: (hi[0] - lo[0]) / 2.0,
                    half_w: (hi[1] - lo[1]) / 2.0,
                    yaw: 0.0,
                    z_min: lo[2],
                    z_max: hi[2],
                })
            }
        }
    }

    fn corners(&self) -> [(f64, f64); 4] {
        let (c, s) = (self.yaw.cos(), self.yaw.sin());
        let mut out = [(0.0, 0.0); 4];
        for (i, (sl, sw)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)].iter().enumerate() {
            let (lx, ly) = (sl * self.half_l, sw * self.half_w);
            out[i] = (self.cx + c * lx - s * ly, self.cy + s * lx + c * ly);
        }
        out
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (c, s) = (self.yaw.cos(), self.yaw.sin());
        [(c, s), (-s, c)]
    }
}

/// Closed-interval overlap of two yaw-only boxes.
pub fn obb_overlap(a: &Footprint, b: &Footprint) -> bool {
    if a.z_max < b.z_min - CONTACT_TOLERANCE || b.z_max < a.z_min - CONTACT_TOLERANCE {
        return false;
    }
    let (ca, cb) = (a.corners(), b.corners());
    for (ax, ay) in a.axes().into_iter().chain(b.axes()) {
        let proj = |cs: &[(f64, f64); 4]| {
            cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, y)| {
                let p = x * ax + y * ay;
                (lo.min(p), hi.max(p))
            })
        };
        let (alo, ahi) = proj(&ca);
        let (blo, bhi) = proj(&cb);
        if ahi < blo - CONTACT_TOLERANCE || bhi < alo - CONTACT_TOLERANCE {
            return false;
        }
    }
    true
}

/// Start of a contact between two instances. `a < b` by instance id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub tick: u64,
    pub a: u32,
    pub b: u32,
    /// Agent ids, when the instance is an agent.
    pub agent_a: Option<u32>,
    pub agent_b: Option<u32>,
}
