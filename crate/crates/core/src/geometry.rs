//! Shared geometric primitives: poses, angle helpers and planar polyline math.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec3 = Vector3<f64>;

/// Rigid transform in the local map frame (east-north-up, z-up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// Pose at `(x, y, z)` rotated by `yaw` radians about +z.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            position: Vec3::new(x, y, z),
            orientation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
        }
    }

    pub fn from_xyz_rpy(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position: Vec3::new(x, y, z),
            orientation: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    /// Composition `self ∘ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse() * (p - self.position)
    }

    pub fn inverse_transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation.inverse() * v
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.orientation.coords.iter().all(|c| c.is_finite())
    }

    /// Unit vector of the body x axis (forward) in the world frame.
    pub fn forward(&self) -> Vec3 {
        self.orientation * Vec3::x()
    }
}

/// Wraps an angle into `[-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..=PI).contains(&a) {
        return a;
    }
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r < -PI {
        r += 2.0 * PI;
    }
    r
}

/// Circular mean of two headings.
pub fn mean_heading(a: f64, b: f64) -> f64 {
    (a.sin() + b.sin()).atan2(a.cos() + b.cos())
}

/// 2D cross product of `(a, b)`.
#[inline]
pub fn cross2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Closest point on segment `a→b` to `p` in the xy plane.
///
/// Returns `(t, foot_x, foot_y, distance)` with `t` clamped to `[0, 1]`
/// unless `extend_start`/`extend_end` lets it run past the respective end.
pub fn project_onto_segment(
    px: f64,
    py: f64,
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    extend_start: bool,
    extend_end: bool,
) -> (f64, f64, f64, f64) {
    let dx = bx - ax;
    let dy = by - ay;
    let len2 = dx * dx + dy * dy;
    let mut t = if len2 > 0.0 {
        ((px - ax) * dx + (py - ay) * dy) / len2
    } else {
        0.0
    };
    if !extend_start && t < 0.0 {
        t = 0.0;
    }
    if !extend_end && t > 1.0 {
        t = 1.0;
    }
    let fx = ax + t * dx;
    let fy = ay + t * dy;
    let dist = ((px - fx).powi(2) + (py - fy).powi(2)).sqrt();
    (t, fx, fy, dist)
}
