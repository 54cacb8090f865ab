//! Ray intersection primitives and the world raycast service.

use super::{Shape, WorldState};
use crate::geometry::{Pose, Vec3};
use serde::{Deserialize, Serialize};

/// Equal-range tolerance for the instance-id tie-break.
pub const RANGE_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    pub range: f64,
    pub point: Vec3,
    /// Unit surface normal, oriented against the ray.
    pub normal: Vec3,
    pub instance_id: u32,
    pub semantic: String,
}

/// Möller–Trumbore ray/triangle test. Returns `(t, geometric normal)`.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, Vec3)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = origin - tri[0];
    let u = tv.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = tv.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if t <= 0.0 {
        return None;
    }
    Some((t, e1.cross(&e2).normalize()))
}

/// Slab test against an axis-aligned box `[lo, hi]`. Rays starting inside
/// the box do not hit it. Returns `(t, outward normal)`.
pub fn ray_aabb(origin: &Vec3, dir: &Vec3, lo: &Vec3, hi: &Vec3) -> Option<(f64, Vec3)> {
    let mut tnear = f64::NEG_INFINITY;
    let mut tfar = f64::INFINITY;
    let mut axis = 0usize;
    let mut sign = 0.0;
    for i in 0..3 {
        if dir[i] == 0.0 {
            if origin[i] < lo[i] || origin[i] > hi[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[i];
        let (mut t0, mut t1) = ((lo[i] - origin[i]) * inv, (hi[i] - origin[i]) * inv);
        let mut s = -1.0;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
            s = 1.0;
        }
        if t0 > tnear {
            tnear = t0;
            axis = i;
            sign = s;
        }
        tfar = tfar.min(t1);
        if tnear > tfar {
            return None;
        }
    }
    if tnear <= 0.0 || !tnear.is_finite() {
        return None;
    }
    let mut n = Vec3::zeros();
    n[axis] = sign;
    Some((tnear, n))
}

/// Ray against a box given in a local frame `pose` with local extents
/// `[lo, hi]`.
pub fn ray_obb(origin: &Vec3, dir: &Vec3, pose: &Pose, lo: &Vec3, hi: &Vec3) -> Option<(f64, Vec3)> {
    let o = pose.inverse_transform_point(origin);
    let d = pose.inverse_transform_vector(dir);
    let (t, n) = ray_aabb(&o, &d, lo, hi)?;
    Some((t, pose.transform_vector(&n)))
}

fn ray_plane_z(origin: &Vec3, dir: &Vec3, z: f64) -> Option<(f64, Vec3)> {
    if dir.z == 0.0 {
        return None;
    }
    let t = (z - origin.z) / dir.z;
    (t > 0.0).then(|| (t, Vec3::z()))
}

/// Intersection of a ray with one shape.
pub fn ray_shape(origin: &Vec3, dir: &Vec3, shape: &Shape) -> Option<(f64, Vec3)> {
    match shape {
        Shape::GroundPlane { z } => ray_plane_z(origin, dir, *z),
        Shape::Box { center, size, yaw } => {
            let pose = Pose::from_xyz_yaw(center.x, center.y, center.z, *yaw);
            let half = size / 2.0;
            ray_obb(origin, dir, &pose, &-half, &half)
        }
        Shape::Mesh { triangles } => {
            let mut best: Option<(f64, Vec3)> = None;
            for tri in triangles {
                if let Some((t, n)) = ray_triangle(origin, dir, tri) {
                    if best.as_ref().is_none_or(|b| t < b.0) {
                        best = Some((t, n));
                    }
                }
            }
            best
        }
    }
}

impl WorldState {
    /// Nearest hit among statics and agent boxes within `max_range`.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<RayHit> {
        self.raycast_excluding(origin, dir, max_range, None)
    }

    /// As [`raycast`](Self::raycast), ignoring one instance (typically the
    /// sensor's own vehicle).
    pub fn raycast_excluding(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        max_range: f64,
        exclude: Option<u32>,
    ) -> Option<RayHit> {
        fn consider<'a>(
            best: &mut Option<(f64, Vec3, u32, &'a str)>,
            hit: (f64, Vec3),
            id: u32,
            sem: &'a str,
        ) {
            let (t, n) = hit;
            let replace = match best {
                None => true,
                Some((bt, _, bid, _)) => {
                    t < *bt - RANGE_TIE_EPS || ((t - *bt).abs() <= RANGE_TIE_EPS && id < *bid)
                }
            };
            if replace {
                *best = Some((t, n, id, sem));
            }
        }
        let mut best: Option<(f64, Vec3, u32, &str)> = None;
        for s in &self.statics {
            if Some(s.id) == exclude {
                continue;
            }
            if let Some(hit) = ray_shape(origin, dir, &s.shape).filter(|h| h.0 <= max_range) {
                consider(&mut best, hit, s.id, &s.semantic);
            }
        }
        for a in self.agents.values() {
            if Some(a.instance_id) == exclude {
                continue;
            }
            let (l, w, h) = (a.bbox.x, a.bbox.y, a.bbox.z);
            let lo = Vec3::new(-l / 2.0, -w / 2.0, 0.0);
            let hi = Vec3::new(l / 2.0, w / 2.0, h);
            if let Some(hit) = ray_obb(origin, dir, &a.pose, &lo, &hi).filter(|h| h.0 <= max_range) {
                consider(&mut best, hit, a.instance_id, &a.semantic);
            }
        }
        best.map(|(t, n, id, sem)| {
            let n = if n.dot(dir) > 0.0 { -n } else { n };
            RayHit {
                range: t,
                point: origin + dir * t,
                normal: n,
                instance_id: id,
                semantic: sem.to_string(),
            }
        })
    }
}
