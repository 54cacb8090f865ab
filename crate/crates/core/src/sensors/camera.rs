//! Pinhole cameras. The optical frame is x right, y down, z forward; the
//! sensor frame is x forward, y left, z up.

use crate::geometry::{Pose, Vec3};
use crate::world::{RayHit, WorldState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraParams {
    pub width: u32,
    pub height: u32,
    pub vertical_fov_deg: f64,
    pub max_range: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            vertical_fov_deg: 60.0,
            max_range: 200.0,
        }
    }
}

impl CameraParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("width and height must be positive".into());
        }
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return Err("vertical_fov_deg must be in (0, 180)".into());
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err("max_range must be positive".into());
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_vfov(self.width, self.height, self.vertical_fov_deg.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square pixels, principal point at the image center.
    pub fn from_vfov(width: u32, height: u32, vfov: f64) -> Self {
        let fy = (height as f64 / 2.0) / (vfov / 2.0).tan();
        Self {
            fx: fy,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// 3x4 projection matrix `[K | 0]`, row-major.
    pub fn projection_matrix(&self) -> [f64; 12] {
        [
            self.fx, 0.0, self.cx, 0.0, //
            0.0, self.fy, self.cy, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ]
    }

    /// Unit ray through the center of pixel `(u, v)`, in the sensor frame.
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vec3 {
        let xc = (u as f64 + 0.5 - self.cx) / self.fx;
        let yc = (v as f64 + 0.5 - self.cy) / self.fy;
        optical_to_sensor(&Vec3::new(xc, yc, 1.0)).normalize()
    }

    /// Pixel coordinates of an optical-frame point with positive depth.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

pub fn sensor_to_optical(p: &Vec3) -> Vec3 {
    Vec3::new(-p.y, -p.z, p.x)
}

pub fn optical_to_sensor(p: &Vec3) -> Vec3 {
    Vec3::new(p.z, -p.x, -p.y)
}

/// Casts one ray per pixel, row-major from the top-left.
pub(crate) fn render<T: Send>(
    world: &WorldState,
    pose: &Pose,
    p: &CameraParams,
    exclude: Option<u32>,
    shade: impl Fn(Option<RayHit>) -> T + Sync,
) -> Vec<T> {
    let k = p.intrinsics();
    let origin = pose.position;
    (0..p.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            let shade = &shade;
            (0..p.width).map(move |u| {
                let dir = pose.transform_vector(&k.pixel_ray(u, v));
                shade(world.raycast_excluding(&origin, &dir, p.max_range, exclude))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    /// Euclidean range per pixel; `+inf` where nothing was hit.
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn at(&self, u: u32, v: u32) -> f32 {
        self.data[(v * self.width + u) as usize]
    }
}

pub fn depth_image(world: &WorldState, pose: &Pose, p: &CameraParams, exclude: Option<u32>) -> DepthImage {
    let data = render(world, pose, p, exclude, |h| h.map_or(f32::INFINITY, |h| h.range as f32));
    DepthImage {
        width: p.width,
        height: p.height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_inverse() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(optical_to_sensor(&sensor_to_optical(&p)), p);
        assert_eq!(sensor_to_optical(&Vec3::x()), Vec3::z());
    }

    #[test]
    fn center_pixel_is_optical_axis() {
        let k = Intrinsics::from_vfov(5, 3, 1.0);
        assert_eq!(k.pixel_ray(2, 1), Vec3::x());
        let fy = 1.5 / 0.5f64.tan();
        assert_eq!(k.fy, fy);
        assert_eq!(k.fx, fy);
    }

    #[test]
    fn project_inverts_pixel_ray() {
        let k = Intrinsics::from_vfov(640, 360, 1.0);
        let r = sensor_to_optical(&k.pixel_ray(100, 300));
        let (u, v) = k.project(&r);
        assert!((u - 100.5).abs() < 1e-9 && (v - 300.5).abs() < 1e-9);
    }
}
