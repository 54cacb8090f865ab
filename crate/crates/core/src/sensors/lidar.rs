//! Spinning LiDAR: one full revolution per publication.

use crate::geometry::{Pose, Vec3};
use crate::world::WorldState;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarParams {
    pub beam_count: u32,
    /// `[min, max]` elevation in degrees; beams are evenly spaced.
    pub vertical_fov_deg: [f64; 2],
    /// Explicit beam elevations in degrees; overrides `vertical_fov_deg`.
    pub elevations_deg: Option<Vec<f64>>,
    pub horizontal_step_deg: f64,
    pub max_range: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self {
            beam_count: 16,
            vertical_fov_deg: [-15.0, 15.0],
            elevations_deg: None,
            horizontal_step_deg: 0.2,
            max_range: 100.0,
        }
    }
}

impl LidarParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.beam_count == 0 {
            return Err("beam_count must be positive".into());
        }
        if let Some(e) = &self.elevations_deg {
            if e.len() != self.beam_count as usize {
                return Err(format!("elevations_deg has {} entries, beam_count is {}", e.len(), self.beam_count));
            }
            if e.iter().any(|x| !x.is_finite() || x.abs() > 90.0) {
                return Err("elevations_deg must be within [-90, 90]".into());
            }
        }
        let [lo, hi] = self.vertical_fov_deg;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= -90.0 && hi <= 90.0) {
            return Err("vertical_fov_deg must be an ordered pair within [-90, 90]".into());
        }
        if !(self.horizontal_step_deg > 0.0 && self.horizontal_step_deg <= 360.0) {
            return Err("horizontal_step_deg must be in (0, 360]".into());
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err("max_range must be positive".into());
        }
        Ok(())
    }

    /// Beam elevations in radians, ascending index order.
    pub fn elevations(&self) -> Vec<f64> {
        if let Some(e) = &self.elevations_deg {
            return e.iter().map(|d| d.to_radians()).collect();
        }
        let n = self.beam_count as usize;
        let [lo, hi] = self.vertical_fov_deg;
        if n == 1 {
            return vec![((lo + hi) / 2.0).to_radians()];
        }
        (0..n)
            .map(|i| (lo + i as f64 * (hi - lo) / (n - 1) as f64).to_radians())
            .collect()
    }

    /// Azimuths in radians, counter-clockwise from the sensor x axis.
    pub fn azimuths(&self) -> Vec<f64> {
        let n = (360.0 / self.horizontal_step_deg).round().max(1.0) as usize;
        (0..n).map(|j| (j as f64 * self.horizontal_step_deg).to_radians()).collect()
    }

    pub fn max_points(&self) -> usize {
        self.beam_count as usize * self.azimuths().len()
    }
}

/// A return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl LidarPoint {
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    /// Azimuth-major: all beams of the first azimuth, then the next.
    pub points: Vec<LidarPoint>,
}

pub fn beam_direction(azimuth: f64, elevation: f64) -> Vec3 {
    Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    )
}

pub fn lidar_scan(world: &WorldState, pose: &Pose, p: &LidarParams, exclude: Option<u32>) -> PointCloud {
    let elevations = p.elevations();
    let origin = pose.position;
    let points = p
        .azimuths()
        .par_iter()
        .map(|&az| {
            let mut col = Vec::with_capacity(elevations.len());
            for &el in &elevations {
                let local = beam_direction(az, el);
                let dir = pose.transform_vector(&local);
                if let Some(hit) = world.raycast_excluding(&origin, &dir, p.max_range, exclude) {
                    let q = local * hit.range;
                    col.push(LidarPoint {
                        x: q.x,
                        y: q.y,
                        z: q.z,
                        intensity: dir.dot(&hit.normal).abs().max(0.1),
                    });
                }
            }
            col
        })
        .collect::<Vec<_>>()
        .concat();
    PointCloud { points }
}
