//! GPS and IMU.

use crate::agents::AgentState;
use crate::geometry::{Pose, Vec3};
use crate::mapio::geo::LocalTangentPlane;
use crate::world::WorldState;
use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

/// Geodetic fix of the sensor mount point.
pub fn gps_read(world: &WorldState, pose: &Pose) -> GpsFix {
    let ltp = LocalTangentPlane::new(world.map.origin.lat, world.map.origin.lon);
    let (lat, lon) = ltp.to_geodetic(pose.position.x, pose.position.y);
    GpsFix {
        lat,
        lon,
        alt: pose.position.z,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    /// Specific force in the sensor frame, m/s² (level and at rest: `+g` on z).
    pub linear_acceleration: [f64; 3],
    /// rad/s in the sensor frame.
    pub angular_velocity: [f64; 3],
    /// World orientation as `[w, x, y, z]`.
    pub orientation: [f64; 4],
}

/// Finite-difference IMU on the ego's velocity history.
pub fn imu_read(world: &WorldState, ego: &AgentState, mount: &Pose) -> ImuReading {
    let pose = ego.pose.compose(mount);
    let dt = world.fixed_dt();
    let accel_world = (ego.velocity - ego.prev_velocity) / dt;
    let specific = accel_world + Vec3::new(0.0, 0.0, GRAVITY);
    let a = pose.inverse_transform_vector(&specific);
    let w = pose.inverse_transform_vector(&Vec3::new(0.0, 0.0, ego.yaw_rate));
    let q = pose.orientation;
    ImuReading {
        linear_acceleration: [a.x, a.y, a.z],
        angular_velocity: [w.x, w.y, w.z],
        orientation: [q.w, q.i, q.j, q.k],
    }
}
