//! Local tangent plane anchored at a geodetic origin.

/// Mean Earth radius used by the tangent-plane projection, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTangentPlane {
    pub lat0: f64,
    pub lon0: f64,
}

impl LocalTangentPlane {
    pub fn new(lat0: f64, lon0: f64) -> Self {
        Self { lat0, lon0 }
    }

    fn scale_y() -> f64 {
        EARTH_RADIUS_M * std::f64::consts::PI / 180.0
    }

    fn scale_x(&self) -> f64 {
        self.lat0.to_radians().cos() * Self::scale_y()
    }

    /// Degrees → local `(x east, y north)` meters.
    pub fn to_local(&self, lat: f64, lon: f64) -> (f64, f64) {
        ((lon - self.lon0) * self.scale_x(), (lat - self.lat0) * Self::scale_y())
    }

    /// Local meters → `(lat, lon)` degrees.
    pub fn to_geodetic(&self, x: f64, y: f64) -> (f64, f64) {
        (self.lat0 + y / Self::scale_y(), self.lon0 + x / self.scale_x())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_degree_north() {
        let ltp = LocalTangentPlane::new(10.0, 20.0);
        let y = std::f64::consts::PI * EARTH_RADIUS_M / 180.0;
        let (lat, lon) = ltp.to_geodetic(0.0, y);
        assert!((lat - 11.0).abs() < 1e-12);
        assert_eq!(lon, 20.0);
    }

    #[test]
    fn round_trip_within_10km() {
        let ltp = LocalTangentPlane::new(37.3894, -122.0819);
        for &(x, y) in &[(0.0, 0.0), (10_000.0, -7_000.0), (-3_333.3, 9_999.9), (1e-3, 5e3)] {
            let (lat, lon) = ltp.to_geodetic(x, y);
            let (x2, y2) = ltp.to_local(lat, lon);
            assert!((x - x2).abs() < 1e-6 && (y - y2).abs() < 1e-6);
        }
    }
}
