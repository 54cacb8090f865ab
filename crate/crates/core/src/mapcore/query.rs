use super::{HdMap, Lane, LanePoint, MapError};
use crate::geometry::{cross2, mean_heading, project_onto_segment};
use serde::{Deserialize, Serialize};

/// Foot of a point on a lane centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneProjection {
    pub lane_id: String,
    /// Arc length from the lane start to the foot point, meters.
    pub s: f64,
    /// Signed lateral offset, positive on the left of travel.
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterlineSample {
    pub point: LanePoint,
    /// Tangent direction, radians (atan2 convention).
    pub heading: f64,
    pub s: f64,
}

/// Ties in projection distance closer than this go to the smaller lane id.
const TIE_EPS: f64 = 1e-12;

impl HdMap {
    pub fn successors(&self, lane_id: &str) -> Result<&[String], MapError> {
        Ok(&self.lane(lane_id)?.successors)
    }

    pub fn predecessors(&self, lane_id: &str) -> Result<&[String], MapError> {
        Ok(&self.lane(lane_id)?.predecessors)
    }

    /// Projects `point` onto the nearest lane centerline (planar distance),
    /// optionally restricted to `candidates`.
    pub fn project_to_lane(
        &self,
        point: &LanePoint,
        candidates: Option<&[String]>,
    ) -> Result<LaneProjection, MapError> {
        if self.lanes.is_empty() {
            return Err(MapError::EmptyMap);
        }
        let mut best: Option<(f64, LaneProjection)> = None;
        let mut consider = |lane: &Lane| {
            let (s, d, dist) = lane.project(point, false);
            let better = match &best {
                None => true,
                Some((bd, bp)) => {
                    dist < bd - TIE_EPS || ((dist - bd).abs() <= TIE_EPS && lane.id < bp.lane_id)
                }
            };
            if better {
                best = Some((
                    dist,
                    LaneProjection {
                        lane_id: lane.id.clone(),
                        s,
                        d,
                    },
                ));
            }
        };
        match candidates {
            Some(ids) => {
                for id in ids {
                    consider(self.lane(id)?);
                }
            }
            None => self.lanes.values().for_each(&mut consider),
        }
        best.map(|(_, p)| p).ok_or(MapError::EmptyMap)
    }

    /// Arc-length-uniform resample of a lane centerline, both endpoints
    /// included, consecutive gaps never exceeding `spacing`.
    pub fn sample_centerline(
        &self,
        lane_id: &str,
        spacing: f64,
    ) -> Result<Vec<CenterlineSample>, MapError> {
        if !(spacing > 0.0) {
            return Err(MapError::NonPositiveSpacing(spacing));
        }
        let lane = self.lane(lane_id)?;
        let len = lane.length();
        let n = ((len / spacing).ceil() as usize).max(1);
        Ok((0..=n)
            .map(|i| {
                let s = if i == n { len } else { len * i as f64 / n as f64 };
                let (point, heading) = lane.point_at(s);
                CenterlineSample { point, heading, s }
            })
            .collect())
    }
}

impl Lane {
    /// Projects onto this centerline. `extend` lets the first and last
    /// segments run past the lane ends so `s` can be negative or exceed the
    /// length. Returns `(s, d, unsigned distance)`.
    pub fn project(&self, point: &LanePoint, extend: bool) -> (f64, f64, f64) {
        let pts = &self.centerline;
        let nseg = pts.len().saturating_sub(1);
        let mut acc = 0.0;
        let mut best = (0.0, 0.0, f64::INFINITY);
        for i in 0..nseg {
            let (a, b) = (&pts[i], &pts[i + 1]);
            let seg_len = a.planar_distance(b);
            let (t, fx, fy, dist) = project_onto_segment(
                point.x,
                point.y,
                a.x,
                a.y,
                b.x,
                b.y,
                extend && i == 0,
                extend && i + 1 == nseg,
            );
            if dist < best.2 - TIE_EPS {
                let side = cross2(b.x - a.x, b.y - a.y, point.x - fx, point.y - fy);
                let d = if side >= 0.0 { dist } else { -dist };
                best = (acc + t * seg_len, d, dist);
            }
            acc += seg_len;
        }
        best
    }

    /// Point and tangent heading at arc length `s` (clamped to the lane).
    /// At an interior vertex the heading is the bisector of both segments.
    pub fn point_at(&self, s: f64) -> (LanePoint, f64) {
        let pts = &self.centerline;
        let seg_heading = |i: usize| (pts[i + 1].y - pts[i].y).atan2(pts[i + 1].x - pts[i].x);
        let nseg = pts.len().saturating_sub(1);
        if nseg == 0 {
            return (pts.first().copied().unwrap_or(LanePoint::new(0., 0., 0.)), 0.0);
        }
        let mut acc = 0.0;
        for i in 0..nseg {
            let seg_len = pts[i].planar_distance(&pts[i + 1]);
            let end = acc + seg_len;
            if s <= end || i + 1 == nseg {
                let local = (s - acc).clamp(0.0, seg_len);
                let vertex_eps = 1e-9 * end.max(1.0);
                if i > 0 && local <= vertex_eps {
                    return (pts[i], mean_heading(seg_heading(i - 1), seg_heading(i)));
                }
                if i + 1 < nseg && (seg_len - local) <= vertex_eps {
                    return (pts[i + 1], mean_heading(seg_heading(i), seg_heading(i + 1)));
                }
                let t = if seg_len > 0.0 { local / seg_len } else { 0.0 };
                return (pts[i].lerp(&pts[i + 1], t), seg_heading(i));
            }
            acc = end;
        }
        unreachable!()
    }
}
