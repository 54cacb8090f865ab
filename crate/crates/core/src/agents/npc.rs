//! Lane-following NPC vehicles: IDM longitudinal control, pure-pursuit
//! steering, traffic lights and stop signs.
//!
//! The upcoming route is drawn lazily from the agent's own random stream
//! `npc.<id>.route`, uniformly over successors, far enough ahead to cover
//! [`ROUTE_HORIZON`]. Stop lines become virtual stationary leaders.

use super::lights::TrafficLightState;
use super::AgentState;
use crate::geometry::Vec3;
use crate::mapcore::{HdMap, LanePoint, SignKind, SignalPhase};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Path length the NPC plans and looks ahead along, meters.
pub const ROUTE_HORIZON: f64 = 120.0;
/// Speed under which an NPC counts as stopped at a stop sign.
pub const STOP_SPEED: f64 = 0.1;
/// Full-stop time required at a stop sign.
pub const STOP_SIGN_DWELL: f64 = 2.0;
/// Lateral distance from the lane centerline within which another agent
/// occupies the lane, on top of half its width.
pub const LANE_HALF_WIDTH: f64 = 1.75;
/// Vehicles whose heading deviates more than this from the lane are
/// crossing traffic and not treated as leaders.
pub const LEADER_HEADING_COS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    pub a_max: f64,
    pub b_comfort: f64,
    pub s0: f64,
    pub t_headway: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            a_max: 1.5,
            b_comfort: 2.0,
            s0: 2.0,
            t_headway: 1.5,
            delta: 4.0,
        }
    }
}

impl IdmParams {
    pub fn is_valid(&self) -> bool {
        [self.a_max, self.b_comfort, self.s0, self.t_headway, self.delta]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// IDM acceleration. `leader` is `(gap, Δv)` with Δv = own speed minus
/// leader speed; `None` is free road.
pub fn idm_acceleration(v: f64, v0: f64, leader: Option<(f64, f64)>, p: &IdmParams) -> f64 {
    let free = if v0 > 0.0 { 1.0 - (v / v0).powf(p.delta) } else { -1.0 };
    let interaction = match leader {
        None => 0.0,
        Some((gap, dv)) => {
            let s_star = p.s0 + (v * p.t_headway + v * dv / (2.0 * (p.a_max * p.b_comfort).sqrt())).max(0.0);
            let g = gap.max(1e-3);
            (s_star / g).powi(2)
        }
    };
    p.a_max * (free - interaction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcController {
    pub lane: String,
    pub s: f64,
    /// Pre-chosen lanes after `lane`.
    pub route: Vec<String>,
    /// Overrides the lane speed limit when set.
    pub target_speed: Option<f64>,
    pub idm: IdmParams,
    pub lookahead: f64,
    pub stop_timer: f64,
    pub served_signs: BTreeSet<String>,
    /// Signals the NPC decided to pass on yellow.
    pub committed_signals: BTreeSet<String>,
}

/// Read-only view of the world an NPC reacts to.
pub struct NpcEnv<'a> {
    pub map: &'a HdMap,
    pub agents: &'a BTreeMap<u32, AgentState>,
    pub lights: &'a BTreeMap<String, TrafficLightState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpcOutcome {
    Active,
    /// Reached the end of a lane without successors.
    Despawn,
}

struct PathLane {
    id: String,
    start: f64,
    offset: f64,
}

impl NpcController {
    pub fn new(lane: impl Into<String>, s: f64) -> Self {
        Self {
            lane: lane.into(),
            s,
            route: Vec::new(),
            target_speed: None,
            idm: IdmParams::default(),
            lookahead: 6.0,
            stop_timer: 0.0,
            served_signs: BTreeSet::new(),
            committed_signals: BTreeSet::new(),
        }
    }

    /// Draws successors until the planned path covers [`ROUTE_HORIZON`].
    pub fn extend_route(&mut self, map: &HdMap, rng: &mut ChaCha8Rng) {
        let Some(cur) = map.lanes.get(&self.lane) else {
            return;
        };
        let mut ahead = cur.length() - self.s;
        for id in &self.route {
            ahead += map.lanes.get(id).map(|l| l.length()).unwrap_or(0.0);
        }
        while ahead < ROUTE_HORIZON {
            let last = self.route.last().unwrap_or(&self.lane);
            let Some(lane) = map.lanes.get(last) else { break };
            if lane.successors.is_empty() {
                break;
            }
            let pick = if lane.successors.len() == 1 {
                0
            } else {
                rng.gen_range(0..lane.successors.len())
            };
            let next = lane.successors[pick].clone();
            ahead += map.lanes.get(&next).map(|l| l.length()).unwrap_or(0.0);
            self.route.push(next);
        }
    }

    fn path(&self, map: &HdMap) -> Vec<PathLane> {
        let mut out = Vec::with_capacity(self.route.len() + 1);
        let mut offset = 0.0;
        for (k, id) in std::iter::once(&self.lane).chain(&self.route).enumerate() {
            let Some(lane) = map.lanes.get(id) else { break };
            let start = if k == 0 { self.s } else { 0.0 };
            out.push(PathLane {
                id: id.clone(),
                start,
                offset,
            });
            offset += lane.length() - start;
        }
        out
    }

    /// Point at path distance `dist` ahead, clamped to the path end.
    fn path_point(&self, map: &HdMap, path: &[PathLane], dist: f64) -> LanePoint {
        let mut last = None;
        for pl in path {
            let lane = &map.lanes[&pl.id];
            let len = lane.length();
            if dist <= pl.offset + (len - pl.start) {
                return lane.point_at(pl.start + dist - pl.offset).0;
            }
            last = Some(lane.point_at(len).0);
        }
        last.unwrap_or(LanePoint::new(0.0, 0.0, 0.0))
    }

    /// Path distance of a point that lies on path lane `k` at arc length `s`.
    fn ahead(path: &[PathLane], k: usize, s: f64) -> f64 {
        path[k].offset + s - path[k].start
    }

    /// Most restrictive IDM leader `(gap, Δv)` among vehicles, pedestrians and
    /// stop lines; updates stop-sign and yellow-light bookkeeping.
    fn obstructions(&mut self, me: &AgentState, env: &NpcEnv, path: &[PathLane], dt: f64) -> Vec<(f64, f64)> {
        let map = env.map;
        let v = me.speed;
        let half = me.bbox.x / 2.0;
        let mut out = Vec::new();

        for other in env.agents.values() {
            if other.id == me.id {
                continue;
            }
            let pos = other.pose.position;
            let lp = LanePoint::new(pos.x, pos.y, pos.z);
            for (k, pl) in path.iter().enumerate() {
                let lane = &map.lanes[&pl.id];
                let (s, _, dist) = lane.project(&lp, false);
                if dist > LANE_HALF_WIDTH + other.bbox.y / 2.0 || s < pl.start {
                    continue;
                }
                let (_, heading) = lane.point_at(s);
                let tangent = Vec3::new(heading.cos(), heading.sin(), 0.0);
                if other.kind.is_vehicle() && other.pose.forward().dot(&tangent) < LEADER_HEADING_COS {
                    continue;
                }
                let ahead = Self::ahead(path, k, s);
                if ahead <= 0.0 {
                    continue;
                }
                let gap = ahead - half - other.bbox.x / 2.0;
                out.push((gap, v - other.velocity.dot(&tangent)));
                break;
            }
        }

        let mut ahead_controls: BTreeSet<String> = BTreeSet::new();
        let mut at_stop_sign = false;
        for (k, pl) in path.iter().enumerate() {
            let lane = &map.lanes[&pl.id];
            for sig in map.signals.values().filter(|s| s.controlled_lane_ids.iter().any(|c| *c == pl.id)) {
                let mid = sig.stop_line[0].lerp(&sig.stop_line[1], 0.5);
                let (s_line, _, _) = lane.project(&mid, false);
                let ahead = Self::ahead(path, k, s_line);
                let gap = ahead - half;
                if s_line < pl.start || gap < 0.0 {
                    continue;
                }
                ahead_controls.insert(sig.id.clone());
                let phase = env.lights.get(&sig.id).map(|l| l.phase).unwrap_or(sig.initial_state);
                let committed = self.committed_signals.contains(&sig.id);
                match phase {
                    SignalPhase::Green => {}
                    SignalPhase::Yellow if committed => {}
                    SignalPhase::Yellow if v * v / (2.0 * gap.max(1e-6)) > self.idm.b_comfort => {
                        self.committed_signals.insert(sig.id.clone());
                    }
                    SignalPhase::Red if committed => {}
                    _ => out.push((gap, v)),
                }
            }
            for sign in map.signs.values().filter(|s| s.controlled_lane_ids.iter().any(|c| *c == pl.id)) {
                if sign.kind == SignKind::Yield {
                    continue;
                }
                let mid = sign.stop_line[0].lerp(&sign.stop_line[1], 0.5);
                let (s_line, _, _) = lane.project(&mid, false);
                let gap = Self::ahead(path, k, s_line) - half;
                if s_line < pl.start || gap < 0.0 {
                    continue;
                }
                ahead_controls.insert(sign.id.clone());
                if self.served_signs.contains(&sign.id) {
                    continue;
                }
                if gap <= self.idm.s0 + 1.0 && v < STOP_SPEED {
                    at_stop_sign = true;
                    if self.stop_timer + dt >= STOP_SIGN_DWELL - 1e-9 {
                        self.served_signs.insert(sign.id.clone());
                        continue;
                    }
                }
                out.push((gap, v));
            }
        }
        self.stop_timer = if at_stop_sign { self.stop_timer + dt } else { 0.0 };
        self.served_signs.retain(|s| ahead_controls.contains(s));
        self.committed_signals.retain(|s| ahead_controls.contains(s));
        out
    }

    pub fn step(&mut self, me: &mut AgentState, env: &NpcEnv, rng: &mut ChaCha8Rng, dt: f64) -> NpcOutcome {
        let map = env.map;
        if !map.lanes.contains_key(&self.lane) {
            return NpcOutcome::Despawn;
        }
        self.extend_route(map, rng);
        let path = self.path(map);
        let v = me.speed;
        let v0 = self
            .target_speed
            .unwrap_or_else(|| map.lanes[&self.lane].speed_limit);

        let leaders = self.obstructions(me, env, &path, dt);
        let mut a = idm_acceleration(v, v0, None, &self.idm);
        let mut min_gap = f64::INFINITY;
        for &(gap, dv) in &leaders {
            a = a.min(idm_acceleration(v, v0, Some((gap, dv)), &self.idm));
            min_gap = min_gap.min(gap);
        }
        let mut v_next = (v + a * dt).max(0.0);
        if v_next * dt > min_gap.max(0.0) {
            v_next = min_gap.max(0.0) / dt;
        }

        let pos = me.pose.position;
        let yaw = me.pose.yaw();
        let target = self.path_point(map, &path, self.lookahead);
        let alpha = (target.y - pos.y).atan2(target.x - pos.x) - yaw;
        let kappa = 2.0 * alpha.sin() / self.lookahead;
        let yaw_rate = v_next * kappa;
        let x = pos.x + v_next * yaw.cos() * dt;
        let y = pos.y + v_next * yaw.sin() * dt;

        // Re-anchor on the lane graph.
        let here = LanePoint::new(x, y, pos.z);
        let (mut s, _, _) = map.lanes[&self.lane].project(&here, true);
        loop {
            let len = map.lanes[&self.lane].length();
            if s < len {
                break;
            }
            if self.route.is_empty() {
                return NpcOutcome::Despawn;
            }
            self.lane = self.route.remove(0);
            s = map.lanes[&self.lane].project(&here, true).0;
        }
        self.s = s.max(0.0);
        let z = map.lanes[&self.lane].point_at(self.s).0.z;
        me.yaw_rate = yaw_rate;
        me.set_planar_motion(x, y, z, yaw + yaw_rate * dt, v_next);
        NpcOutcome::Active
    }
}
