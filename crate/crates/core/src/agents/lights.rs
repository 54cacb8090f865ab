//! Fixed-cycle traffic-light controllers with manual override.
//!
//! Phase lookup works on integer microseconds so the phase function is
//! exactly periodic.

use crate::mapcore::SignalPhase;
use serde::{Deserialize, Serialize};

const US_PER_S: f64 = 1_000_000.0;

/// Default cycle `green 10 s, yellow 3 s, red 12 s`, rotated so it starts in
/// `initial`.
pub fn default_cycle(initial: SignalPhase) -> Vec<(SignalPhase, f64)> {
    let base = [
        (SignalPhase::Green, 10.0),
        (SignalPhase::Yellow, 3.0),
        (SignalPhase::Red, 12.0),
    ];
    let k = base.iter().position(|(p, _)| *p == initial).unwrap_or(0);
    base[k..].iter().chain(&base[..k]).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLightState {
    pub signal_id: String,
    pub phase: SignalPhase,
    pub cycle: Vec<(SignalPhase, f64)>,
    /// Seconds added to the clock before the cycle lookup.
    pub offset: f64,
    pub override_phase: Option<SignalPhase>,
}

impl TrafficLightState {
    pub fn new(signal_id: impl Into<String>, cycle: Vec<(SignalPhase, f64)>, offset: f64) -> Self {
        let mut s = Self {
            signal_id: signal_id.into(),
            phase: cycle.first().map(|c| c.0).unwrap_or(SignalPhase::Red),
            cycle,
            offset,
            override_phase: None,
        };
        s.phase = s.phase_at_us(0);
        s
    }

    pub fn is_valid(&self) -> bool {
        !self.cycle.is_empty()
            && self.cycle.iter().all(|(_, d)| d.is_finite() && *d > 0.0)
            && self.offset.is_finite()
    }

    fn durations_us(&self) -> Vec<i64> {
        self.cycle
            .iter()
            .map(|(_, d)| ((d * US_PER_S).round() as i64).max(1))
            .collect()
    }

    pub fn cycle_length(&self) -> f64 {
        self.durations_us().iter().sum::<i64>() as f64 / US_PER_S
    }

    /// Cycle phase at `t_us` microseconds of simulation time, ignoring any
    /// override.
    pub fn phase_at_us(&self, t_us: i64) -> SignalPhase {
        let durs = self.durations_us();
        let total: i64 = durs.iter().sum();
        if total == 0 {
            return SignalPhase::Red;
        }
        let offset = (self.offset * US_PER_S).round() as i64;
        let mut pos = (t_us + offset).rem_euclid(total);
        for (i, d) in durs.iter().enumerate() {
            if pos < *d {
                return self.cycle[i].0;
            }
            pos -= d;
        }
        self.cycle.last().map(|c| c.0).unwrap_or(SignalPhase::Red)
    }

    /// Cycle phase at `t` seconds, ignoring any override.
    pub fn phase_at(&self, t: f64) -> SignalPhase {
        self.phase_at_us((t * US_PER_S).round() as i64)
    }

    /// Recomputes `phase` for the given tick.
    pub fn update(&mut self, tick: u64, tick_rate: u32) {
        let t_us = (tick as i128 * 1_000_000 / tick_rate as i128) as i64;
        self.phase = self.override_phase.unwrap_or_else(|| self.phase_at_us(t_us));
    }
}
