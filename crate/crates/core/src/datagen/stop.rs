//! Stop counting: a stop is the speed staying below a threshold for a dwell
//! time. After counting, the counter disarms until the speed rises above
//! threshold + hysteresis.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopCounterConfig {
    pub threshold: f64,
    pub dwell: f64,
    pub hysteresis: f64,
}

impl Default for StopCounterConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            dwell: 1.0,
            hysteresis: 0.2,
        }
    }
}

impl StopCounterConfig {
    pub fn is_valid(&self) -> bool {
        self.threshold.is_finite()
            && self.threshold > 0.0
            && self.dwell.is_finite()
            && self.dwell >= 0.0
            && self.hysteresis.is_finite()
            && self.hysteresis >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCounterState {
    pub config: StopCounterConfig,
    pub below_since: Option<f64>,
    pub armed: bool,
    pub count: u32,
}

impl StopCounterState {
    pub fn new(config: StopCounterConfig) -> Self {
        Self {
            config,
            below_since: None,
            armed: true,
            count: 0,
        }
    }

    /// Feeds one speed sample at `sim_time` (non-decreasing).
    pub fn update(&mut self, speed: f64, sim_time: f64) {
        let c = self.config;
        if speed < c.threshold {
            let since = *self.below_since.get_or_insert(sim_time);
            if self.armed && sim_time - since >= c.dwell - 1e-9 {
                self.count += 1;
                self.armed = false;
            }
        } else {
            self.below_since = None;
            if speed >= c.threshold + c.hysteresis {
                self.armed = true;
            }
        }
    }
}
