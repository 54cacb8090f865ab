//! Dataset generation: KITTI export, stop counting and run metrics.

pub mod kitti;
pub mod metrics;
pub mod stop;

pub use kitti::{write_kitti_frame, KittiLabel, KittiRig};
pub use metrics::Metrics;
pub use stop::{StopCounterConfig, StopCounterState};
