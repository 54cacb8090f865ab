//! Headless, deterministic autonomous-driving simulator.

pub mod agents;
pub mod bridge;
pub mod cli;
pub mod datagen;
pub mod geometry;
pub mod mapcore;
pub mod mapio;
pub mod sensors;
pub mod sim;
pub mod world;
