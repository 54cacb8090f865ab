//! Topic-based pub/sub bridge and request/response scenario control over
//! WebSocket.

pub mod frame;
pub mod hub;
pub mod server;

pub use frame::{chassis_target, decode_chassis, Frame, CHASSIS_TOPIC, EVENTS_TOPIC};
pub use hub::{Hub, Inbound, Outgoing, OUTBOUND_CAPACITY};
pub use server::{BridgeServer, DEFAULT_PORT};
