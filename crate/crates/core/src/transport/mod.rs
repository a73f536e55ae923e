//! Wire frames, the controller service and the manager gateway.

pub mod config;
pub mod cos;
pub mod frame;
pub mod gateway;
pub mod hub;

pub use config::{CosConfig, SimulationMode, TokenConfig};
pub use cos::{serve_cos, CosHandle};
pub use frame::{decode, encode, read_frame, write_frame, Frame, FrameBody, FrameError, MAX_FRAME, PROTOCOL_VERSION};
pub use hub::{Hub, HubEvent, Step};
