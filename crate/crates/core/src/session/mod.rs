//! Scenarios, live sessions, trial logs, replay and the TCP service.

mod engine;
mod log;
mod protocol;
mod scenario;
pub mod server;
mod summary;

pub use engine::*;
pub use log::*;
pub use protocol::*;
pub use scenario::*;
pub use summary::*;
