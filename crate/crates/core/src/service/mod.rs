//! Real-time service: per-connection sessions over TCP or WebSocket.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ErrorCode, ServerMessage, StateMessage, TrialResult};
pub use server::{Server, ServerHandle};
pub use session::{sample_targets, ServiceContext, Session, SessionConfig, TrialLog};
