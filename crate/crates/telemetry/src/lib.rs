//! Network boundary for the operator console.
//!
//! A [`SimRunner`] advances one simulation in real time on its own thread.
//! [`Server`] accepts WebSocket sessions, pushes snapshots at a fixed rate
//! and forwards validated operator commands to the runner's queue. The wire
//! format is described in `docs/protocol.md`.

pub mod protocol;
pub mod runner;
pub mod server;

pub use protocol::{ClientMessage, Envelope, Role, ServerMessage, PROTOCOL_VERSION};
pub use runner::{RunnerError, SimHandle, SimRunner};
pub use server::{Server, ServerError};
