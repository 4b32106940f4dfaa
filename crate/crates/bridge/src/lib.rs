//! Session service for the rcmservo simulator.
//!
//! A [`Session`] owns one simulated world and view graph and implements the
//! command state machine. [`spawn_session`] runs it on a single control loop
//! fed by a command queue, and [`serve`] exposes that loop over WebSocket
//! using the JSON envelope described in [`protocol`].

pub mod protocol;
mod server;
mod service;
mod session;

pub use protocol::{Command, CommandKind, ProtocolError, ServerMessage};
pub use server::{run_bridge, serve};
pub use service::{spawn_session, ServiceOptions, SessionHandle, SessionStatus, Subscription};
pub use session::{feasible, Handled, Session, SessionState, METRICS_TAIL};
