//! Network front end for a [`duiopt::live::LiveSession`].
//!
//! Clients connect over a websocket at `/ws` or, for headless tools, over a
//! plain TCP stream carrying one JSON message per line. Each new client gets
//! the current `state` followed by the latest `solution`; afterwards every
//! accepted event produces a `state` broadcast and every finished solve a
//! `solution` broadcast. Clients that fall more than the outbox size behind
//! are disconnected.

mod server;
pub mod wire;

pub use server::{serve, ServeConfig, ServerHandle, DEFAULT_OUTBOX};
pub use wire::{ClientMessage, ErrorCode, WireMessage};
