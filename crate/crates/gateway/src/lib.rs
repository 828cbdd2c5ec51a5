//! HTTP gateway and command-line driver for the deckfuse pipeline.

pub mod api;
pub mod cli;

pub use api::{router, serve, ApiError, BridgeDetail, NewDefect, ServeError, SharedStore};
