//! Live session service: REST control endpoints, a WebSocket chat protocol
//! and an append-only event log per session.

pub mod actor;
pub mod app;
pub mod error;
pub mod protocol;

pub use app::{router, AppState};
pub use error::ApiError;
