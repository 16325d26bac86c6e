//! HTTP service and command-line front end for praxis exercises.

pub mod api;
pub mod cli;
pub mod goldens;
pub mod state;

pub use api::{router, ApiError, ErrorCode, SessionHandle, TranscriptView, ViewerRole};
pub use state::{AppState, EnvConfig, ModelSource};
