//! Structured classroom exercises for chat models: exercise documents,
//! prompt compilation, a step-tracking session engine, model clients,
//! transcript storage and an automated prompt test battery.

pub mod exercise_spec;
pub mod model_client;
pub mod placeholder;
pub mod prompt_compiler;
pub mod session_engine;
pub mod test_harness;
pub mod transcript_store;
