//! Inference-mode adapters that bind the task model, verifier and skill
//! editor ports to chat-completions HTTP endpoints.
//!
//! Nothing here trains: the editor records no log-probabilities, and policy
//! parameters are never touched.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod client;
pub mod config;
pub mod mock;
pub mod ports;
pub mod prompt;
pub mod tasks;
pub mod transport;
pub mod verifier;
pub mod wire;

pub use client::{ChatClient, InFlight, RateLimiter};
pub use config::{CassetteMode, Endpoint, LlmConfig};
pub use ports::{LlmSkillEditor, LlmTaskModel};
pub use transport::{CassetteReplay, ChatTransport, Exchange, HttpTransport, Recorder};
pub use verifier::{exact_match, extract_answer, normalize_answer, ExactMatchVerifier};
