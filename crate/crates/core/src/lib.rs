//! Backend for a sensor-equipped smart classroom.
//!
//! The crate is split along the lines of the deployed system:
//!
//! - [`attendance`]: RFID + WiFi dual-factor attendance sessions with fraud rules.
//! - [`ecosmart`]: sensor calibration and hysteresis control of HVAC, lighting
//!   and ventilation.
//! - [`retrieval`]: text chunking, feature-hashed embeddings and an exact
//!   top-k cosine index with a per-document cache.
//! - [`assistant`]: attendance-gated question answering over course material.
//! - [`quizgen`]: multiple-choice quiz prompting, parsing and validation.
//! - [`device`]: virtual edge nodes and the newline-delimited JSON wire protocol.
//! - [`server`]: the event-sourced platform that ties the pieces together.

pub mod assistant;
pub mod attendance;
pub mod device;
pub mod ecosmart;
pub mod generator;
pub mod quizgen;
pub mod retrieval;
pub mod server;
pub mod text;

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
