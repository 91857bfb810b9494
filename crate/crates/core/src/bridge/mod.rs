//! Length-prefixed JSON protocol that lets an external process act as the
//! engine's policy and segmentation provider.

mod client;
mod host;
mod protocol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::PolicyError;

pub use client::{serve, ClientHandler, OracleHandler};
pub use host::{Handshake, HostSession, RemotePolicy};
pub use protocol::{
    decode_frame, encode_frame, read_frame, write_frame, ImagePayload, Message, WirePoint,
    WirePrediction, MAX_FRAME_LEN, PROTOCOL_VERSION,
};

/// Environment variable carrying the port to a child started in socket mode.
pub const PORT_ENV: &str = "ROADGRAPH_BRIDGE_PORT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeConfig {
    /// Per-message wait, in seconds.
    pub timeout_secs: f64,
    /// Listen on this localhost port instead of talking over the child's
    /// standard streams. 0 picks a free port.
    pub port: Option<u16>,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            timeout_secs: 30.0,
            port: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed frame: {0}")]
    Parse(String),
    #[error("protocol version mismatch: {0}")]
    Version(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("connection closed")]
    Closed,
    #[error("peer error [{code}]: {message}")]
    Remote { code: String, message: String },
}

impl BridgeError {
    /// Wire error code for errors this side reports to the peer.
    pub fn code(&self) -> &'static str {
        match self {
            BridgeError::Parse(_) => "parse",
            BridgeError::Version(_) => "version",
            _ => "protocol",
        }
    }
}

impl From<BridgeError> for PolicyError {
    fn from(e: BridgeError) -> Self {
        match e {
            BridgeError::Timeout => PolicyError::Timeout,
            BridgeError::Remote { code, message } => PolicyError::Remote { code, message },
            other => PolicyError::Transport(other.to_string()),
        }
    }
}
