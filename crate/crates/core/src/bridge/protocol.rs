use std::io::{ErrorKind, Read, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::bridge::BridgeError;
use crate::imaging::Tile;
use crate::scalar::Scalar;

pub const PROTOCOL_VERSION: u32 = 1;
/// Frames longer than this are rejected as malformed.
pub const MAX_FRAME_LEN: usize = 256 << 20;

/// 8-bit raster, row-major, channels interleaved, base64 encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: String,
}

impl ImagePayload {
    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            channels,
            data: STANDARD.encode(bytes),
        }
    }

    pub fn from_tile<T: Scalar>(t: &Tile<T>) -> Self {
        Self::from_bytes(t.width(), t.height(), t.channels(), &t.to_u8())
    }

    /// Decoded bytes, checked against the declared size.
    pub fn bytes(&self) -> Result<Vec<u8>, BridgeError> {
        let b = STANDARD
            .decode(&self.data)
            .map_err(|e| BridgeError::Parse(format!("image data: {e}")))?;
        let expected = self.width * self.height * self.channels;
        if b.len() != expected {
            return Err(BridgeError::Parse(format!(
                "image declares {}x{}x{} = {expected} bytes, got {}",
                self.width,
                self.height,
                self.channels,
                b.len()
            )));
        }
        Ok(b)
    }

    pub fn to_tile<T: Scalar>(&self) -> Result<Tile<T>, BridgeError> {
        let b = self.bytes()?;
        Tile::from_u8(self.width, self.height, self.channels, &b)
            .map_err(|e| BridgeError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WirePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WirePrediction {
    pub dx: f64,
    pub dy: f64,
    pub prob: f64,
}

/// One protocol message. On the wire the variant name is the `kind` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Message {
    Hello {
        id: u64,
        version: u32,
        roi_side: usize,
        /// Free-form settings, e.g. the expert and engine configs.
        #[serde(default)]
        extensions: serde_json::Map<String, serde_json::Value>,
    },
    Segment {
        id: u64,
        image: ImagePayload,
    },
    SegmentResult {
        id: u64,
        road: ImagePayload,
        intersection: ImagePayload,
    },
    Predict {
        id: u64,
        center: WirePoint,
        roi: ImagePayload,
        history: ImagePayload,
    },
    PredictResult {
        id: u64,
        predictions: Vec<WirePrediction>,
    },
    Error {
        id: u64,
        code: String,
        message: String,
    },
    Bye {
        id: u64,
    },
}

impl Message {
    pub fn id(&self) -> u64 {
        match self {
            Message::Hello { id, .. }
            | Message::Segment { id, .. }
            | Message::SegmentResult { id, .. }
            | Message::Predict { id, .. }
            | Message::PredictResult { id, .. }
            | Message::Error { id, .. }
            | Message::Bye { id } => *id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::Segment { .. } => "Segment",
            Message::SegmentResult { .. } => "SegmentResult",
            Message::Predict { .. } => "Predict",
            Message::PredictResult { .. } => "PredictResult",
            Message::Error { .. } => "Error",
            Message::Bye { .. } => "Bye",
        }
    }

    pub fn error(id: u64, code: &str, message: impl Into<String>) -> Self {
        Message::Error {
            id,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// Length prefix plus JSON body.
pub fn encode_frame(m: &Message) -> Vec<u8> {
    let body = serde_json::to_vec(m).expect("messages always serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), BridgeError> {
    if bytes.len() < 4 {
        return Err(BridgeError::Parse("truncated length prefix".into()));
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    check_len(len)?;
    let body = bytes.get(4..4 + len).ok_or_else(|| {
        BridgeError::Parse(format!(
            "frame declares {len} bytes, {} present",
            bytes.len() - 4
        ))
    })?;
    Ok((parse_body(body)?, 4 + len))
}

fn check_len(len: usize) -> Result<(), BridgeError> {
    if len > MAX_FRAME_LEN {
        return Err(BridgeError::Parse(format!(
            "frame length {len} exceeds {MAX_FRAME_LEN}"
        )));
    }
    Ok(())
}

fn parse_body(body: &[u8]) -> Result<Message, BridgeError> {
    let text = std::str::from_utf8(body)
        .map_err(|e| BridgeError::Parse(format!("frame is not UTF-8: {e}")))?;
    serde_json::from_str(text).map_err(|e| BridgeError::Parse(format!("bad message: {e}")))
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, m: &Message) -> Result<(), BridgeError> {
    w.write_all(&encode_frame(m))?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. A clean end of stream before the first byte is
/// [`BridgeError::Closed`]; anything cut short later is a parse error.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Message, BridgeError> {
    let mut head = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Err(BridgeError::Closed),
            Ok(0) => return Err(BridgeError::Parse("truncated length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(head) as usize;
    check_len(len)?;
    let mut body = Vec::new();
    r.take(len as u64).read_to_end(&mut body)?;
    if body.len() != len {
        return Err(BridgeError::Parse(format!(
            "frame declares {len} bytes, stream ended after {}",
            body.len()
        )));
    }
    parse_body(&body)
}
