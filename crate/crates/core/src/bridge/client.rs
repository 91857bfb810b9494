use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::bridge::protocol::{
    read_frame, write_frame, ImagePayload, Message, WirePoint, WirePrediction, PROTOCOL_VERSION,
};
use crate::bridge::BridgeError;
use crate::engine::{seed_initial_vertices, EngineConfig, ExpertPolicy, Policy};
use crate::expert::ExpertConfig;
use crate::geometry::Point2;
use crate::graph::RoadGraph;
use crate::imaging::ground_truth_masks;

/// Client-side behaviour. Handler errors go back to the host as `Error`
/// frames with code "internal" and the session continues.
pub trait ClientHandler {
    /// Receives the host's Hello; returns extensions for the reply.
    fn hello(
        &mut self,
        roi_side: usize,
        extensions: &Map<String, Value>,
    ) -> Result<Map<String, Value>, String>;
    /// Returns the road and intersection maps.
    fn segment(&mut self, image: &ImagePayload) -> Result<(ImagePayload, ImagePayload), String>;
    fn predict(
        &mut self,
        center: WirePoint,
        roi: &ImagePayload,
        history: &ImagePayload,
    ) -> Result<Vec<WirePrediction>, String>;
}

fn fail<W: Write>(w: &mut W, id: u64, e: BridgeError) -> Result<(), BridgeError> {
    let _ = write_frame(w, &Message::error(id, e.code(), e.to_string()));
    Err(e)
}

/// Serves one session until the host says Bye.
pub fn serve<R: Read, W: Write, H: ClientHandler + ?Sized>(
    reader: &mut R,
    writer: &mut W,
    handler: &mut H,
) -> Result<(), BridgeError> {
    let first = match read_frame(reader) {
        Ok(m) => m,
        Err(e @ BridgeError::Parse(_)) => return fail(writer, 0, e),
        Err(e) => return Err(e),
    };
    match first {
        Message::Hello {
            id,
            version,
            roi_side,
            extensions,
        } => {
            if version != PROTOCOL_VERSION {
                return fail(
                    writer,
                    id,
                    BridgeError::Version(format!(
                        "client speaks {PROTOCOL_VERSION}, host {version}"
                    )),
                );
            }
            match handler.hello(roi_side, &extensions) {
                Ok(ext) => write_frame(
                    writer,
                    &Message::Hello {
                        id,
                        version: PROTOCOL_VERSION,
                        roi_side,
                        extensions: ext,
                    },
                )?,
                Err(msg) => {
                    write_frame(writer, &Message::error(id, "config", msg.clone()))?;
                    return Err(BridgeError::Protocol(msg));
                }
            }
        }
        other => {
            return fail(
                writer,
                other.id(),
                BridgeError::Protocol(format!("expected Hello, got {}", other.kind())),
            )
        }
    }
    loop {
        let m = match read_frame(reader) {
            Ok(m) => m,
            Err(e @ BridgeError::Parse(_)) => return fail(writer, 0, e),
            Err(e) => return Err(e),
        };
        let reply = match m {
            Message::Bye { .. } => return Ok(()),
            Message::Segment { id, image } => match handler.segment(&image) {
                Ok((road, intersection)) => Message::SegmentResult {
                    id,
                    road,
                    intersection,
                },
                Err(msg) => Message::error(id, "internal", msg),
            },
            Message::Predict {
                id,
                center,
                roi,
                history,
            } => match handler.predict(center, &roi, &history) {
                Ok(predictions) => Message::PredictResult { id, predictions },
                Err(msg) => Message::error(id, "internal", msg),
            },
            other => {
                return fail(
                    writer,
                    other.id(),
                    BridgeError::Protocol(format!("unexpected {} from host", other.kind())),
                )
            }
        };
        write_frame(writer, &reply)?;
    }
}

fn extension<T: DeserializeOwned + Default>(
    ext: &Map<String, Value>,
    key: &str,
) -> Result<T, String> {
    match ext.get(key) {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| format!("extension {key}: {e}")),
        None => Ok(T::default()),
    }
}

/// Ground-truth client: answers Segment with rasterized masks and Predict
/// with the expert, configured from the host's Hello extensions
/// (`expert`, `engine`, `seed`).
#[derive(Debug)]
pub struct OracleHandler {
    gt: RoadGraph<f64>,
    engine: EngineConfig,
    policy: Option<ExpertPolicy<f64>>,
}

impl OracleHandler {
    pub fn new(gt: RoadGraph<f64>) -> Self {
        Self {
            gt,
            engine: EngineConfig::default(),
            policy: None,
        }
    }

    fn policy(&mut self) -> Result<&mut ExpertPolicy<f64>, String> {
        self.policy
            .as_mut()
            .ok_or_else(|| "no Hello received".to_string())
    }
}

impl ClientHandler for OracleHandler {
    fn hello(
        &mut self,
        roi_side: usize,
        ext: &Map<String, Value>,
    ) -> Result<Map<String, Value>, String> {
        let expert: ExpertConfig = extension(ext, "expert")?;
        let engine: EngineConfig = extension(ext, "engine")?;
        let seed: u64 = extension(ext, "seed")?;
        if engine.roi_side != roi_side {
            return Err(format!(
                "engine.roi_side {} differs from roi_side {roi_side}",
                engine.roi_side
            ));
        }
        self.policy = Some(ExpertPolicy::new(&self.gt, expert, seed).map_err(|e| e.to_string())?);
        self.engine = engine;
        let mut out = Map::new();
        out.insert("mode".into(), Value::String("oracle".into()));
        Ok(out)
    }

    fn segment(&mut self, image: &ImagePayload) -> Result<(ImagePayload, ImagePayload), String> {
        let (road, int) = ground_truth_masks(&self.gt, image.width, image.height);
        let seeds = seed_initial_vertices(&int, &self.engine);
        self.policy()?.observe_seeds(&seeds);
        Ok((
            ImagePayload::from_tile(&road),
            ImagePayload::from_tile(&int),
        ))
    }

    fn predict(
        &mut self,
        center: WirePoint,
        _roi: &ImagePayload,
        _history: &ImagePayload,
    ) -> Result<Vec<WirePrediction>, String> {
        let resp = self.policy()?.respond_at(Point2::new(center.x, center.y));
        Ok(resp
            .predictions
            .iter()
            .map(|p| WirePrediction {
                dx: p.offset.x,
                dy: p.offset.y,
                prob: p.prob,
            })
            .collect())
    }
}
