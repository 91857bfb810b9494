use std::io::{Read, Write};
use std::net::TcpListener;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use crate::bridge::protocol::{
    read_frame, write_frame, ImagePayload, Message, WirePoint, PROTOCOL_VERSION,
};
use crate::bridge::{BridgeConfig, BridgeError, PORT_ENV};
use crate::engine::{
    run_detection_with_maps, DetectionResult, EngineConfig, EngineError, Policy, PolicyError,
    PolicyRequest, PolicyResponse, SegmentationMaps, SegmentationProvider, VertexPrediction,
};
use crate::geometry::Point2;
use crate::imaging::Tile;
use crate::scalar::Scalar;

/// What the host announces in its Hello.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Handshake {
    pub roi_side: usize,
    pub extensions: serde_json::Map<String, serde_json::Value>,
}

/// Host end of one bridge session. Requests strictly alternate with
/// responses; a timeout or framing failure kills the session.
pub struct HostSession {
    writer: Box<dyn Write + Send>,
    frames: Receiver<Result<Message, BridgeError>>,
    child: Option<Child>,
    timeout: Duration,
    next_id: u64,
    roi_side: usize,
    peer_extensions: serde_json::Map<String, serde_json::Value>,
    dead: Option<String>,
}

impl std::fmt::Debug for HostSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HostSession")
            .field("roi_side", &self.roi_side)
            .field("next_id", &self.next_id)
            .field("dead", &self.dead)
            .finish()
    }
}

fn timeout_of(cfg: &BridgeConfig) -> Duration {
    Duration::from_secs_f64(cfg.timeout_secs.max(0.001))
}

impl HostSession {
    /// Performs the handshake over an arbitrary byte stream pair.
    pub fn from_streams<R, W>(
        reader: R,
        writer: W,
        hello: Handshake,
        timeout: Duration,
    ) -> Result<Self, BridgeError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::establish(reader, Box::new(writer), None, hello, timeout)
    }

    /// Starts `cmd` under `sh -c` and talks to it over its standard streams,
    /// or over a localhost socket when the config names a port.
    pub fn spawn(cmd: &str, hello: Handshake, cfg: &BridgeConfig) -> Result<Self, BridgeError> {
        if let Some(port) = cfg.port {
            return Self::listen(Some(cmd), port, hello, cfg);
        }
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        Self::establish(stdout, Box::new(stdin), Some(child), hello, timeout_of(cfg))
    }

    /// Binds `127.0.0.1:port`, optionally starts `cmd` with the bound port in
    /// the environment, and accepts one connection.
    pub fn listen(
        cmd: Option<&str>,
        port: u16,
        hello: Handshake,
        cfg: &BridgeConfig,
    ) -> Result<Self, BridgeError> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        let bound = listener.local_addr()?.port();
        let mut child = match cmd {
            Some(c) => Some(
                Command::new("sh")
                    .arg("-c")
                    .arg(c)
                    .env(PORT_ENV, bound.to_string())
                    .stdin(Stdio::null())
                    .stderr(Stdio::inherit())
                    .spawn()?,
            ),
            None => None,
        };
        let timeout = timeout_of(cfg);
        listener.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        let stream = loop {
            match listener.accept() {
                Ok((s, _)) => break s,
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if let Some(c) = child.as_mut() {
                        if let Some(status) = c.try_wait()? {
                            return Err(BridgeError::Protocol(format!(
                                "client exited before connecting ({status})"
                            )));
                        }
                    }
                    if Instant::now() >= deadline {
                        if let Some(mut c) = child {
                            let _ = c.kill();
                            let _ = c.wait();
                        }
                        return Err(BridgeError::Timeout);
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        };
        stream.set_nonblocking(false)?;
        let reader = stream.try_clone()?;
        Self::establish(reader, Box::new(stream), child, hello, timeout)
    }

    fn establish<R: Read + Send + 'static>(
        mut reader: R,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
        hello: Handshake,
        timeout: Duration,
    ) -> Result<Self, BridgeError> {
        let (tx, rx) = mpsc::sync_channel(1);
        thread::spawn(move || loop {
            let r = read_frame(&mut reader);
            let stop = r.is_err();
            if tx.send(r).is_err() || stop {
                break;
            }
        });
        let mut s = Self {
            writer,
            frames: rx,
            child,
            timeout,
            next_id: 1,
            roi_side: hello.roi_side,
            peer_extensions: Default::default(),
            dead: None,
        };
        match s.handshake(hello) {
            Ok(()) => Ok(s),
            Err(e) => {
                s.kill();
                Err(e)
            }
        }
    }

    fn handshake(&mut self, hello: Handshake) -> Result<(), BridgeError> {
        write_frame(
            &mut self.writer,
            &Message::Hello {
                id: 0,
                version: PROTOCOL_VERSION,
                roi_side: hello.roi_side,
                extensions: hello.extensions,
            },
        )?;
        let reply = match self.recv() {
            Ok(m) => m,
            Err(e @ BridgeError::Parse(_)) => {
                self.report(0, &e);
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        match reply {
            Message::Hello {
                version,
                roi_side,
                extensions,
                ..
            } => {
                if version != PROTOCOL_VERSION {
                    let e = BridgeError::Version(format!(
                        "host speaks {PROTOCOL_VERSION}, client {version}"
                    ));
                    self.report(0, &e);
                    return Err(e);
                }
                if roi_side != self.roi_side {
                    let e = BridgeError::Protocol(format!(
                        "roi_side {roi_side} differs from {}",
                        self.roi_side
                    ));
                    self.report(0, &e);
                    return Err(e);
                }
                self.peer_extensions = extensions;
                Ok(())
            }
            Message::Error { code, message, .. } => Err(BridgeError::Remote { code, message }),
            other => {
                let e = BridgeError::Protocol(format!("expected Hello, got {}", other.kind()));
                self.report(0, &e);
                Err(e)
            }
        }
    }

    fn report(&mut self, id: u64, e: &BridgeError) {
        let _ = write_frame(
            &mut self.writer,
            &Message::error(id, e.code(), e.to_string()),
        );
    }

    fn recv(&mut self) -> Result<Message, BridgeError> {
        match self.frames.recv_timeout(self.timeout) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(BridgeError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(BridgeError::Closed),
        }
    }

    pub fn roi_side(&self) -> usize {
        self.roi_side
    }

    /// Extensions the client sent back in its Hello.
    pub fn peer_extensions(&self) -> &serde_json::Map<String, serde_json::Value> {
        &self.peer_extensions
    }

    pub fn is_alive(&self) -> bool {
        self.dead.is_none()
    }

    fn next_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// One request/response round trip. The reply must echo the id;
    /// an `Error` reply becomes [`BridgeError::Remote`].
    pub fn request(&mut self, m: Message) -> Result<Message, BridgeError> {
        if let Some(why) = &self.dead {
            return Err(BridgeError::Protocol(format!("session is closed: {why}")));
        }
        let id = m.id();
        let r = write_frame(&mut self.writer, &m).and_then(|_| self.recv());
        let reply = match r {
            Ok(reply) => reply,
            Err(e) => {
                self.dead = Some(e.to_string());
                return Err(e);
            }
        };
        if reply.id() != id {
            let e = BridgeError::Protocol(format!(
                "reply id {} does not echo request id {id}",
                reply.id()
            ));
            self.report(id, &e);
            self.dead = Some(e.to_string());
            return Err(e);
        }
        match reply {
            Message::Error { code, message, .. } => Err(BridgeError::Remote { code, message }),
            r => Ok(r),
        }
    }

    fn fail<T>(&mut self, id: u64, e: BridgeError) -> Result<T, BridgeError> {
        self.report(id, &e);
        self.dead = Some(e.to_string());
        Err(e)
    }

    pub fn segment<T: Scalar>(
        &mut self,
        image: &Tile<T>,
    ) -> Result<SegmentationMaps<T>, BridgeError> {
        let id = self.next_id();
        let reply = self.request(Message::Segment {
            id,
            image: ImagePayload::from_tile(image),
        })?;
        let (road, intersection) = match reply {
            Message::SegmentResult {
                road, intersection, ..
            } => (road, intersection),
            other => {
                return self.fail(
                    id,
                    BridgeError::Protocol(format!("expected SegmentResult, got {}", other.kind())),
                )
            }
        };
        let shape = (image.width(), image.height(), 1);
        for p in [&road, &intersection] {
            if (p.width, p.height, p.channels) != shape {
                return self.fail(
                    id,
                    BridgeError::Protocol(format!(
                        "map is {}x{}x{}, expected {}x{}x1",
                        p.width, p.height, p.channels, shape.0, shape.1
                    )),
                );
            }
        }
        Ok(SegmentationMaps {
            road: road.to_tile()?,
            intersection: intersection.to_tile()?,
        })
    }

    pub fn predict<T: Scalar>(
        &mut self,
        center: Point2<T>,
        roi: &Tile<T>,
        history: &Tile<T>,
    ) -> Result<PolicyResponse<T>, BridgeError> {
        let id = self.next_id();
        let reply = self.request(Message::Predict {
            id,
            center: WirePoint {
                x: center.x.as_f64(),
                y: center.y.as_f64(),
            },
            roi: ImagePayload::from_tile(roi),
            history: ImagePayload::from_tile(history),
        })?;
        match reply {
            Message::PredictResult { predictions, .. } => Ok(PolicyResponse {
                predictions: predictions
                    .iter()
                    .map(|p| VertexPrediction {
                        offset: Point2::new(T::lit(p.dx), T::lit(p.dy)),
                        prob: T::lit(p.prob),
                    })
                    .collect(),
            }),
            other => self.fail(
                id,
                BridgeError::Protocol(format!("expected PredictResult, got {}", other.kind())),
            ),
        }
    }

    /// Sends Bye and reaps the child.
    pub fn close(mut self) -> Result<(), BridgeError> {
        if self.dead.is_none() {
            let id = self.next_id();
            write_frame(&mut self.writer, &Message::Bye { id })?;
        }
        self.writer = Box::new(std::io::sink());
        if let Some(mut c) = self.child.take() {
            let deadline = Instant::now() + self.timeout;
            loop {
                if c.try_wait()?.is_some() {
                    break;
                }
                if Instant::now() >= deadline {
                    let _ = c.kill();
                    let _ = c.wait();
                    break;
                }
                thread::sleep(Duration::from_millis(5));
            }
        }
        Ok(())
    }

    fn kill(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

impl Drop for HostSession {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Engine-facing adapter: one Predict round trip per policy request, and
/// Segment for the full-tile maps.
#[derive(Debug)]
pub struct RemotePolicy {
    session: HostSession,
}

impl RemotePolicy {
    pub fn new(session: HostSession) -> Self {
        Self { session }
    }

    pub fn session(&self) -> &HostSession {
        &self.session
    }

    pub fn into_session(self) -> HostSession {
        self.session
    }

    /// Segments `image` remotely, then runs the agent with this policy.
    pub fn detect<T: Scalar>(
        &mut self,
        image: &Tile<T>,
        cfg: &EngineConfig,
    ) -> Result<DetectionResult<T>, EngineError> {
        cfg.validate()?;
        if cfg.roi_side != self.session.roi_side() {
            return Err(EngineError::InvalidConfig(format!(
                "roi_side {} differs from the session's {}",
                cfg.roi_side,
                self.session.roi_side()
            )));
        }
        let maps = SegmentationProvider::segment(self, image).map_err(EngineError::Segmentation)?;
        run_detection_with_maps(Some(image), &maps.intersection, self, cfg)
    }
}

impl<T: Scalar> Policy<T> for RemotePolicy {
    fn predict(&mut self, req: &PolicyRequest<'_, T>) -> Result<PolicyResponse<T>, PolicyError> {
        Ok(self
            .session
            .predict(req.center, &req.roi_rgb(), &req.history_raster())?)
    }
}

impl<T: Scalar> SegmentationProvider<T> for RemotePolicy {
    fn segment(&mut self, image: &Tile<T>) -> Result<SegmentationMaps<T>, PolicyError> {
        Ok(self.session.segment(image)?)
    }
}
