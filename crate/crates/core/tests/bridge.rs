use std::io::{Cursor, Write};
use std::os::unix::net::UnixStream;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use roadgraph::bridge::*;
use roadgraph::engine::{run_detection_with_maps, EngineConfig, ExpertPolicy, PolicyError};
use roadgraph::expert::ExpertConfig;
use roadgraph::imaging::{render_synthetic_world, WorldStyle};
use roadgraph::metrics::apls;

fn payload(w: usize, h: usize, c: usize, fill: u8) -> ImagePayload {
    ImagePayload::from_bytes(w, h, c, &vec![fill; w * h * c])
}

fn golden() -> Vec<(&'static str, Message)> {
    let mut ext = Map::new();
    ext.insert("seed".into(), json!(7));
    vec![
        (
            "hello",
            Message::Hello {
                id: 0,
                version: 1,
                roi_side: 256,
                extensions: ext,
            },
        ),
        (
            "segment",
            Message::Segment {
                id: 1,
                image: ImagePayload::from_bytes(
                    2,
                    2,
                    3,
                    &[0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255],
                ),
            },
        ),
        (
            "segment_result",
            Message::SegmentResult {
                id: 1,
                road: ImagePayload::from_bytes(2, 2, 1, &[0, 255, 255, 0]),
                intersection: ImagePayload::from_bytes(2, 2, 1, &[0, 0, 0, 255]),
            },
        ),
        (
            "predict",
            Message::Predict {
                id: 2,
                center: WirePoint { x: 128.5, y: 0.1 },
                roi: ImagePayload::from_bytes(1, 1, 3, &[10, 20, 30]),
                history: ImagePayload::from_bytes(1, 1, 1, &[255]),
            },
        ),
        (
            "predict_result",
            Message::PredictResult {
                id: 2,
                predictions: vec![
                    WirePrediction {
                        dx: 40.0,
                        dy: -0.25,
                        prob: 1.0,
                    },
                    WirePrediction {
                        dx: -3.0000000000000004,
                        dy: 1e-7,
                        prob: 0.5,
                    },
                ],
            },
        ),
        (
            "error",
            Message::error(3, "version", "host speaks 1, client 2"),
        ),
        ("bye", Message::Bye { id: 4 }),
    ]
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/protocol")
}

#[test]
fn golden_fixtures_match_byte_for_byte() {
    let dir = fixture_dir();
    let update = std::env::var_os("UPDATE_PROTOCOL_FIXTURES").is_some();
    for (name, m) in golden() {
        let path = dir.join(format!("{name}.bin"));
        if update {
            std::fs::write(&path, encode_frame(&m)).unwrap();
        }
        let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(encode_frame(&m), bytes, "{name}");
        let (back, used) = decode_frame(&bytes).unwrap();
        assert_eq!(back, m, "{name}");
        assert_eq!(used, bytes.len());
        assert_eq!(read_frame(&mut Cursor::new(&bytes)).unwrap(), m);
    }
}

#[test]
fn image_payloads_check_their_size() {
    let p = payload(4, 3, 3, 9);
    assert_eq!(p.bytes().unwrap().len(), 36);
    let bad = ImagePayload {
        width: 5,
        ..p.clone()
    };
    assert!(matches!(bad.bytes(), Err(BridgeError::Parse(_))));
    let bad = ImagePayload {
        data: "***".into(),
        ..p
    };
    assert!(bad.bytes().is_err());
    let t = payload(2, 2, 1, 255).to_tile::<f64>().unwrap();
    assert_eq!(t.data(), &[1.0; 4]);
}

fn arb_payload() -> impl Strategy<Value = ImagePayload> {
    (
        1usize..5,
        1usize..5,
        prop_oneof![Just(1usize), Just(3usize)],
    )
        .prop_flat_map(|(w, h, c)| {
            prop::collection::vec(any::<u8>(), w * h * c)
                .prop_map(move |b| ImagePayload::from_bytes(w, h, c, &b))
        })
}

fn arb_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        Just(0.1),
        Just(-0.0),
        Just(1e-300),
        Just(f64::MAX)
    ]
}

fn arb_message() -> impl Strategy<Value = Message> {
    let id = any::<u64>();
    prop_oneof![
        (
            id.clone(),
            any::<u32>(),
            any::<usize>(),
            "[a-z]{0,6}",
            any::<i64>()
        )
            .prop_map(|(id, version, roi_side, k, v)| {
                let mut extensions = Map::new();
                if !k.is_empty() {
                    extensions.insert(k, Value::from(v));
                }
                Message::Hello {
                    id,
                    version,
                    roi_side,
                    extensions,
                }
            }),
        (id.clone(), arb_payload()).prop_map(|(id, image)| Message::Segment { id, image }),
        (id.clone(), arb_payload(), arb_payload()).prop_map(|(id, road, intersection)| {
            Message::SegmentResult {
                id,
                road,
                intersection,
            }
        }),
        (
            id.clone(),
            arb_f64(),
            arb_f64(),
            arb_payload(),
            arb_payload()
        )
            .prop_map(|(id, x, y, roi, history)| {
                Message::Predict {
                    id,
                    center: WirePoint { x, y },
                    roi,
                    history,
                }
            }),
        (
            id.clone(),
            prop::collection::vec((arb_f64(), arb_f64(), 0.0f64..=1.0), 0..12)
        )
            .prop_map(|(id, ps)| {
                Message::PredictResult {
                    id,
                    predictions: ps
                        .into_iter()
                        .map(|(dx, dy, prob)| WirePrediction { dx, dy, prob })
                        .collect(),
                }
            }),
        (id.clone(), "[a-z]{1,8}", "\\PC{0,20}").prop_map(|(id, code, message)| Message::Error {
            id,
            code,
            message
        }),
        id.prop_map(|id| Message::Bye { id }),
    ]
}

proptest! {
    #[test]
    fn frames_round_trip(m in arb_message()) {
        let bytes = encode_frame(&m);
        let (back, used) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(encode_frame(&back), bytes);
    }
}

/// Client that never answers anything but Hello usefully.
struct Scripted {
    predictions: Vec<WirePrediction>,
}

impl ClientHandler for Scripted {
    fn hello(&mut self, _: usize, _: &Map<String, Value>) -> Result<Map<String, Value>, String> {
        Ok(Map::new())
    }
    fn segment(&mut self, image: &ImagePayload) -> Result<(ImagePayload, ImagePayload), String> {
        let (w, h) = (image.width, image.height);
        let mut int = vec![0u8; w * h];
        for y in 98..103 {
            for x in 98..103 {
                int[y * w + x] = 255;
            }
        }
        Ok((payload(w, h, 1, 0), ImagePayload::from_bytes(w, h, 1, &int)))
    }
    fn predict(
        &mut self,
        _: WirePoint,
        _: &ImagePayload,
        _: &ImagePayload,
    ) -> Result<Vec<WirePrediction>, String> {
        Ok(self.predictions.clone())
    }
}

fn hello(roi_side: usize) -> Handshake {
    Handshake {
        roi_side,
        extensions: Map::new(),
    }
}

fn serve_in_thread<H: ClientHandler + Send + 'static>(
    mut h: H,
) -> (
    UnixStream,
    UnixStream,
    thread::JoinHandle<Result<(), BridgeError>>,
) {
    let (host, client) = UnixStream::pair().unwrap();
    let join = thread::spawn(move || {
        let mut r = client.try_clone().unwrap();
        let mut w = client;
        serve(&mut r, &mut w, &mut h)
    });
    let r = host.try_clone().unwrap();
    (r, host, join)
}

fn connect<H: ClientHandler + Send + 'static>(
    h: H,
    roi_side: usize,
    timeout: Duration,
) -> (
    Result<HostSession, BridgeError>,
    thread::JoinHandle<Result<(), BridgeError>>,
) {
    let (r, w, join) = serve_in_thread(h);
    (
        HostSession::from_streams(r, w, hello(roi_side), timeout),
        join,
    )
}

#[test]
fn handshake_and_clean_shutdown() {
    let (s, join) = connect(
        Scripted {
            predictions: vec![],
        },
        256,
        Duration::from_secs(5),
    );
    let s = s.unwrap();
    assert!(s.is_alive());
    assert_eq!(s.roi_side(), 256);
    s.close().unwrap();
    join.join().unwrap().unwrap();
}

#[test]
fn invalid_remote_responses_truncate_the_run() {
    let cases = [
        (0..11)
            .map(|i| WirePrediction {
                dx: 10.0 + i as f64,
                dy: 0.0,
                prob: 0.9,
            })
            .collect::<Vec<_>>(),
        vec![WirePrediction {
            dx: 10.0,
            dy: 0.0,
            prob: 1.5,
        }],
    ];
    let image = roadgraph::imaging::Tile::<f64>::zeros(200, 200, 3);
    for predictions in cases {
        let (s, join) = connect(Scripted { predictions }, 256, Duration::from_secs(5));
        let mut p = RemotePolicy::new(s.unwrap());
        let r = p.detect(&image, &EngineConfig::default()).unwrap();
        assert_eq!(r.probes, 1);
        assert!(r.truncated);
        assert_eq!(r.policy_errors, 1);
        assert_eq!(r.history.edge_count(), 0);
        p.into_session().close().unwrap();
        join.join().unwrap().unwrap();
    }
}

fn peer(
    reply: impl FnOnce(Message) -> Vec<u8> + Send + 'static,
) -> (UnixStream, UnixStream, thread::JoinHandle<Vec<u8>>) {
    let (host, mut client) = UnixStream::pair().unwrap();
    let join = thread::spawn(move || {
        let m = read_frame(&mut client).unwrap();
        client.write_all(&reply(m)).unwrap();
        client.shutdown(std::net::Shutdown::Write).unwrap();
        // the host answers a bad reply with exactly one Error frame
        client
            .set_read_timeout(Some(Duration::from_secs(5)))
            .unwrap();
        read_frame(&mut client)
            .map(|m| encode_frame(&m))
            .unwrap_or_default()
    });
    (host.try_clone().unwrap(), host, join)
}

#[test]
fn version_mismatch_is_reported_both_ways() {
    let (r, w, join) = peer(|m| {
        encode_frame(&Message::Hello {
            id: m.id(),
            version: 2,
            roi_side: 256,
            extensions: Map::new(),
        })
    });
    let e = HostSession::from_streams(r, w, hello(256), Duration::from_secs(5)).unwrap_err();
    assert!(matches!(e, BridgeError::Version(_)), "{e}");
    let rest = join.join().unwrap();
    match decode_frame(&rest).unwrap().0 {
        Message::Error { code, .. } => assert_eq!(code, "version"),
        other => panic!("{other:?}"),
    }

    // client side
    let frame = encode_frame(&Message::Hello {
        id: 0,
        version: 9,
        roi_side: 256,
        extensions: Map::new(),
    });
    let mut out = Vec::new();
    let e = serve(
        &mut Cursor::new(frame),
        &mut out,
        &mut Scripted {
            predictions: vec![],
        },
    )
    .unwrap_err();
    assert!(matches!(e, BridgeError::Version(_)));
    match decode_frame(&out).unwrap().0 {
        Message::Error { code, .. } => assert_eq!(code, "version"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn silent_peer_times_out() {
    let (host, client) = UnixStream::pair().unwrap();
    let t0 = std::time::Instant::now();
    let e = HostSession::from_streams(
        host.try_clone().unwrap(),
        host,
        hello(256),
        Duration::from_millis(200),
    )
    .unwrap_err();
    assert!(matches!(e, BridgeError::Timeout));
    assert!(t0.elapsed() < Duration::from_secs(5));
    assert!(matches!(PolicyError::from(e), PolicyError::Timeout));
    drop(client);
}

#[test]
fn unexpected_message_kinds_are_protocol_errors() {
    let (r, w, _join) = peer(|_| encode_frame(&Message::Bye { id: 0 }));
    let e = HostSession::from_streams(r, w, hello(256), Duration::from_secs(5)).unwrap_err();
    assert!(matches!(e, BridgeError::Protocol(_)));

    let mut input = encode_frame(&Message::Hello {
        id: 0,
        version: 1,
        roi_side: 256,
        extensions: Map::new(),
    });
    input.extend(encode_frame(&Message::PredictResult {
        id: 1,
        predictions: vec![],
    }));
    let mut out = Vec::new();
    let e = serve(
        &mut Cursor::new(input),
        &mut out,
        &mut Scripted {
            predictions: vec![],
        },
    )
    .unwrap_err();
    assert!(matches!(e, BridgeError::Protocol(_)));
}

#[test]
fn fuzzed_first_frames_fail_cleanly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let valid = encode_frame(&Message::Hello {
        id: 0,
        version: 1,
        roi_side: 256,
        extensions: Map::new(),
    });
    for i in 0..100 {
        let input: Vec<u8> = if i % 2 == 0 {
            let mut b = vec![0u8; rng.random_range(4..64)];
            rng.fill_bytes(&mut b);
            if i % 4 == 0 {
                // plausible length prefix so the body parser is exercised
                let n = (b.len() as u32 - 4).to_be_bytes();
                b[..4].copy_from_slice(&n);
            }
            b
        } else {
            valid[..rng.random_range(1..valid.len())].to_vec()
        };

        // client side: error frame with code "parse", then return
        let mut out = Vec::new();
        let r = serve(
            &mut Cursor::new(&input),
            &mut out,
            &mut Scripted {
                predictions: vec![],
            },
        );
        let e = r.expect_err("malformed first frame must fail");
        assert!(matches!(e, BridgeError::Parse(_)), "case {i}: {e}");
        match decode_frame(&out).unwrap().0 {
            Message::Error { code, .. } => assert_eq!(code, "parse"),
            other => panic!("{other:?}"),
        }

        // host side
        let input2 = input.clone();
        let (r, w, join) = peer(move |_| input2);
        let e = HostSession::from_streams(r, w, hello(256), Duration::from_secs(5)).unwrap_err();
        assert!(matches!(e, BridgeError::Parse(_)), "case {i}: {e}");
        let rest = join.join().unwrap();
        match decode_frame(&rest).unwrap().0 {
            Message::Error { code, .. } => assert_eq!(code, "parse"),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn remote_oracle_matches_in_process_oracle() {
    let cfg = EngineConfig::default();
    for (seed, style) in [(0, WorldStyle::Grid), (1, WorldStyle::Rings)] {
        let w = render_synthetic_world::<f64>(seed, 384, 384, style).unwrap();
        let expert = ExpertConfig::default();
        let mut local = ExpertPolicy::new(&w.graph, expert.clone(), seed).unwrap();
        let a = run_detection_with_maps(Some(&w.image), &w.intersection_mask, &mut local, &cfg)
            .unwrap();

        let mut ext = Map::new();
        ext.insert("expert".into(), serde_json::to_value(&expert).unwrap());
        ext.insert("engine".into(), serde_json::to_value(&cfg).unwrap());
        ext.insert("seed".into(), json!(seed));
        let (r, wr, join) = serve_in_thread(OracleHandler::new(w.graph.clone()));
        let s = HostSession::from_streams(
            r,
            wr,
            Handshake {
                roi_side: cfg.roi_side,
                extensions: ext,
            },
            Duration::from_secs(30),
        )
        .unwrap();
        let mut remote = RemotePolicy::new(s);
        let b = remote.detect(&w.image, &cfg).unwrap();
        remote.into_session().close().unwrap();
        join.join().unwrap().unwrap();

        assert_eq!(a.history, b.history);
        assert_eq!(a.steps, b.steps);
        let da = apls(&w.graph, &a.graph, 500, 15.0, 0, false).value;
        let db = apls(&w.graph, &b.graph, 500, 15.0, 0, false).value;
        assert!((da - db).abs() <= 1e-9);
    }
}

/// Answers Hello, then drops the connection on the n-th Predict.
struct Dies {
    left: usize,
}

impl ClientHandler for Dies {
    fn hello(&mut self, _: usize, _: &Map<String, Value>) -> Result<Map<String, Value>, String> {
        Ok(Map::new())
    }
    fn segment(&mut self, image: &ImagePayload) -> Result<(ImagePayload, ImagePayload), String> {
        Scripted {
            predictions: vec![],
        }
        .segment(image)
    }
    fn predict(
        &mut self,
        _: WirePoint,
        _: &ImagePayload,
        _: &ImagePayload,
    ) -> Result<Vec<WirePrediction>, String> {
        if self.left == 0 {
            panic!("client crashed");
        }
        self.left -= 1;
        Ok(vec![WirePrediction {
            dx: 30.0,
            dy: 0.0,
            prob: 1.0,
        }])
    }
}

#[test]
fn transport_failure_returns_partial_graph() {
    let (s, join) = connect(Dies { left: 2 }, 256, Duration::from_secs(5));
    let mut p = RemotePolicy::new(s.unwrap());
    let image = roadgraph::imaging::Tile::<f64>::zeros(200, 200, 3);
    let r = p.detect(&image, &EngineConfig::default()).unwrap();
    assert!(r.truncated);
    assert_eq!(r.history.edge_count(), 2);
    assert!(!p.session().is_alive());
    assert!(join.join().is_err());
}

#[test]
fn spawned_child_that_exits_is_a_closed_session() {
    let e = HostSession::spawn("exit 0", hello(256), &BridgeConfig::default()).unwrap_err();
    assert!(matches!(e, BridgeError::Closed | BridgeError::Io(_)), "{e}");
}
