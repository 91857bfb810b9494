use std::path::PathBuf;

use roadgraph::graph::VertexId;
use roadgraph_cli::config::RunConfig;
use roadgraph_cli::graph_io::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn json_two_vertices_one_edge() {
    let g = load_graph_auto(&fixture("two.json")).unwrap();
    assert_eq!((g.vertex_count(), g.edge_count()), (2, 1));
    assert!(g.has_edge(VertexId(0), VertexId(5)));
    assert_eq!(g.edge_length(VertexId(0), VertexId(5)), Some(100.0));
}

#[test]
fn json_round_trip_is_identical() {
    let g = load_graph_auto(&fixture("messy.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.json");
    save_graph(&g, &p).unwrap();
    let back = load_graph_auto(&p).unwrap();
    assert_eq!(back, g);
    save_graph(&back, &dir.path().join("h.json")).unwrap();
    assert_eq!(
        std::fs::read(&p).unwrap(),
        std::fs::read(dir.path().join("h.json")).unwrap()
    );
}

#[test]
fn json_is_normalized() {
    let g = load_graph_auto(&fixture("messy.json")).unwrap();
    g.validate().unwrap();
    // duplicate 1-0, self-loop 1-1 and zero-length 1-2 are dropped
    assert_eq!(g.edge_count(), 2);
    assert_eq!(g.polyline(VertexId(0), VertexId(1)).unwrap().len(), 3);
    assert!(g.has_edge(VertexId(2), VertexId(3)));
}

#[test]
fn json_errors() {
    let bad = |s: &str| {
        let f: GraphFile = serde_json::from_str(s).unwrap();
        graph_from_file(&f).unwrap_err()
    };
    assert_eq!(
        bad(r#"{"format_version":2,"vertices":[],"edges":[]}"#),
        GraphFileError::Version(2)
    );
    assert_eq!(
        bad(
            r#"{"format_version":1,"vertices":[{"id":1,"x":0,"y":0},{"id":1,"x":1,"y":1}],"edges":[]}"#
        ),
        GraphFileError::DuplicateVertex(1)
    );
    assert_eq!(
        bad(r#"{"format_version":1,"vertices":[{"id":1,"x":0,"y":0}],"edges":[{"a":1,"b":4}]}"#),
        GraphFileError::MissingVertex(0, 4)
    );
    assert!(serde_json::from_str::<GraphFile>(
        r#"{"format_version":1,"vertices":[],"edges":[],"extra":1}"#
    )
    .is_err());
}

#[test]
fn roadtracer_text_import() {
    let g = load_graph_auto(&fixture("tiny.graph")).unwrap();
    assert_eq!((g.vertex_count(), g.edge_count()), (3, 2));
    let crlf = std::fs::read_to_string(fixture("tiny.graph"))
        .unwrap()
        .replace('\n', "\r\n")
        + "\r\n\r\n";
    assert_eq!(parse_roadtracer_text(&crlf).unwrap(), g);
    assert_eq!(
        GraphFormat::infer(&fixture("tiny.graph")),
        GraphFormat::RoadtracerText
    );
}

#[test]
fn roadtracer_text_errors_name_the_line() {
    let e = load_graph(&fixture("bad_edge.graph"), GraphFormat::RoadtracerText).unwrap_err();
    let msg = format!("{e:#}");
    assert!(msg.contains("line 5"), "{msg}");
    assert!(msg.contains("vertex 7"), "{msg}");
    let e = load_graph(&fixture("bad_coord.graph"), GraphFormat::RoadtracerText).unwrap_err();
    assert!(format!("{e:#}").contains("line 2"));
    assert!(matches!(
        parse_roadtracer_text("1 2 3\n"),
        Err(GraphFileError::Text { line: 1, .. })
    ));
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    let c = RunConfig::from_toml("[engine]\nprob_threshold = 0.7\n[expert]\ntau = 50.0\n").unwrap();
    assert_eq!(c.engine.prob_threshold, 0.7);
    assert_eq!(c.expert.tau, 50.0);
    let e = RunConfig::from_toml("[engine]\nprob_treshold = 0.7\n").unwrap_err();
    assert!(format!("{e:#}").contains("prob_treshold"));
    assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    assert!(RunConfig::from_toml("[expert]\ntau = 5.0\n").is_err());
    assert!(RunConfig::from_toml("[metrics]\ndeltas = []\n").is_err());
    // the serialized defaults load back unchanged
    let text = toml::to_string(&RunConfig::default()).unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), RunConfig::default());
}
