use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use roadgraph::geometry::Point2;
use roadgraph::graph::{RoadGraph, VertexId};

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexRecord {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub a: u32,
    pub b: u32,
    /// Full geometry from `a` to `b`, endpoints included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polyline: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub format_version: u32,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GraphFormat {
    Json,
    RoadtracerText,
}

impl GraphFormat {
    /// `.json` files are JSON, anything else is treated as roadtracer text.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => GraphFormat::Json,
            _ => GraphFormat::RoadtracerText,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphFileError {
    #[error("unsupported graph format version {0}")]
    Version(u32),
    #[error("vertex id {0} appears twice")]
    DuplicateVertex(u32),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(u32),
    #[error("edge {0}: references missing vertex {1}")]
    MissingVertex(usize, u32),
    #[error("edge {0}: polyline must have at least two finite points")]
    BadPolyline(usize),
    #[error("line {line}: {message}")]
    Text { line: usize, message: String },
}

fn point(p: [f64; 2]) -> Point2<f64> {
    Point2::new(p[0], p[1])
}

/// Builds a valid graph, dropping self-loops, zero-length and duplicate
/// edges. Polyline endpoints are pinned to the vertex positions.
pub fn graph_from_file(f: &GraphFile) -> Result<RoadGraph<f64>, GraphFileError> {
    if f.format_version != GRAPH_FORMAT_VERSION {
        return Err(GraphFileError::Version(f.format_version));
    }
    let mut g = RoadGraph::new();
    for v in &f.vertices {
        if !(v.x.is_finite() && v.y.is_finite()) {
            return Err(GraphFileError::NonFinite(v.id));
        }
        g.insert_vertex(VertexId(v.id), Point2::new(v.x, v.y))
            .map_err(|_| GraphFileError::DuplicateVertex(v.id))?;
    }
    let mut dropped = 0;
    for (i, e) in f.edges.iter().enumerate() {
        let (a, b) = (VertexId(e.a), VertexId(e.b));
        let pa = g.position(a).ok_or(GraphFileError::MissingVertex(i, e.a))?;
        let pb = g.position(b).ok_or(GraphFileError::MissingVertex(i, e.b))?;
        let mut poly = match &e.polyline {
            Some(pl) => {
                if pl.len() < 2 || pl.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
                    return Err(GraphFileError::BadPolyline(i));
                }
                pl.iter().map(|p| point(*p)).collect()
            }
            None => vec![pa, pb],
        };
        let n = poly.len();
        poly[0] = pa;
        poly[n - 1] = pb;
        poly.dedup();
        let length: f64 = poly.windows(2).map(|w| w[0].dist(w[1])).sum();
        if a == b || length == 0.0 || g.has_edge(a, b) || poly.len() < 2 {
            dropped += 1;
            continue;
        }
        g.add_edge_polyline(a, b, poly).expect("checked above");
    }
    if dropped > 0 {
        log::info!("dropped {dropped} self-loop, zero-length or duplicate edges");
    }
    Ok(g)
}

pub fn graph_to_file(g: &RoadGraph<f64>) -> GraphFile {
    GraphFile {
        format_version: GRAPH_FORMAT_VERSION,
        vertices: g
            .vertices()
            .map(|(id, p)| VertexRecord {
                id: id.0,
                x: p.x,
                y: p.y,
            })
            .collect(),
        edges: g
            .edges()
            .map(|(a, b, poly)| EdgeRecord {
                a: a.0,
                b: b.0,
                polyline: (poly.len() > 2).then(|| poly.iter().map(|p| [p.x, p.y]).collect()),
            })
            .collect(),
    }
}

/// Roadtracer text: one "x y" line per vertex (ids 0, 1, ... in order), a
/// blank line, then one "i j" line per edge. Both orientations of an edge
/// may be listed; extra blank lines at the end and CRLF endings are accepted.
pub fn parse_roadtracer_text(text: &str) -> Result<RoadGraph<f64>, GraphFileError> {
    let err = |line: usize, message: String| GraphFileError::Text { line, message };
    let mut g = RoadGraph::new();
    let mut ids = Vec::new();
    let mut in_edges = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            if !ids.is_empty() {
                in_edges = true;
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(
                line_no,
                format!("expected two fields, found {}", fields.len()),
            ));
        }
        if !in_edges {
            let x: f64 = fields[0]
                .parse()
                .map_err(|_| err(line_no, format!("bad x coordinate {:?}", fields[0])))?;
            let y: f64 = fields[1]
                .parse()
                .map_err(|_| err(line_no, format!("bad y coordinate {:?}", fields[1])))?;
            if !(x.is_finite() && y.is_finite()) {
                return Err(err(line_no, "non-finite coordinate".into()));
            }
            ids.push(g.add_vertex(Point2::new(x, y)));
        } else {
            let mut idx = [0usize; 2];
            for (k, f) in fields.iter().enumerate() {
                let v: usize = f
                    .parse()
                    .map_err(|_| err(line_no, format!("bad vertex index {f:?}")))?;
                if v >= ids.len() {
                    return Err(err(
                        line_no,
                        format!(
                            "edge references vertex {v}, but only {} vertices are defined",
                            ids.len()
                        ),
                    ));
                }
                idx[k] = v;
            }
            let (a, b) = (ids[idx[0]], ids[idx[1]]);
            let same_place = g.position(a) == g.position(b);
            if a != b && !same_place && !g.has_edge(a, b) {
                g.add_edge(a, b).expect("checked");
            }
        }
    }
    Ok(g)
}

pub fn load_graph(path: &Path, format: GraphFormat) -> anyhow::Result<RoadGraph<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let g = match format {
        GraphFormat::Json => {
            let f: GraphFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            graph_from_file(&f)
        }
        GraphFormat::RoadtracerText => parse_roadtracer_text(&text),
    };
    g.with_context(|| format!("loading {}", path.display()))
}

pub fn load_graph_auto(path: &Path) -> anyhow::Result<RoadGraph<f64>> {
    load_graph(path, GraphFormat::infer(path))
}

pub fn save_graph(g: &RoadGraph<f64>, path: &Path) -> anyhow::Result<()> {
    write_json(&graph_to_file(g), path)
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}
