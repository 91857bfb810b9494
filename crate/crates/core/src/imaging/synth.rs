//! Deterministic synthetic aerial tiles with known road graphs.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project_on_segment, Point2};
use crate::graph::{RoadGraph, VertexId};
use crate::imaging::raster::{rasterize_disks, rasterize_graph};
use crate::imaging::Tile;
use crate::scalar::Scalar;

pub const MIN_VERTEX_SPACING: f64 = 30.0;
pub const MIN_WORLD_SIDE: usize = 256;
const MARGIN: f64 = 48.0;
const GRID_PITCH: f64 = 150.0;
/// Smallest angle allowed between two roads leaving the same vertex.
const MIN_JUNCTION_ANGLE_DEG: f64 = 35.0;
pub const ROAD_MASK_STROKE: usize = 3;
pub const INTERSECTION_DISK_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldStyle {
    /// Jittered grid with random diagonals, dead ends and bent roads.
    #[default]
    Grid,
    /// Concentric ring roads joined by spokes; almost every road lies on a cycle.
    Rings,
}

impl std::str::FromStr for WorldStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(Self::Grid),
            "rings" => Ok(Self::Rings),
            other => Err(format!(
                "unknown world style '{other}' (expected grid or rings)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("synthetic worlds need width and height >= {MIN_WORLD_SIDE}, got {0}x{1}")]
    TooSmall(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld<T> {
    pub image: Tile<T>,
    pub graph: RoadGraph<T>,
    pub road_mask: Tile<T>,
    pub intersection_mask: Tile<T>,
}

/// Builds the road graph, renders a 3-channel tile and the two
/// ground-truth masks. Bit-identical for equal arguments.
pub fn render_synthetic_world<T: Scalar>(
    seed: u64,
    width: usize,
    height: usize,
    style: WorldStyle,
) -> Result<SyntheticWorld<T>, SynthError> {
    if width < MIN_WORLD_SIDE || height < MIN_WORLD_SIDE {
        return Err(SynthError::TooSmall(width, height));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sketch = match style {
        WorldStyle::Grid => grid_sketch(&mut rng, width as f64, height as f64),
        WorldStyle::Rings => ring_sketch(&mut rng, width as f64, height as f64),
    };
    let graph64 = sketch.into_graph();
    let image = render_image(&mut rng, &graph64, width, height);

    let graph: RoadGraph<T> = cast_graph(&graph64);
    let (road_mask, intersection_mask) = ground_truth_masks(&graph, width, height);
    Ok(SyntheticWorld {
        image: image.cast(),
        graph,
        road_mask,
        intersection_mask,
    })
}

/// Road mask (stroke 3) and intersection mask (disks on vertices of degree
/// other than 2) of a graph.
pub fn ground_truth_masks<T: Scalar>(
    graph: &RoadGraph<T>,
    width: usize,
    height: usize,
) -> (Tile<T>, Tile<T>) {
    let road = rasterize_graph(graph, width, height, ROAD_MASK_STROKE);
    let terminals: Vec<Point2<T>> = graph
        .vertices()
        .filter(|(id, _)| graph.degree(*id) != 2 && graph.degree(*id) != 0)
        .map(|(_, p)| p)
        .collect();
    (
        road,
        rasterize_disks(&terminals, width, height, INTERSECTION_DISK_RADIUS),
    )
}

/// Converts the scalar type of a graph, keeping ids.
pub fn cast_graph<T: Scalar, U: Scalar>(g: &RoadGraph<T>) -> RoadGraph<U> {
    let mut out = RoadGraph::new();
    for (id, p) in g.vertices() {
        out.insert_vertex(id, p.cast()).expect("unique ids");
    }
    for (a, b, poly) in g.edges() {
        out.add_edge_polyline(a, b, poly.iter().map(|p| p.cast()).collect())
            .expect("valid source graph");
    }
    out
}

type P = Point2<f64>;

/// Road layout before it becomes a graph: node positions and polylines
/// between node indices.
#[derive(Default)]
struct Sketch {
    nodes: Vec<P>,
    roads: Vec<(usize, usize, Vec<P>)>,
}

impl Sketch {
    fn has_road(&self, a: usize, b: usize) -> bool {
        self.roads
            .iter()
            .any(|(x, y, _)| (*x == a && *y == b) || (*x == b && *y == a))
    }

    /// True if `poly` crosses any existing road other than at shared nodes.
    fn crosses(&self, poly: &[P], skip: Option<usize>) -> bool {
        for (k, (_, _, other)) in self.roads.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            for s in poly.windows(2) {
                for o in other.windows(2) {
                    if segments_cross(s[0], s[1], o[0], o[1]) {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn directions_at(&self, node: usize, skip: Option<usize>) -> Vec<P> {
        let at = self.nodes[node];
        self.roads
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != skip)
            .filter_map(|(_, (a, b, poly))| {
                if *a == node {
                    Some(poly[1] - at)
                } else if *b == node {
                    Some(poly[poly.len() - 2] - at)
                } else {
                    None
                }
            })
            .collect()
    }

    fn angle_ok(&self, node: usize, dir: P, skip: Option<usize>) -> bool {
        self.directions_at(node, skip)
            .into_iter()
            .all(|d| angle_between_deg(d, dir) >= MIN_JUNCTION_ANGLE_DEG)
    }

    /// Graph with degree-2 vertices for interior polyline points. Isolated
    /// nodes and components made only of degree-2 vertices are dropped.
    fn into_graph(self) -> RoadGraph<f64> {
        let mut g = RoadGraph::new();
        let mut ids: Vec<Option<VertexId>> = vec![None; self.nodes.len()];
        for (a, b, _) in &self.roads {
            for n in [*a, *b] {
                if ids[n].is_none() {
                    ids[n] = Some(g.add_vertex(self.nodes[n]));
                }
            }
        }
        for (a, b, poly) in &self.roads {
            let mut prev = ids[*a].unwrap();
            for p in &poly[1..poly.len() - 1] {
                let v = g.add_vertex(*p);
                g.add_edge(prev, v).unwrap();
                prev = v;
            }
            g.add_edge(prev, ids[*b].unwrap()).unwrap();
        }
        for comp in components(&g) {
            if comp.iter().all(|v| g.degree(*v) == 2) {
                for v in comp {
                    g.remove_vertex(v);
                }
            }
        }
        g
    }
}

fn components(g: &RoadGraph<f64>) -> Vec<Vec<VertexId>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for start in g.vertex_ids() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &n in g.neighbors(v) {
                if seen.insert(n) {
                    comp.push(n);
                    stack.push(n);
                }
            }
        }
        out.push(comp);
    }
    out
}

fn angle_between_deg(u: P, v: P) -> f64 {
    u.cross(v).abs().atan2(u.dot(v)).to_degrees()
}

fn orient(a: P, b: P, c: P) -> f64 {
    (b - a).cross(c - a)
}

/// Proper crossing or touching of two segments, ignoring contacts where the
/// segments share an endpoint.
fn segments_cross(a: P, b: P, c: P, d: P) -> bool {
    let shared = |p: P, q: P| p.dist(q) < 1e-9;
    if shared(a, c) || shared(a, d) || shared(b, c) || shared(b, d) {
        return false;
    }
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let near = |p: P, s: P, e: P| project_on_segment(p, s, e).0.dist(p) < 1e-6;
    near(a, c, d) || near(b, c, d) || near(c, a, b) || near(d, a, b)
}

fn grid_sketch(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Sketch {
    let nx = (((w - 2.0 * MARGIN) / GRID_PITCH).round() as usize).max(1) + 1;
    let ny = (((h - 2.0 * MARGIN) / GRID_PITCH).round() as usize).max(1) + 1;
    let cell_x = (w - 2.0 * MARGIN) / (nx - 1) as f64;
    let cell_y = (h - 2.0 * MARGIN) / (ny - 1) as f64;
    let jitter = 0.12 * cell_x.min(cell_y);
    let mut sk = Sketch::default();
    for j in 0..ny {
        for i in 0..nx {
            let x = MARGIN + i as f64 * cell_x + rng.random_range(-jitter..jitter);
            let y = MARGIN + j as f64 * cell_y + rng.random_range(-jitter..jitter);
            sk.nodes.push(P::new(x, y));
        }
    }
    let node = |i: usize, j: usize| j * nx + i;

    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx && rng.random_bool(0.85) {
                let (a, b) = (node(i, j), node(i + 1, j));
                sk.roads.push((a, b, vec![sk.nodes[a], sk.nodes[b]]));
            }
            if j + 1 < ny && rng.random_bool(0.85) {
                let (a, b) = (node(i, j), node(i, j + 1));
                sk.roads.push((a, b, vec![sk.nodes[a], sk.nodes[b]]));
            }
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            if !rng.random_bool(0.3) {
                continue;
            }
            let (a, b) = if rng.random_bool(0.5) {
                (node(i, j), node(i + 1, j + 1))
            } else {
                (node(i + 1, j), node(i, j + 1))
            };
            let poly = vec![sk.nodes[a], sk.nodes[b]];
            if !sk.crosses(&poly, None)
                && sk.angle_ok(a, poly[1] - poly[0], None)
                && sk.angle_ok(b, poly[0] - poly[1], None)
            {
                sk.roads.push((a, b, poly));
            }
        }
    }

    // bend some roads at their midpoint by a clear turning angle
    for k in 0..sk.roads.len() {
        let (a, b) = (sk.roads[k].0, sk.roads[k].1);
        let (pa, pb) = (sk.nodes[a], sk.nodes[b]);
        let len = pa.dist(pb);
        if len < 100.0 || !rng.random_bool(0.45) {
            continue;
        }
        let turn = rng.random_range(35.0f64..60.0).to_radians();
        let offset = (turn / 2.0).tan() * len / 2.0 * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let dir = (pb - pa) * (1.0 / len);
        let normal = P::new(-dir.y, dir.x);
        let mid = pa.lerp(pb, 0.5) + normal * offset;
        if mid.x < 20.0 || mid.y < 20.0 || mid.x > w - 20.0 || mid.y > h - 20.0 {
            continue;
        }
        let spaced = sk.nodes.iter().all(|n| n.dist(mid) >= MIN_VERTEX_SPACING)
            && sk.roads.iter().enumerate().all(|(o, (_, _, poly))| {
                o == k
                    || poly.windows(2).all(|s| {
                        project_on_segment(mid, s[0], s[1]).0.dist(mid) >= MIN_VERTEX_SPACING
                    })
            });
        let poly = vec![pa, mid, pb];
        if spaced
            && !sk.crosses(&poly, Some(k))
            && sk.angle_ok(a, mid - pa, Some(k))
            && sk.angle_ok(b, mid - pb, Some(k))
        {
            sk.roads[k].2 = poly;
        }
    }
    sk
}

fn ring_sketch(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Sketch {
    let center = P::new(w / 2.0, h / 2.0);
    let rmax = w.min(h) / 2.0 - MARGIN;
    let rings = ((rmax / 110.0).floor() as usize).max(1);
    let spokes: usize = rng.random_range(5..=7);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut sk = Sketch::default();
    sk.nodes.push(center);
    let mut ring_nodes: Vec<Vec<usize>> = Vec::new();
    for k in 0..rings {
        let r = rmax * (k + 1) as f64 / rings as f64 + rng.random_range(-8.0..8.0);
        let per_spoke = ((std::f64::consts::TAU * r / (spokes as f64 * 40.0)).floor() as usize)
            .max(16usize.div_ceil(spokes));
        let n = spokes * per_spoke;
        let ids: Vec<usize> = (0..n)
            .map(|i| {
                let a = phase + std::f64::consts::TAU * i as f64 / n as f64;
                sk.nodes.push(center + P::new(a.cos(), a.sin()) * r);
                sk.nodes.len() - 1
            })
            .collect();
        for i in 0..n {
            let (a, b) = (ids[i], ids[(i + 1) % n]);
            sk.roads.push((a, b, vec![sk.nodes[a], sk.nodes[b]]));
        }
        ring_nodes.push(ids);
    }
    for s in 0..spokes {
        let mut prev = 0usize;
        for ids in &ring_nodes {
            let per_spoke = ids.len() / spokes;
            let here = ids[s * per_spoke];
            if !sk.has_road(prev, here) {
                sk.roads
                    .push((prev, here, vec![sk.nodes[prev], sk.nodes[here]]));
            }
            prev = here;
        }
    }
    sk
}

fn render_image(
    rng: &mut ChaCha8Rng,
    g: &RoadGraph<f64>,
    width: usize,
    height: usize,
) -> Tile<f64> {
    // low-frequency value noise for the background texture
    let gx = 9usize;
    let gy = 9usize;
    let coarse: Vec<f64> = (0..gx * gy).map(|_| rng.random::<f64>()).collect();
    let sample = |x: f64, y: f64| {
        let fx = x / width as f64 * (gx - 1) as f64;
        let fy = y / height as f64 * (gy - 1) as f64;
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(gx - 1), (y0 + 1).min(gy - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let v = |i: usize, j: usize| coarse[j * gx + i];
        let top = v(x0, y0) * (1.0 - tx) + v(x1, y0) * tx;
        let bottom = v(x0, y1) * (1.0 - tx) + v(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    };
    let mut bg = vec![0.0f64; width * height * 3];
    let tint = [0.22, 0.32, 0.18];
    let gain = [0.22, 0.24, 0.16];
    for y in 0..height {
        for x in 0..width {
            let n = sample(x as f64, y as f64);
            for c in 0..3 {
                let grain = rng.random_range(-0.05..0.05);
                bg[(y * width + x) * 3 + c] = (tint[c] + gain[c] * n + grain).clamp(0.0, 1.0);
            }
        }
    }

    let mut coverage = vec![0.0f64; width * height];
    let mut shade = vec![0.0f64; width * height];
    for (_, _, poly) in g.edges() {
        let road_width: f64 = rng.random_range(4.0..8.0);
        let brightness: f64 = rng.random_range(0.78..0.92);
        let half = road_width / 2.0;
        for s in poly.windows(2) {
            let (a, b) = (s[0], s[1]);
            let x0 = ((a.x.min(b.x) - half - 1.0).floor().max(0.0)) as usize;
            let y0 = ((a.y.min(b.y) - half - 1.0).floor().max(0.0)) as usize;
            let x1 = ((a.x.max(b.x) + half + 1.0).ceil() as usize).min(width - 1);
            let y1 = ((a.y.max(b.y) + half + 1.0).ceil() as usize).min(height - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = P::new(x as f64, y as f64);
                    let d = project_on_segment(p, a, b).0.dist(p);
                    let cov = (half + 0.5 - d).clamp(0.0, 1.0);
                    let i = y * width + x;
                    if cov > coverage[i] {
                        coverage[i] = cov;
                        shade[i] = brightness;
                    }
                }
            }
        }
    }
    let mut data = bg;
    for i in 0..width * height {
        let cov = coverage[i];
        if cov > 0.0 {
            for c in 0..3 {
                let v = &mut data[i * 3 + c];
                *v = (*v * (1.0 - cov) + shade[i] * cov).clamp(0.0, 1.0);
            }
        }
    }
    Tile::from_vec(width, height, 3, data).expect("rendered values in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::raster::squared_distance_transform;

    #[test]
    fn rejects_small_tiles() {
        assert_eq!(
            render_synthetic_world::<f64>(1, 128, 512, WorldStyle::Grid).unwrap_err(),
            SynthError::TooSmall(128, 512)
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let a = render_synthetic_world::<f32>(7, 256, 256, WorldStyle::Grid).unwrap();
        let b = render_synthetic_world::<f32>(7, 256, 256, WorldStyle::Grid).unwrap();
        assert_eq!(a, b);
        let c = render_synthetic_world::<f32>(8, 256, 256, WorldStyle::Grid).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn vertices_are_spaced_and_graph_valid() {
        for seed in 0..12 {
            for style in [WorldStyle::Grid, WorldStyle::Rings] {
                let w = render_synthetic_world::<f64>(seed, 512, 512, style).unwrap();
                w.graph.validate().unwrap();
                assert!(w.graph.edge_count() > 0);
                let pts: Vec<_> = w.graph.vertices().map(|(_, p)| p).collect();
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        assert!(
                            pts[i].dist(pts[j]) >= MIN_VERTEX_SPACING,
                            "seed {seed} {style:?}: {:?} {:?}",
                            pts[i],
                            pts[j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn road_mask_hugs_centerline() {
        for seed in 0..4 {
            let w = render_synthetic_world::<f64>(seed, 384, 320, WorldStyle::Grid).unwrap();
            let centerline = rasterize_graph(&w.graph, 384, 320, 1).to_mask();
            let dt = squared_distance_transform(&centerline, 384, 320);
            for (i, on) in w.road_mask.to_mask().into_iter().enumerate() {
                if on {
                    assert!(dt[i] <= 36.0);
                }
            }
        }
    }
}
