use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{cumulative_lengths, project_on_polyline, Point2};
use crate::graph::{RoadGraph, VertexId};
use crate::scalar::Scalar;

pub const DEFAULT_APLS_PAIRS: usize = 500;
pub const DEFAULT_SNAP_RADIUS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AplsResult {
    pub value: f64,
    /// Number of evaluated vertex pairs (summed over both directions in
    /// symmetric mode).
    pub pairs: usize,
    /// Set when the reference graph has no connected vertex pair.
    pub degenerate: bool,
}

/// Graph in dense form with f64 edge lengths.
struct Net {
    ids: Vec<VertexId>,
    pos: Vec<Point2<f64>>,
    adj: Vec<Vec<(usize, f64)>>,
    /// (lo index, hi index, polyline lo→hi, cumulative lengths)
    edges: Vec<(usize, usize, Vec<Point2<f64>>, Vec<f64>)>,
}

impl Net {
    fn new<T: Scalar>(g: &RoadGraph<T>) -> Self {
        let s = g.simplified();
        let ids: Vec<VertexId> = s.vertex_ids().collect();
        let index: BTreeMap<VertexId, usize> =
            ids.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let pos = s.vertices().map(|(_, p)| p.cast::<f64>()).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        let mut edges = Vec::new();
        for (a, b, poly) in s.edges() {
            let poly: Vec<Point2<f64>> = poly.iter().map(|p| p.cast()).collect();
            let cum = cumulative_lengths(&poly);
            let len = *cum.last().unwrap();
            let (ia, ib) = (index[&a], index[&b]);
            adj[ia].push((ib, len));
            adj[ib].push((ia, len));
            edges.push((ia, ib, poly, cum));
        }
        Self {
            ids,
            pos,
            adj,
            edges,
        }
    }

    fn dijkstra(&self, sources: &[(usize, f64)]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.ids.len()];
        let mut heap = BinaryHeap::new();
        for &(v, d) in sources {
            if d < dist[v] {
                dist[v] = d;
                heap.push(Entry(d, v));
            }
        }
        while let Some(Entry(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(n, w) in &self.adj[v] {
                let nd = d + w;
                if nd < dist[n] {
                    dist[n] = nd;
                    heap.push(Entry(nd, n));
                }
            }
        }
        dist
    }

    /// Where `p` attaches to this graph within `radius`: the nearest vertex
    /// if it is at least as close as any edge point, else a point injected
    /// into the nearest edge.
    fn snap(&self, p: Point2<f64>, radius: f64) -> Option<Location> {
        let mut best_v: Option<(f64, usize)> = None;
        for (i, q) in self.pos.iter().enumerate() {
            let d = p.dist(*q);
            if best_v.is_none_or(|(bd, _)| d < bd) {
                best_v = Some((d, i));
            }
        }
        let mut best_e: Option<(f64, usize, f64)> = None;
        for (k, (_, _, poly, cum)) in self.edges.iter().enumerate() {
            let (d, s, _) = project_on_polyline(p, poly, cum);
            if best_e.is_none_or(|(bd, _, _)| d < bd) {
                best_e = Some((d, k, s));
            }
        }
        match (best_v, best_e) {
            (Some((dv, v)), Some((de, _, _))) if dv <= de && dv <= radius => {
                Some(Location::Vertex(v))
            }
            (_, Some((de, k, s))) if de <= radius => Some(Location::OnEdge(k, s)),
            (Some((dv, v)), None) if dv <= radius => Some(Location::Vertex(v)),
            _ => None,
        }
    }

    fn sources(&self, loc: Location) -> Vec<(usize, f64)> {
        match loc {
            Location::Vertex(v) => vec![(v, 0.0)],
            Location::OnEdge(k, s) => {
                let (a, b, _, cum) = &self.edges[k];
                vec![(*a, s), (*b, cum.last().unwrap() - s)]
            }
        }
    }

    /// Shortest route length from `from` (with precomputed distances) to `to`.
    fn route(&self, from: Location, dist: &[f64], to: Location) -> f64 {
        let via_graph = self
            .sources(to)
            .into_iter()
            .map(|(v, d)| dist[v] + d)
            .fold(f64::INFINITY, f64::min);
        match (from, to) {
            (Location::OnEdge(k1, s1), Location::OnEdge(k2, s2)) if k1 == k2 => {
                via_graph.min((s1 - s2).abs())
            }
            _ => via_graph,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Location {
    Vertex(usize),
    /// Edge index and arclength from its lo end.
    OnEdge(usize, f64),
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One-directional APLS from `reference` to `candidate`. Returns
/// (sum of contributions, pair count).
fn directed(
    reference: &Net,
    candidate: &Net,
    num_pairs: usize,
    snap_radius: f64,
    seed: u64,
) -> (f64, usize) {
    let n = reference.ids.len();
    let connected: Vec<usize> = (0..n).filter(|&v| !reference.adj[v].is_empty()).collect();
    // reachable pairs (a, b) with a < b, grouped by source
    let mut dists: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for &a in &connected {
        let d = reference.dijkstra(&[(a, 0.0)]);
        for &b in &connected {
            if b > a && d[b].is_finite() {
                pairs.push((a, b));
            }
        }
        dists.insert(a, d);
    }
    if pairs.is_empty() {
        return (0.0, 0);
    }
    let chosen: Vec<(usize, usize)> = if pairs.len() <= num_pairs {
        pairs
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, pairs.len(), num_pairs).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pairs[i]).collect()
    };

    let snaps: Vec<Option<Location>> = reference
        .pos
        .iter()
        .map(|p| candidate.snap(*p, snap_radius))
        .collect();
    let mut cand_dist: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut total = 0.0;
    for &(a, b) in &chosen {
        let l = dists[&a][b];
        let contribution = match (snaps[a], snaps[b]) {
            (Some(sa), Some(sb)) => {
                let d = cand_dist
                    .entry(a)
                    .or_insert_with(|| candidate.dijkstra(&candidate.sources(sa)));
                let lp = candidate.route(sa, d, sb);
                if !lp.is_finite() {
                    1.0
                } else if l > 0.0 {
                    ((l - lp).abs() / l).min(1.0)
                } else if lp == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            _ => 1.0,
        };
        total += contribution;
    }
    (total, chosen.len())
}

/// Average path length similarity between `gt` and `pred`.
///
/// Control vertices are those of the simplified ground truth. Up to
/// `num_pairs` connected pairs are sampled without replacement (all of them
/// if there are fewer). Each endpoint snaps to the prediction within
/// `snap_radius`; a pair contributes `min(1, |L - L'| / L)` with route lengths
/// measured along polylines, or 1 when there is no corresponding path. The
/// symmetric mode averages both directions.
pub fn apls<T: Scalar>(
    gt: &RoadGraph<T>,
    pred: &RoadGraph<T>,
    num_pairs: usize,
    snap_radius: f64,
    seed: u64,
    symmetric: bool,
) -> AplsResult {
    let g = Net::new(gt);
    let p = Net::new(pred);
    let (sum, n) = directed(&g, &p, num_pairs, snap_radius, seed);
    if n == 0 {
        let pred_trivial = p.edges.is_empty();
        return AplsResult {
            value: if pred_trivial { 1.0 } else { 0.0 },
            pairs: 0,
            degenerate: true,
        };
    }
    let forward = 1.0 - sum / n as f64;
    if !symmetric {
        return AplsResult {
            value: forward,
            pairs: n,
            degenerate: false,
        };
    }
    let (sum_b, n_b) = directed(&p, &g, num_pairs, snap_radius, seed);
    let backward = if n_b == 0 {
        0.0
    } else {
        1.0 - sum_b / n_b as f64
    };
    AplsResult {
        value: 0.5 * (forward + backward),
        pairs: n + n_b,
        degenerate: false,
    }
}
