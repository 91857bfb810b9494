//! Undirected planar road graph with polyline edge geometry.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cumulative_lengths, polyline_length, Point2};
use crate::scalar::Scalar;

/// Maximum distance between a polyline endpoint and its vertex.
pub const ENDPOINT_TOLERANCE: f64 = 1e-6;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Unordered vertex pair, stored as (smaller, larger).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey(VertexId, VertexId);

impl EdgeKey {
    pub fn new(a: VertexId, b: VertexId) -> Self {
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn lo(&self) -> VertexId {
        self.0
    }

    pub fn hi(&self) -> VertexId {
        self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexClass {
    /// Degree 0. Allowed in memory, ignored by simplification and metrics.
    Isolated,
    Endpoint,
    Interior,
    Intersection,
}

impl VertexClass {
    pub fn from_degree(degree: usize) -> Self {
        match degree {
            0 => Self::Isolated,
            1 => Self::Endpoint,
            2 => Self::Interior,
            _ => Self::Intersection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("vertex {0} already exists")]
    DuplicateVertex(VertexId),
    #[error("self-loop at {0}")]
    SelfLoop(VertexId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(VertexId, VertexId),
    #[error("polyline of edge {0}-{1} does not start and end at its vertices")]
    PolylineMismatch(VertexId, VertexId),
    #[error("non-finite coordinate at {0}")]
    NonFinite(VertexId),
    #[error("adjacency index inconsistent at {0}")]
    Adjacency(VertexId),
}

/// What [`RoadGraph::add_step_edge`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEdgeKind {
    /// A new vertex was created at the target.
    NewVertex,
    /// The target snapped onto an existing vertex which is now connected.
    Snapped,
    /// The target snapped back onto the source vertex; nothing changed.
    SelfSnap,
    /// The target snapped onto an existing neighbor; nothing changed.
    DuplicateEdge,
}

impl StepEdgeKind {
    pub fn is_warning(self) -> bool {
        matches!(self, Self::SelfSnap | Self::DuplicateEdge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEdge {
    pub vertex: VertexId,
    pub kind: StepEdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph<T> {
    vertices: BTreeMap<VertexId, Point2<T>>,
    /// Polylines are oriented from `key.lo()` to `key.hi()`.
    edges: BTreeMap<EdgeKey, Vec<Point2<T>>>,
    adjacency: BTreeMap<VertexId, Vec<VertexId>>,
    next_id: u32,
}

impl<T: Scalar> Default for RoadGraph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> RoadGraph<T> {
    pub fn new() -> Self {
        Self {
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
            adjacency: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn add_vertex(&mut self, p: Point2<T>) -> VertexId {
        let id = VertexId(self.next_id);
        self.next_id += 1;
        self.vertices.insert(id, p);
        self.adjacency.insert(id, Vec::new());
        id
    }

    /// Inserts a vertex with a caller-chosen id (used by loaders).
    pub fn insert_vertex(&mut self, id: VertexId, p: Point2<T>) -> Result<(), GraphError> {
        if self.vertices.contains_key(&id) {
            return Err(GraphError::DuplicateVertex(id));
        }
        self.vertices.insert(id, p);
        self.adjacency.insert(id, Vec::new());
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    pub fn remove_vertex(&mut self, id: VertexId) -> Option<Point2<T>> {
        let neighbors = self.adjacency.get(&id)?.clone();
        for n in neighbors {
            self.remove_edge(id, n);
        }
        self.adjacency.remove(&id);
        self.vertices.remove(&id)
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.vertices.contains_key(&id)
    }

    pub fn position(&self, id: VertexId) -> Option<Point2<T>> {
        self.vertices.get(&id).copied()
    }

    pub fn vertices(&self) -> impl Iterator<Item = (VertexId, Point2<T>)> + '_ {
        self.vertices.iter().map(|(id, p)| (*id, *p))
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.keys().copied()
    }

    /// Edges as `(lo, hi, polyline lo→hi)`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, &[Point2<T>])> + '_ {
        self.edges
            .iter()
            .map(|(k, poly)| (k.lo(), k.hi(), poly.as_slice()))
    }

    pub fn neighbors(&self, id: VertexId) -> &[VertexId] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn degree(&self, id: VertexId) -> usize {
        self.neighbors(id).len()
    }

    pub fn has_edge(&self, a: VertexId, b: VertexId) -> bool {
        self.edges.contains_key(&EdgeKey::new(a, b))
    }

    /// Polyline of edge `a`-`b` oriented from `a` to `b`.
    pub fn polyline(&self, a: VertexId, b: VertexId) -> Option<Vec<Point2<T>>> {
        let poly = self.edges.get(&EdgeKey::new(a, b))?;
        let mut out = poly.clone();
        if a > b {
            out.reverse();
        }
        Some(out)
    }

    pub fn edge_length(&self, a: VertexId, b: VertexId) -> Option<T> {
        self.edges
            .get(&EdgeKey::new(a, b))
            .map(|p| polyline_length(p))
    }

    pub fn total_length(&self) -> T {
        self.edges.values().map(|p| polyline_length(p)).sum()
    }

    pub fn classify_vertex(&self, id: VertexId) -> Result<VertexClass, GraphError> {
        if !self.contains(id) {
            return Err(GraphError::UnknownVertex(id));
        }
        Ok(VertexClass::from_degree(self.degree(id)))
    }

    /// Adds a straight edge between two existing vertices.
    pub fn add_edge(&mut self, a: VertexId, b: VertexId) -> Result<(), GraphError> {
        let pa = self.position(a).ok_or(GraphError::UnknownVertex(a))?;
        let pb = self.position(b).ok_or(GraphError::UnknownVertex(b))?;
        self.add_edge_polyline(a, b, vec![pa, pb])
    }

    /// Adds an edge whose geometry is `poly`, oriented from `a` to `b`.
    pub fn add_edge_polyline(
        &mut self,
        a: VertexId,
        b: VertexId,
        mut poly: Vec<Point2<T>>,
    ) -> Result<(), GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        let pa = self.position(a).ok_or(GraphError::UnknownVertex(a))?;
        let pb = self.position(b).ok_or(GraphError::UnknownVertex(b))?;
        let key = EdgeKey::new(a, b);
        if self.edges.contains_key(&key) {
            return Err(GraphError::DuplicateEdge(a, b));
        }
        let tol = T::lit(ENDPOINT_TOLERANCE);
        if poly.len() < 2 || poly[0].dist(pa) > tol || poly[poly.len() - 1].dist(pb) > tol {
            return Err(GraphError::PolylineMismatch(a, b));
        }
        if a > b {
            poly.reverse();
        }
        self.edges.insert(key, poly);
        insert_sorted(self.adjacency.get_mut(&a).unwrap(), b);
        insert_sorted(self.adjacency.get_mut(&b).unwrap(), a);
        Ok(())
    }

    pub fn remove_edge(&mut self, a: VertexId, b: VertexId) -> Option<Vec<Point2<T>>> {
        let poly = self.edges.remove(&EdgeKey::new(a, b))?;
        if let Some(adj) = self.adjacency.get_mut(&a) {
            adj.retain(|n| *n != b);
        }
        if let Some(adj) = self.adjacency.get_mut(&b) {
            adj.retain(|n| *n != a);
        }
        Some(poly)
    }

    /// Nearest vertex within `eps` of `p`. Ties go to the smaller (y, x)
    /// position, then the smaller id.
    pub fn snap_vertex(&self, p: Point2<T>, eps: T) -> Option<VertexId> {
        let eps_sq = eps * eps;
        let mut best: Option<(T, Point2<T>, VertexId)> = None;
        for (id, q) in self.vertices() {
            let d = p.dist_sq(q);
            if d > eps_sq {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bd, bq, bid)) => {
                    d < *bd || (d == *bd && (q.cmp_yx(bq).then(id.cmp(bid))).is_lt())
                }
            };
            if better {
                best = Some((d, q, id));
            }
        }
        best.map(|(_, _, id)| id)
    }

    /// Extends the graph from `from` toward `to`, snapping onto an existing
    /// vertex within `eps_merge` (loop closure) instead of creating one.
    pub fn add_step_edge(
        &mut self,
        from: VertexId,
        to: Point2<T>,
        eps_merge: T,
    ) -> Result<StepEdge, GraphError> {
        if !self.contains(from) {
            return Err(GraphError::UnknownVertex(from));
        }
        match self.snap_vertex(to, eps_merge) {
            Some(id) if id == from => Ok(StepEdge {
                vertex: from,
                kind: StepEdgeKind::SelfSnap,
            }),
            Some(id) if self.has_edge(from, id) => Ok(StepEdge {
                vertex: id,
                kind: StepEdgeKind::DuplicateEdge,
            }),
            Some(id) => {
                self.add_edge(from, id)?;
                Ok(StepEdge {
                    vertex: id,
                    kind: StepEdgeKind::Snapped,
                })
            }
            None => {
                let id = self.add_vertex(to);
                self.add_edge(from, id)?;
                Ok(StepEdge {
                    vertex: id,
                    kind: StepEdgeKind::NewVertex,
                })
            }
        }
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        let tol = T::lit(ENDPOINT_TOLERANCE);
        for (id, p) in self.vertices() {
            if !p.is_finite() {
                return Err(GraphError::NonFinite(id));
            }
            if !self.adjacency.contains_key(&id) {
                return Err(GraphError::Adjacency(id));
            }
        }
        let mut expected: BTreeMap<VertexId, Vec<VertexId>> =
            self.vertices.keys().map(|id| (*id, Vec::new())).collect();
        for (key, poly) in &self.edges {
            let (a, b) = (key.lo(), key.hi());
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let pa = self.position(a).ok_or(GraphError::UnknownVertex(a))?;
            let pb = self.position(b).ok_or(GraphError::UnknownVertex(b))?;
            if poly.len() < 2 || poly[0].dist(pa) > tol || poly[poly.len() - 1].dist(pb) > tol {
                return Err(GraphError::PolylineMismatch(a, b));
            }
            if poly.iter().any(|p| !p.is_finite()) {
                return Err(GraphError::NonFinite(a));
            }
            expected.get_mut(&a).unwrap().push(b);
            expected.get_mut(&b).unwrap().push(a);
        }
        for (id, mut ns) in expected {
            ns.sort();
            if self.adjacency.get(&id) != Some(&ns) {
                return Err(GraphError::Adjacency(id));
            }
        }
        if self.adjacency.len() != self.vertices.len() {
            let stray = self
                .adjacency
                .keys()
                .find(|id| !self.vertices.contains_key(id))
                .copied()
                .unwrap_or_default();
            return Err(GraphError::Adjacency(stray));
        }
        Ok(())
    }

    /// Removes degree-2 vertices, merging their edges' polylines.
    ///
    /// Endpoint, intersection and isolated vertices keep their ids and
    /// positions. A degree-2 vertex is retained only where removing it would
    /// create a self-loop or a duplicate edge:
    /// - pure cycles keep an anchor (smallest (y, x), then id) plus the two
    ///   cycle vertices nearest one and two thirds of the cycle length;
    /// - a chain returning to its own start keeps the two interior vertices
    ///   nearest one and two thirds of its length;
    /// - among chains joining the same pair, the one with the fewest interior
    ///   vertices collapses to a single edge and every other keeps the
    ///   interior vertex nearest its midpoint.
    pub fn simplified(&self) -> RoadGraph<T> {
        let chains = self.collect_chains();
        let mut out = RoadGraph {
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
            adjacency: BTreeMap::new(),
            next_id: self.next_id,
        };
        for (id, p) in self.vertices() {
            if self.degree(id) != 2 {
                out.vertices.insert(id, p);
                out.adjacency.insert(id, Vec::new());
            }
        }

        let mut groups: BTreeMap<EdgeKey, Vec<&Chain<T>>> = BTreeMap::new();
        let mut loops: Vec<&Chain<T>> = Vec::new();
        for chain in &chains {
            if chain.start == chain.end {
                loops.push(chain);
            } else {
                groups
                    .entry(EdgeKey::new(chain.start, chain.end))
                    .or_default()
                    .push(chain);
            }
        }

        for mut group in groups.into_values() {
            group.sort_by(|a, b| {
                a.interior
                    .len()
                    .cmp(&b.interior.len())
                    .then_with(|| a.interior.cmp(&b.interior))
            });
            for (rank, chain) in group.into_iter().enumerate() {
                let keep = if rank == 0 {
                    vec![]
                } else {
                    chain.pick_interior(&[T::lit(0.5)])
                };
                chain.emit(self, &mut out, &keep);
            }
        }
        for chain in loops {
            let keep = chain.pick_interior(&[T::lit(1.0 / 3.0), T::lit(2.0 / 3.0)]);
            chain.emit(self, &mut out, &keep);
        }
        out
    }

    fn collect_chains(&self) -> Vec<Chain<T>> {
        let mut visited: BTreeSet<EdgeKey> = BTreeSet::new();
        let mut chains = Vec::new();
        for (v, _) in self.vertices() {
            let deg = self.degree(v);
            if deg == 2 || deg == 0 {
                continue;
            }
            for &n in self.neighbors(v) {
                if visited.contains(&EdgeKey::new(v, n)) {
                    continue;
                }
                chains.push(self.walk_chain(v, n, &mut visited));
            }
        }
        // whatever is left lies on cycles made only of degree-2 vertices
        let leftover: Vec<EdgeKey> = self
            .edges
            .keys()
            .filter(|k| !visited.contains(k))
            .copied()
            .collect();
        for key in leftover {
            if visited.contains(&key) {
                continue;
            }
            let cycle = self.cycle_vertices(key.lo());
            let anchor = *cycle
                .iter()
                .min_by(|a, b| {
                    let (pa, pb) = (self.vertices[a], self.vertices[b]);
                    pa.cmp_yx(&pb).then(a.cmp(b))
                })
                .unwrap();
            let first = *self
                .neighbors(anchor)
                .iter()
                .min_by(|a, b| {
                    let (pa, pb) = (self.vertices[a], self.vertices[b]);
                    pa.cmp_yx(&pb).then(a.cmp(b))
                })
                .unwrap();
            chains.push(self.walk_chain(anchor, first, &mut visited));
        }
        chains
    }

    fn cycle_vertices(&self, start: VertexId) -> Vec<VertexId> {
        let mut out = vec![start];
        let mut prev = start;
        let mut cur = self.neighbors(start)[0];
        while cur != start {
            out.push(cur);
            let ns = self.neighbors(cur);
            let next = if ns[0] == prev { ns[1] } else { ns[0] };
            prev = cur;
            cur = next;
        }
        out
    }

    fn walk_chain(
        &self,
        start: VertexId,
        first: VertexId,
        visited: &mut BTreeSet<EdgeKey>,
    ) -> Chain<T> {
        let mut poly = self.polyline(start, first).unwrap();
        visited.insert(EdgeKey::new(start, first));
        let mut interior = Vec::new();
        let mut interior_at = Vec::new();
        let mut prev = start;
        let mut cur = first;
        while cur != start && self.degree(cur) == 2 {
            interior.push(cur);
            interior_at.push(poly.len() - 1);
            let ns = self.neighbors(cur);
            let next = if ns[0] == prev { ns[1] } else { ns[0] };
            visited.insert(EdgeKey::new(cur, next));
            let piece = self.polyline(cur, next).unwrap();
            poly.extend_from_slice(&piece[1..]);
            prev = cur;
            cur = next;
        }
        Chain {
            start,
            end: cur,
            interior,
            interior_at,
            poly,
        }
    }
}

/// A maximal run of edges through degree-2 vertices.
struct Chain<T> {
    start: VertexId,
    end: VertexId,
    interior: Vec<VertexId>,
    /// Index into `poly` of each interior vertex.
    interior_at: Vec<usize>,
    poly: Vec<Point2<T>>,
}

impl<T: Scalar> Chain<T> {
    /// Picks, for each arclength fraction in ascending order, the closest
    /// still-available interior vertex after the previous pick.
    fn pick_interior(&self, fractions: &[T]) -> Vec<usize> {
        if self.interior.len() < fractions.len() {
            // only reachable on malformed input (duplicate edges); keep all
            return (0..self.interior.len()).collect();
        }
        let cum = cumulative_lengths(&self.poly);
        let total = *cum.last().unwrap();
        let mut picks = Vec::with_capacity(fractions.len());
        let mut lo = 0;
        for (k, f) in fractions.iter().enumerate() {
            let hi = self.interior.len() - (fractions.len() - 1 - k);
            let target = total * *f;
            let best = (lo..hi)
                .min_by(|&i, &j| {
                    let di = (cum[self.interior_at[i]] - target).abs();
                    let dj = (cum[self.interior_at[j]] - target).abs();
                    di.partial_cmp(&dj).unwrap().then(i.cmp(&j))
                })
                .unwrap();
            picks.push(best);
            lo = best + 1;
        }
        picks
    }

    fn emit(&self, src: &RoadGraph<T>, out: &mut RoadGraph<T>, keep: &[usize]) {
        if !out.vertices.contains_key(&self.start) {
            // anchor of a pure cycle
            out.vertices.insert(self.start, src.vertices[&self.start]);
            out.adjacency.insert(self.start, Vec::new());
        }
        let mut stops: Vec<(VertexId, usize)> = vec![(self.start, 0)];
        for &k in keep {
            let id = self.interior[k];
            out.vertices.insert(id, src.vertices[&id]);
            out.adjacency.insert(id, Vec::new());
            stops.push((id, self.interior_at[k]));
        }
        stops.push((self.end, self.poly.len() - 1));
        for w in stops.windows(2) {
            let (a, ia) = w[0];
            let (b, ib) = w[1];
            let piece = self.poly[ia..=ib].to_vec();
            out.add_edge_polyline(a, b, piece)
                .expect("simplification preserves graph invariants");
        }
    }
}

fn insert_sorted(v: &mut Vec<VertexId>, id: VertexId) {
    if let Err(pos) = v.binary_search(&id) {
        v.insert(pos, id);
    }
}

/// Free-function form of [`RoadGraph::simplified`].
pub fn simplify_graph<T: Scalar>(g: &RoadGraph<T>) -> RoadGraph<T> {
    g.simplified()
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Point2<f64>;
    type G = RoadGraph<f64>;

    fn path(points: &[(f64, f64)]) -> (G, Vec<VertexId>) {
        let mut g = G::new();
        let ids: Vec<_> = points
            .iter()
            .map(|&(x, y)| g.add_vertex(P::new(x, y)))
            .collect();
        for w in ids.windows(2) {
            g.add_edge(w[0], w[1]).unwrap();
        }
        (g, ids)
    }

    fn cycle(n: usize, r: f64) -> G {
        let pts: Vec<_> = (0..n)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / n as f64;
                (50.0 + r * a.cos(), 50.0 + r * a.sin())
            })
            .collect();
        let (mut g, ids) = path(&pts);
        g.add_edge(ids[n - 1], ids[0]).unwrap();
        g
    }

    #[test]
    fn path_collapses_to_single_edge() {
        let (g, ids) = path(&[(0.0, 0.0), (5.0, 3.0), (10.0, 0.0)]);
        let s = g.simplified();
        assert_eq!(s.vertex_count(), 2);
        assert_eq!(s.edge_count(), 1);
        assert_eq!(
            s.polyline(ids[0], ids[2]).unwrap(),
            vec![P::new(0.0, 0.0), P::new(5.0, 3.0), P::new(10.0, 0.0)]
        );
        s.validate().unwrap();
    }

    #[test]
    fn simplification_fixed_point() {
        let (mut g, ids) = path(&[(0.0, 0.0), (10.0, 0.0)]);
        let c = g.add_vertex(P::new(10.0, 10.0));
        let d = g.add_vertex(P::new(20.0, 0.0));
        g.add_edge(ids[1], c).unwrap();
        g.add_edge(ids[1], d).unwrap();
        assert_eq!(g.simplified(), g);
    }

    #[test]
    fn pure_cycles_keep_three_vertices() {
        for n in 3..=6 {
            let g = cycle(n, 20.0);
            let s = g.simplified();
            s.validate().unwrap();
            assert_eq!(s.vertex_count(), 3, "cycle of {n}");
            assert_eq!(s.edge_count(), 3);
            assert!((s.total_length() - g.total_length()).abs() < 1e-9);
            assert_eq!(s.simplified(), s);
        }
    }

    #[test]
    fn parallel_chains_keep_a_midpoint() {
        // a and b joined directly and by a detour through two vertices
        let mut g = G::new();
        let a = g.add_vertex(P::new(0.0, 0.0));
        let b = g.add_vertex(P::new(30.0, 0.0));
        let m1 = g.add_vertex(P::new(10.0, 10.0));
        let m2 = g.add_vertex(P::new(20.0, 10.0));
        let ta = g.add_vertex(P::new(-10.0, 0.0));
        let tb = g.add_vertex(P::new(40.0, 0.0));
        for (u, v) in [(a, b), (a, m1), (m1, m2), (m2, b), (a, ta), (b, tb)] {
            g.add_edge(u, v).unwrap();
        }
        let s = g.simplified();
        s.validate().unwrap();
        assert_eq!(s.vertex_count(), 5);
        assert!(s.has_edge(a, b));
        assert_eq!(s.simplified(), s);
    }

    #[test]
    fn lollipop_loop_keeps_two_interior() {
        let mut g = G::new();
        let a = g.add_vertex(P::new(0.0, 0.0));
        let tail = g.add_vertex(P::new(-20.0, 0.0));
        let ring: Vec<_> = [(10.0, -10.0), (20.0, 0.0), (10.0, 10.0)]
            .iter()
            .map(|&(x, y)| g.add_vertex(P::new(x, y)))
            .collect();
        g.add_edge(a, tail).unwrap();
        g.add_edge(a, ring[0]).unwrap();
        g.add_edge(ring[0], ring[1]).unwrap();
        g.add_edge(ring[1], ring[2]).unwrap();
        g.add_edge(ring[2], a).unwrap();
        let s = g.simplified();
        s.validate().unwrap();
        assert_eq!(s.vertex_count(), 4);
        assert_eq!(s.simplified(), s);
    }

    #[test]
    fn classify_by_degree() {
        let mut g = G::new();
        let c = g.add_vertex(P::new(0.0, 0.0));
        let arms: Vec<_> = (0..5)
            .map(|i| g.add_vertex(P::new(i as f64 + 1.0, 1.0)))
            .collect();
        assert_eq!(g.classify_vertex(c).unwrap(), VertexClass::Isolated);
        let expected = [
            VertexClass::Endpoint,
            VertexClass::Interior,
            VertexClass::Intersection,
            VertexClass::Intersection,
            VertexClass::Intersection,
        ];
        for (k, arm) in arms.iter().enumerate() {
            g.add_edge(c, *arm).unwrap();
            assert_eq!(g.classify_vertex(c).unwrap(), expected[k]);
        }
        assert_eq!(
            g.classify_vertex(VertexId(99)),
            Err(GraphError::UnknownVertex(VertexId(99)))
        );
    }

    #[test]
    fn snapping_rules() {
        let mut g = G::new();
        assert_eq!(g.snap_vertex(P::new(1.0, 1.0), 100.0), None);
        let v = g.add_vertex(P::new(10.0, 10.0));
        assert_eq!(g.snap_vertex(P::new(12.0, 10.0), 5.0), Some(v));
        assert_eq!(g.snap_vertex(P::new(16.0, 10.0), 5.0), None);
        // equidistant: (12, 8) has smaller y than (8, 12)
        let mut g = G::new();
        let lower = g.add_vertex(P::new(8.0, 12.0));
        let upper = g.add_vertex(P::new(12.0, 8.0));
        assert_ne!(lower, upper);
        assert_eq!(g.snap_vertex(P::new(10.0, 10.0), 5.0), Some(upper));
    }

    #[test]
    fn step_edges() {
        let mut g = G::new();
        let a = g.add_vertex(P::new(0.0, 0.0));
        let step = g.add_step_edge(a, P::new(40.0, 0.0), 5.0).unwrap();
        assert_eq!(step.kind, StepEdgeKind::NewVertex);
        assert_eq!(g.edge_count(), 1);

        let far = g.add_vertex(P::new(40.0, 40.0));
        let step2 = g
            .add_step_edge(step.vertex, P::new(41.0, 38.0), 5.0)
            .unwrap();
        assert_eq!(
            step2,
            StepEdge {
                vertex: far,
                kind: StepEdgeKind::Snapped
            }
        );
        assert_eq!(g.vertex_count(), 3);

        let before = g.clone();
        let selfsnap = g.add_step_edge(a, P::new(3.0, 0.0), 10.0).unwrap();
        assert_eq!(selfsnap.kind, StepEdgeKind::SelfSnap);
        assert!(selfsnap.kind.is_warning());
        assert_eq!(g, before);

        let dup = g.add_step_edge(a, P::new(39.0, 0.0), 5.0).unwrap();
        assert_eq!(dup.kind, StepEdgeKind::DuplicateEdge);
        assert_eq!(g, before);
        g.validate().unwrap();
    }

    #[test]
    fn rejects_bad_edges() {
        let mut g = G::new();
        let a = g.add_vertex(P::new(0.0, 0.0));
        let b = g.add_vertex(P::new(1.0, 0.0));
        assert_eq!(g.add_edge(a, a), Err(GraphError::SelfLoop(a)));
        g.add_edge(a, b).unwrap();
        assert_eq!(g.add_edge(b, a), Err(GraphError::DuplicateEdge(b, a)));
        assert_eq!(
            g.add_edge_polyline(a, VertexId(7), vec![]),
            Err(GraphError::UnknownVertex(VertexId(7)))
        );
        let c = g.add_vertex(P::new(5.0, 5.0));
        assert_eq!(
            g.add_edge_polyline(a, c, vec![P::new(0.0, 0.0), P::new(5.0, 6.0)]),
            Err(GraphError::PolylineMismatch(a, c))
        );
    }

    #[test]
    fn polyline_orientation_follows_request() {
        let mut g = G::new();
        let a = g.add_vertex(P::new(0.0, 0.0));
        let b = g.add_vertex(P::new(10.0, 0.0));
        g.add_edge_polyline(
            b,
            a,
            vec![P::new(10.0, 0.0), P::new(5.0, 2.0), P::new(0.0, 0.0)],
        )
        .unwrap();
        assert_eq!(g.polyline(a, b).unwrap()[1], P::new(5.0, 2.0));
        assert_eq!(g.polyline(b, a).unwrap()[0], P::new(10.0, 0.0));
    }
}
