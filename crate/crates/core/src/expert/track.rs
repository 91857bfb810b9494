use std::collections::BTreeMap;

use crate::geometry::{
    cumulative_lengths, point_at_arclength, project_on_polyline, turning_angle_deg, Point2,
};
use crate::graph::{RoadGraph, VertexId};
use crate::scalar::Scalar;

/// One road segment of the simplified ground truth: an edge with its
/// polyline oriented from `lo` to `hi`.
#[derive(Debug, Clone)]
pub struct Segment<T> {
    pub lo: VertexId,
    pub hi: VertexId,
    pub poly: Vec<Point2<T>>,
    pub cum: Vec<T>,
    pub length: T,
    /// Arclengths (from `lo`) of polyline points turning by at least the
    /// configured angle.
    pub turns: Vec<T>,
}

impl<T: Scalar> Segment<T> {
    pub fn point_at(&self, s: T) -> Point2<T> {
        point_at_arclength(&self.poly, &self.cum, s)
    }

    /// Arclength of the given end vertex.
    pub fn end_arc(&self, at_lo: bool) -> T {
        if at_lo {
            T::zero()
        } else {
            self.length
        }
    }
}

/// Ground truth prepared for the expert: simplified graph, segments and
/// per-vertex incidence.
#[derive(Debug, Clone)]
pub struct Track<T> {
    pub graph: RoadGraph<T>,
    pub segments: Vec<Segment<T>>,
    /// For each vertex: (segment index, whether the vertex is the segment's lo end).
    pub incident: BTreeMap<VertexId, Vec<(usize, bool)>>,
}

impl<T: Scalar> Track<T> {
    pub fn new(gt: &RoadGraph<T>, curvature_angle_deg: T) -> Self {
        let graph = gt.simplified();
        let mut segments = Vec::new();
        let mut incident: BTreeMap<VertexId, Vec<(usize, bool)>> = BTreeMap::new();
        for (lo, hi, poly) in graph.edges() {
            let poly = poly.to_vec();
            let cum = cumulative_lengths(&poly);
            let length = *cum.last().unwrap();
            let turns = (1..poly.len().saturating_sub(1))
                .filter(|&i| turning_angle_deg(&poly, i) >= curvature_angle_deg)
                .map(|i| cum[i])
                .collect();
            let k = segments.len();
            incident.entry(lo).or_default().push((k, true));
            incident.entry(hi).or_default().push((k, false));
            segments.push(Segment {
                lo,
                hi,
                poly,
                cum,
                length,
                turns,
            });
        }
        Self {
            graph,
            segments,
            incident,
        }
    }

    pub fn total_length(&self) -> T {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Nearest vertex with at least one incident segment, within `tol`.
    pub fn vertex_near(&self, p: Point2<T>, tol: T) -> Option<VertexId> {
        self.incident
            .keys()
            .map(|&v| (v, self.graph.position(v).unwrap()))
            .filter(|(_, q)| q.dist(p) <= tol)
            .min_by(|(a, qa), (b, qb)| {
                qa.dist_sq(p)
                    .partial_cmp(&qb.dist_sq(p))
                    .unwrap()
                    .then_with(|| qa.cmp_yx(qb))
                    .then(a.cmp(b))
            })
            .map(|(v, _)| v)
    }

    /// Nearest segment point: (distance, segment index, arclength).
    pub fn project(&self, p: Point2<T>) -> Option<(T, usize, T)> {
        let mut best: Option<(T, usize, T)> = None;
        for (k, seg) in self.segments.iter().enumerate() {
            let (d, s, _) = project_on_polyline(p, &seg.poly, &seg.cum);
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, k, s));
            }
        }
        best
    }

    pub fn distance_to(&self, p: Point2<T>) -> T {
        self.project(p).map_or(T::infinity(), |(d, _, _)| d)
    }
}
