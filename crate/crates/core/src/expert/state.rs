use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::expert::track::Track;
use crate::expert::{ExpertConfig, ExpertError, ExpertLabel, LabelMode, LabelTarget, TargetKind};
use crate::geometry::Point2;
use crate::graph::VertexId;
use crate::scalar::Scalar;

/// Arclength tolerance for touching intervals and frontier lookups.
const ARC_EPS: f64 = 1e-4;
/// Positions within this distance of a recorded executed point resume its context.
const RESUME_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Towards increasing arclength (lo to hi).
    Up,
    Down,
}

impl Direction {
    fn sign<T: Scalar>(self) -> T {
        match self {
            Direction::Up => T::one(),
            Direction::Down => -T::one(),
        }
    }
}

/// What the agent is doing at an executed position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Context<T> {
    AtVertex(VertexId),
    Walk {
        segment: usize,
        arc: T,
        direction: Direction,
    },
}

/// Where a label computation starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Start<T> {
    /// Resuming a recorded context at `center`.
    Resume {
        center: Point2<T>,
        context: Context<T>,
    },
    /// At a ground-truth vertex reached for the first time by this request.
    Vertex { center: Point2<T>, vertex: VertexId },
    /// Somewhere on a segment interior with no recorded context.
    OnSegment {
        center: Point2<T>,
        segment: usize,
        arc: T,
    },
}

impl<T: Scalar> Start<T> {
    pub fn center(&self) -> Point2<T> {
        match *self {
            Start::Resume { center, .. }
            | Start::Vertex { center, .. }
            | Start::OnSegment { center, .. } => center,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Interval<T> {
    lo: T,
    hi: T,
    /// Executed positions at the two ends, when known.
    lo_at: Option<Point2<T>>,
    hi_at: Option<Point2<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct SeedMark<T> {
    segment: usize,
    arc: T,
    consumed: bool,
}

/// Exploration progress of the expert over a track.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationState<T> {
    explored: Vec<Vec<Interval<T>>>,
    anchors: BTreeMap<VertexId, Point2<T>>,
    contexts: Vec<(Point2<T>, Context<T>)>,
    seeds: Vec<SeedMark<T>>,
}

/// A fresh walk along a segment with its extent.
struct Walk<T> {
    segment: usize,
    from: T,
    direction: Direction,
    /// Arclength where the walk must end.
    end: T,
}

impl<T: Scalar> ExplorationState<T> {
    pub fn new(track: &Track<T>) -> Self {
        Self {
            explored: vec![Vec::new(); track.segments.len()],
            anchors: BTreeMap::new(),
            contexts: Vec::new(),
            seeds: Vec::new(),
        }
    }

    /// Records candidate initial vertices lying on segment interiors; only
    /// those can become case (c) stops.
    pub fn observe_seeds(&mut self, track: &Track<T>, seeds: &[Point2<T>], cfg: &ExpertConfig) {
        let tol = T::lit(cfg.vertex_tolerance);
        for &p in seeds {
            if track.vertex_near(p, tol).is_some() {
                continue;
            }
            if let Some((d, segment, arc)) = track.project(p) {
                if d <= tol && !self.is_explored(segment, arc) {
                    self.seeds.push(SeedMark {
                        segment,
                        arc,
                        consumed: false,
                    });
                }
            }
        }
    }

    /// Explored arclength of one segment.
    pub fn explored_length(&self, segment: usize) -> T {
        self.explored[segment].iter().map(|i| i.hi - i.lo).sum()
    }

    /// Fraction of the total ground-truth arclength explored.
    pub fn coverage(&self, track: &Track<T>) -> T {
        let total = track.total_length();
        if total <= T::zero() {
            return T::one();
        }
        let done: T = (0..self.explored.len())
            .map(|k| self.explored_length(k))
            .sum();
        done / total
    }

    pub fn is_complete(&self, track: &Track<T>) -> bool {
        let eps = T::lit(ARC_EPS);
        track
            .segments
            .iter()
            .enumerate()
            .all(|(k, s)| self.explored_length(k) >= s.length - eps)
    }

    /// Executed position of a visited vertex.
    pub fn anchor(&self, v: VertexId) -> Option<Point2<T>> {
        self.anchors.get(&v).copied()
    }

    fn is_explored(&self, segment: usize, arc: T) -> bool {
        let eps = T::lit(ARC_EPS);
        self.explored[segment]
            .iter()
            .any(|i| arc >= i.lo - eps && arc <= i.hi + eps)
    }

    /// Finds where `v_t` stands: a recorded context, a vertex, or a segment
    /// point within `xi`.
    pub fn locate(
        &self,
        track: &Track<T>,
        v_t: Point2<T>,
        cfg: &ExpertConfig,
    ) -> Result<Start<T>, ExpertError> {
        let resume = T::lit(RESUME_EPS);
        if let Some((_, context)) = self
            .contexts
            .iter()
            .rev()
            .find(|(p, _)| p.dist(v_t) <= resume)
        {
            return Ok(Start::Resume {
                center: v_t,
                context: *context,
            });
        }
        if let Some(vertex) = track.vertex_near(v_t, T::lit(cfg.vertex_tolerance)) {
            return Ok(Start::Vertex {
                center: v_t,
                vertex,
            });
        }
        match track.project(v_t) {
            Some((d, segment, arc)) if d <= T::lit(cfg.xi) => Ok(Start::OnSegment {
                center: v_t,
                segment,
                arc,
            }),
            Some((d, _, _)) => Err(ExpertError::OffTrack {
                distance: d.as_f64(),
            }),
            None => Err(ExpertError::OffTrack {
                distance: f64::INFINITY,
            }),
        }
    }

    /// Label computation for a located start. Does not change the state.
    pub fn plan(&self, track: &Track<T>, start: Start<T>, cfg: &ExpertConfig) -> ExpertLabel<T> {
        let tau = T::lit(cfg.tau);
        let tau_prime = T::lit(cfg.tau_prime);
        let (mode, walks, step) = match start {
            Start::Resume {
                context:
                    Context::Walk {
                        segment,
                        arc,
                        direction,
                    },
                ..
            } => (
                LabelMode::RoadSegment,
                self.continue_walk(track, segment, arc, direction)
                    .into_iter()
                    .collect(),
                tau,
            ),
            Start::Resume {
                context: Context::AtVertex(vertex),
                ..
            }
            | Start::Vertex { vertex, .. } => {
                let walks = self.walks_from_vertex(track, vertex);
                if track.graph.degree(vertex) >= 3 {
                    (LabelMode::Intersection, walks, tau_prime)
                } else {
                    (
                        LabelMode::RoadSegment,
                        walks.into_iter().take(1).collect(),
                        tau,
                    )
                }
            }
            Start::OnSegment { segment, arc, .. } => (
                LabelMode::Intersection,
                self.walks_from_point(track, segment, arc),
                tau_prime,
            ),
        };
        let targets: Vec<LabelTarget<T>> = walks
            .iter()
            .map(|w| self.stop_for(track, w, step, cfg))
            .collect();
        ExpertLabel {
            mode,
            vertices: targets.iter().map(|t| t.point).collect(),
            matched_segment_ids: targets.iter().map(|t| t.segment).collect(),
            targets,
            start,
        }
    }

    /// The unexplored extent ahead of a frontier, or `None` when the
    /// frontier is stale.
    fn continue_walk(
        &self,
        track: &Track<T>,
        segment: usize,
        arc: T,
        direction: Direction,
    ) -> Option<Walk<T>> {
        let eps = T::lit(ARC_EPS);
        let ivs = &self.explored[segment];
        let at_frontier = ivs.iter().any(|i| match direction {
            Direction::Up => (i.hi - arc).abs() <= eps,
            Direction::Down => (i.lo - arc).abs() <= eps,
        });
        if !at_frontier {
            return None;
        }
        self.walk_extent(track, segment, arc, direction)
    }

    fn walk_extent(
        &self,
        track: &Track<T>,
        segment: usize,
        from: T,
        direction: Direction,
    ) -> Option<Walk<T>> {
        let eps = T::lit(ARC_EPS);
        let ivs = &self.explored[segment];
        let len = track.segments[segment].length;
        let end = match direction {
            Direction::Up => ivs
                .iter()
                .map(|i| i.lo)
                .filter(|lo| *lo > from + eps)
                .fold(len, T::min),
            Direction::Down => ivs
                .iter()
                .map(|i| i.hi)
                .filter(|hi| *hi < from - eps)
                .fold(T::zero(), T::max),
        };
        let ahead = (end - from) * direction.sign::<T>();
        if ahead <= eps {
            return None;
        }
        Some(Walk {
            segment,
            from,
            direction,
            end,
        })
    }

    fn walks_from_vertex(&self, track: &Track<T>, vertex: VertexId) -> Vec<Walk<T>> {
        let Some(inc) = track.incident.get(&vertex) else {
            return Vec::new();
        };
        inc.iter()
            .filter_map(|&(segment, at_lo)| {
                let seg = &track.segments[segment];
                let direction = if at_lo {
                    Direction::Up
                } else {
                    Direction::Down
                };
                // anything explored touching this end means the segment was
                // entered or reached from this side already
                if self.is_explored(segment, seg.end_arc(at_lo)) {
                    return None;
                }
                self.walk_extent(track, segment, seg.end_arc(at_lo), direction)
            })
            .collect()
    }

    fn walks_from_point(&self, track: &Track<T>, segment: usize, arc: T) -> Vec<Walk<T>> {
        if self.is_explored(segment, arc) {
            return Vec::new();
        }
        [Direction::Up, Direction::Down]
            .into_iter()
            .filter_map(|d| self.walk_extent(track, segment, arc, d))
            .collect()
    }

    /// Next stop of a walk with nominal step `step`.
    fn stop_for(
        &self,
        track: &Track<T>,
        w: &Walk<T>,
        step: T,
        cfg: &ExpertConfig,
    ) -> LabelTarget<T> {
        let seg = &track.segments[w.segment];
        let sign = w.direction.sign::<T>();
        let min_step = T::lit(cfg.min_step);
        let remaining = (w.end - w.from) * sign;
        let ahead = |a: T| (a - w.from) * sign;
        let usable = |a: T| ahead(a) >= min_step && remaining - ahead(a) >= min_step;

        // turning points (case b) and unconsumed candidate vertices (case c)
        let mut special: Option<(T, TargetKind)> = None;
        let turns = seg.turns.iter().map(|&a| (a, TargetKind::Step));
        let seeds = self
            .seeds
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.consumed && s.segment == w.segment)
            .map(|(i, s)| (s.arc, TargetKind::Seed(i)));
        for (a, kind) in turns.chain(seeds) {
            if usable(a) && ahead(a) <= step && special.is_none_or(|(b, _)| ahead(a) < ahead(b)) {
                special = Some((a, kind));
            }
        }

        let (to_arc, kind) = if let Some(s) = special {
            s
        } else if remaining <= step {
            (w.end, self.end_kind(track, w))
        } else if remaining - step < min_step {
            (w.from + sign * remaining / T::lit(2.0), TargetKind::Step)
        } else {
            (w.from + sign * step, TargetKind::Step)
        };
        let connect_to = match kind {
            TargetKind::Closure => self.closure_point(track, w),
            _ => None,
        };
        LabelTarget {
            point: seg.point_at(to_arc),
            segment: w.segment,
            direction: w.direction,
            from_arc: w.from,
            to_arc,
            kind,
            connect_to,
        }
    }

    fn end_kind(&self, track: &Track<T>, w: &Walk<T>) -> TargetKind {
        match self.terminal_vertex(track, w) {
            Some(v) if self.anchors.contains_key(&v) => TargetKind::Closure,
            Some(v) => TargetKind::Vertex(v),
            None => TargetKind::Closure,
        }
    }

    /// The segment end vertex a walk reaches, if it ends at one.
    fn terminal_vertex(&self, track: &Track<T>, w: &Walk<T>) -> Option<VertexId> {
        let seg = &track.segments[w.segment];
        let eps = T::lit(ARC_EPS);
        match w.direction {
            Direction::Up if (w.end - seg.length).abs() <= eps => Some(seg.hi),
            Direction::Down if w.end.abs() <= eps => Some(seg.lo),
            _ => None,
        }
    }

    fn closure_point(&self, track: &Track<T>, w: &Walk<T>) -> Option<Point2<T>> {
        if let Some(v) = self.terminal_vertex(track, w) {
            return self.anchors.get(&v).copied();
        }
        let eps = T::lit(ARC_EPS);
        self.explored[w.segment]
            .iter()
            .find_map(|i| match w.direction {
                Direction::Up if (i.lo - w.end).abs() <= eps => i.lo_at,
                Direction::Down if (i.hi - w.end).abs() <= eps => i.hi_at,
                _ => None,
            })
    }

    /// Applies an executed label: `executed[i]` is where target `i` was
    /// placed by the agent.
    pub fn commit(&mut self, track: &Track<T>, label: &ExpertLabel<T>, executed: &[Point2<T>]) {
        debug_assert_eq!(label.targets.len(), executed.len());
        let center = label.start.center();
        if let Start::Vertex { vertex, .. } = label.start {
            self.anchors.entry(vertex).or_insert(center);
        }
        if let Start::Resume {
            context: Context::AtVertex(vertex),
            ..
        } = label.start
        {
            self.anchors.entry(vertex).or_insert(center);
        }
        for (t, &at) in label.targets.iter().zip(executed) {
            let (lo, hi, lo_at, hi_at) = if t.from_arc <= t.to_arc {
                (t.from_arc, t.to_arc, Some(center), Some(at))
            } else {
                (t.to_arc, t.from_arc, Some(at), Some(center))
            };
            self.insert_interval(
                track,
                t.segment,
                Interval {
                    lo,
                    hi,
                    lo_at,
                    hi_at,
                },
            );
            match t.kind {
                TargetKind::Step => self.contexts.push((
                    at,
                    Context::Walk {
                        segment: t.segment,
                        arc: t.to_arc,
                        direction: t.direction,
                    },
                )),
                TargetKind::Seed(i) => {
                    self.seeds[i].consumed = true;
                    self.contexts.push((
                        at,
                        Context::Walk {
                            segment: t.segment,
                            arc: t.to_arc,
                            direction: t.direction,
                        },
                    ));
                }
                TargetKind::Vertex(v) => {
                    self.anchors.entry(v).or_insert(at);
                    self.contexts.push((at, Context::AtVertex(v)));
                }
                TargetKind::Closure => {}
            }
        }
    }

    fn insert_interval(&mut self, track: &Track<T>, segment: usize, iv: Interval<T>) {
        let eps = T::lit(ARC_EPS);
        let len = track.segments[segment].length;
        let mut iv = Interval {
            lo: iv.lo.max(T::zero()),
            hi: iv.hi.min(len),
            ..iv
        };
        let list = &mut self.explored[segment];
        let mut keep = Vec::with_capacity(list.len() + 1);
        for other in list.drain(..) {
            if other.hi < iv.lo - eps || other.lo > iv.hi + eps {
                keep.push(other);
                continue;
            }
            if other.lo < iv.lo {
                iv.lo = other.lo;
                iv.lo_at = other.lo_at;
            }
            if other.hi > iv.hi {
                iv.hi = other.hi;
                iv.hi_at = other.hi_at;
            }
        }
        keep.push(iv);
        keep.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        *list = keep;
    }
}
