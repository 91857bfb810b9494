use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::policy::{
    Policy, PolicyError, PolicyRequest, SegmentationProvider, VertexPrediction,
};
use crate::geometry::Point2;
use crate::graph::{RoadGraph, StepEdgeKind, VertexId};
use crate::imaging::{extract_peaks, Tile};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub roi_side: usize,
    /// Predictions below this probability are dropped.
    pub prob_threshold: f64,
    /// Snapping radius for loop closure and duplicate suppression.
    pub eps_merge: f64,
    pub max_steps_per_probe: usize,
    pub max_steps_total: usize,
    pub peak_threshold: f64,
    pub nms_radius: f64,
    pub n_queries: usize,
    pub history_stroke: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            roi_side: 256,
            prob_threshold: 0.5,
            eps_merge: 5.0,
            max_steps_per_probe: 5000,
            max_steps_total: 200_000,
            peak_threshold: 0.5,
            nms_radius: 8.0,
            n_queries: 10,
            history_stroke: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("segmentation failed: {0}")]
    Segmentation(PolicyError),
    #[error("map is {0}x{1} but the image is {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        if self.roi_side < 64 || self.roi_side % 2 != 0 {
            return bad("roi_side must be even and at least 64");
        }
        if !(0.0..=1.0).contains(&self.prob_threshold)
            || !(0.0..=1.0).contains(&self.peak_threshold)
        {
            return bad("thresholds must lie in [0, 1]");
        }
        if !(self.eps_merge.is_finite() && self.eps_merge >= 0.0) {
            return bad("eps_merge must be finite and non-negative");
        }
        if !(self.nms_radius.is_finite() && self.nms_radius >= 1.0) {
            return bad("nms_radius must be at least 1");
        }
        if self.max_steps_per_probe == 0
            || self.max_steps_total == 0
            || self.n_queries == 0
            || self.history_stroke == 0
        {
            return bad("step guards, n_queries and history_stroke must be positive");
        }
        Ok(())
    }
}

/// What one agent step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// No usable prediction (or only degenerate ones): the probe ends.
    StopProbe,
    /// Moved along a new edge. `closed_loop` is set when the target snapped
    /// onto an existing vertex, which also ends the probe.
    Move { to: VertexId, closed_loop: bool },
    /// Several valid predictions: edges to all of them, new vertices pushed
    /// on the stack, probe ends.
    Branch {
        created: Vec<VertexId>,
        snapped: Vec<VertexId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<T> {
    pub current: Option<VertexId>,
    /// Candidate initial vertices; the last entry pops first.
    pub stack: Vec<Point2<T>>,
    pub history: RoadGraph<T>,
    pub steps_total: usize,
    pub steps_on_current_probe: usize,
}

impl<T: Scalar> AgentState<T> {
    pub fn new(stack: Vec<Point2<T>>) -> Self {
        Self {
            current: None,
            stack,
            history: RoadGraph::new(),
            steps_total: 0,
            steps_on_current_probe: 0,
        }
    }

    pub fn current_position(&self) -> Option<Point2<T>> {
        self.current.and_then(|v| self.history.position(v))
    }
}

/// Candidate initial vertices from the intersection map, ordered so the
/// most confident peak is on top of the stack.
pub fn seed_initial_vertices<T: Scalar>(
    intersection_map: &Tile<T>,
    cfg: &EngineConfig,
) -> Vec<Point2<T>> {
    let mut peaks = extract_peaks(
        intersection_map,
        T::lit(cfg.peak_threshold),
        T::lit(cfg.nms_radius),
    );
    peaks.reverse();
    peaks.into_iter().map(|p| p.position).collect()
}

/// Absolute positions of the usable predictions: probability at least the
/// threshold, inside `bounds` when given, and farther than `eps_merge` from
/// every more probable kept prediction.
pub fn valid_predictions<T: Scalar>(
    center: Point2<T>,
    preds: &[VertexPrediction<T>],
    cfg: &EngineConfig,
    bounds: Option<(usize, usize)>,
) -> Vec<Point2<T>> {
    let thr = T::lit(cfg.prob_threshold);
    let eps = T::lit(cfg.eps_merge);
    let mut cands: Vec<(T, Point2<T>)> = preds
        .iter()
        .filter(|p| p.prob >= thr)
        .map(|p| (p.prob, center + p.offset))
        .filter(|(_, q)| match bounds {
            Some((w, h)) => {
                q.x >= T::zero()
                    && q.y >= T::zero()
                    && q.x < T::from_usize_lossy(w)
                    && q.y < T::from_usize_lossy(h)
            }
            None => true,
        })
        .collect();
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut kept: Vec<Point2<T>> = Vec::new();
    for (_, q) in cands {
        if kept.iter().all(|k| k.dist(q) > eps) {
            kept.push(q);
        }
    }
    kept
}

/// One agent step on already validated predictions.
pub fn step<T: Scalar>(
    state: &mut AgentState<T>,
    preds: &[VertexPrediction<T>],
    cfg: &EngineConfig,
    bounds: Option<(usize, usize)>,
) -> Action {
    let cur = state.current.expect("step needs a current vertex");
    let center = state.history.position(cur).expect("current vertex exists");
    let eps = T::lit(cfg.eps_merge);
    let valid = valid_predictions(center, preds, cfg, bounds);
    match valid.len() {
        0 => Action::StopProbe,
        1 => {
            let r = state
                .history
                .add_step_edge(cur, valid[0], eps)
                .expect("current vertex exists");
            match r.kind {
                StepEdgeKind::NewVertex => {
                    state.current = Some(r.vertex);
                    Action::Move {
                        to: r.vertex,
                        closed_loop: false,
                    }
                }
                StepEdgeKind::Snapped => {
                    state.current = Some(r.vertex);
                    Action::Move {
                        to: r.vertex,
                        closed_loop: true,
                    }
                }
                StepEdgeKind::SelfSnap | StepEdgeKind::DuplicateEdge => {
                    log::debug!("move from {cur} degenerated ({:?}); stopping probe", r.kind);
                    Action::StopProbe
                }
            }
        }
        _ => {
            let mut created = Vec::new();
            let mut snapped = Vec::new();
            for q in valid {
                let r = state
                    .history
                    .add_step_edge(cur, q, eps)
                    .expect("current vertex exists");
                match r.kind {
                    StepEdgeKind::NewVertex => created.push(r.vertex),
                    StepEdgeKind::Snapped => snapped.push(r.vertex),
                    _ => {}
                }
            }
            for v in &created {
                state.stack.push(state.history.position(*v).unwrap());
            }
            Action::Branch { created, snapped }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult<T> {
    /// Simplified final graph.
    pub graph: RoadGraph<T>,
    /// The history graph as built, before simplification.
    pub history: RoadGraph<T>,
    pub truncated: bool,
    pub steps: usize,
    pub probes: usize,
    pub policy_errors: usize,
    pub seeds: usize,
}

/// The iterative agent: pops candidate vertices, queries the policy at the
/// current vertex and applies the resulting actions.
#[derive(Debug, Clone)]
pub struct Agent<T> {
    cfg: EngineConfig,
    state: AgentState<T>,
    bounds: Option<(usize, usize)>,
    seed_vertex: Option<VertexId>,
    truncated: bool,
    finished: bool,
    probes: usize,
    policy_errors: usize,
    seeds: usize,
}

impl<T: Scalar> Agent<T> {
    /// `seeds` in stack order (last pops first). Positions outside `bounds`
    /// are dropped.
    pub fn new(seeds: Vec<Point2<T>>, cfg: EngineConfig, bounds: Option<(usize, usize)>) -> Self {
        let seeds: Vec<Point2<T>> = seeds
            .into_iter()
            .filter(|p| match bounds {
                Some((w, h)) => {
                    p.is_finite()
                        && p.x >= T::zero()
                        && p.y >= T::zero()
                        && p.x < T::from_usize_lossy(w)
                        && p.y < T::from_usize_lossy(h)
                }
                None => p.is_finite(),
            })
            .collect();
        let n = seeds.len();
        Self {
            cfg,
            state: AgentState::new(seeds),
            bounds,
            seed_vertex: None,
            truncated: false,
            finished: false,
            probes: 0,
            policy_errors: 0,
            seeds: n,
        }
    }

    pub fn state(&self) -> &AgentState<T> {
        &self.state
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn history(&self) -> &RoadGraph<T> {
        &self.state.history
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Position where the policy must be queried next, starting a new probe
    /// from the stack when needed. `None` once the stack is exhausted or the
    /// total step guard fired.
    pub fn next_center(&mut self) -> Option<Point2<T>> {
        if self.finished {
            return None;
        }
        if self.state.steps_total >= self.cfg.max_steps_total {
            log::warn!(
                "total step guard reached after {} steps",
                self.state.steps_total
            );
            self.truncated = true;
            self.end_probe();
            self.finished = true;
            return None;
        }
        if self.state.current.is_none() {
            let p = match self.state.stack.pop() {
                Some(p) => p,
                None => {
                    self.finished = true;
                    return None;
                }
            };
            let g = &mut self.state.history;
            let v = match g.snap_vertex(p, T::lit(self.cfg.eps_merge)) {
                Some(v) => v,
                None => {
                    let v = g.add_vertex(p);
                    self.seed_vertex = Some(v);
                    v
                }
            };
            self.state.current = Some(v);
            self.state.steps_on_current_probe = 0;
            self.probes += 1;
        }
        self.state.current_position()
    }

    /// Applies validated predictions at the current vertex.
    pub fn apply(&mut self, preds: &[VertexPrediction<T>]) -> Action {
        self.state.steps_total += 1;
        self.state.steps_on_current_probe += 1;
        let action = step(&mut self.state, preds, &self.cfg, self.bounds);
        let continues = matches!(
            action,
            Action::Move {
                closed_loop: false,
                ..
            }
        );
        if !continues {
            self.end_probe();
        } else if self.state.steps_on_current_probe >= self.cfg.max_steps_per_probe {
            log::warn!("probe step guard reached");
            self.truncated = true;
            self.end_probe();
        }
        action
    }

    /// Ends the current probe after a policy failure and flags truncation.
    pub fn abort_probe(&mut self, err: &PolicyError) {
        log::warn!("policy error, ending probe: {err}");
        self.state.steps_total += 1;
        self.policy_errors += 1;
        self.truncated = true;
        self.end_probe();
    }

    fn end_probe(&mut self) {
        if let Some(v) = self.seed_vertex.take() {
            if self.state.history.degree(v) == 0 {
                self.state.history.remove_vertex(v);
            }
        }
        self.state.current = None;
    }

    pub fn finish(self) -> DetectionResult<T> {
        DetectionResult {
            graph: self.state.history.simplified(),
            history: self.state.history,
            truncated: self.truncated,
            steps: self.state.steps_total,
            probes: self.probes,
            policy_errors: self.policy_errors,
            seeds: self.seeds,
        }
    }
}

/// Runs the agent to completion from the peaks of `intersection_map`.
/// `image` only feeds the ROI crops given to the policy; the tile bounds come
/// from the map.
pub fn run_detection_with_maps<T: Scalar, P: Policy<T> + ?Sized>(
    image: Option<&Tile<T>>,
    intersection_map: &Tile<T>,
    policy: &mut P,
    cfg: &EngineConfig,
) -> Result<DetectionResult<T>, EngineError> {
    cfg.validate()?;
    if let Some(img) = image {
        if (img.width(), img.height()) != (intersection_map.width(), intersection_map.height()) {
            return Err(EngineError::ShapeMismatch(
                intersection_map.width(),
                intersection_map.height(),
                img.width(),
                img.height(),
            ));
        }
    }
    let seeds = seed_initial_vertices(intersection_map, cfg);
    policy.observe_seeds(&seeds);
    let bounds = Some((intersection_map.width(), intersection_map.height()));
    let mut agent = Agent::new(seeds, cfg.clone(), bounds);
    while let Some(center) = agent.next_center() {
        let req = PolicyRequest {
            center,
            roi_side: cfg.roi_side,
            history_stroke: cfg.history_stroke,
            image,
            history: agent.history(),
        };
        let resp = policy
            .predict(&req)
            .and_then(|r| r.validate(cfg.n_queries, cfg.roi_side).map(|_| r));
        match resp {
            Ok(r) => {
                agent.apply(&r.predictions);
            }
            Err(e) => agent.abort_probe(&e),
        }
    }
    Ok(agent.finish())
}

/// Full detection: segmentation maps from `seg`, then the agent loop.
pub fn run_detection<T: Scalar, P: Policy<T> + ?Sized, S: SegmentationProvider<T> + ?Sized>(
    image: &Tile<T>,
    policy: &mut P,
    seg: &mut S,
    cfg: &EngineConfig,
) -> Result<DetectionResult<T>, EngineError> {
    cfg.validate()?;
    let maps = seg.segment(image).map_err(EngineError::Segmentation)?;
    run_detection_with_maps(Some(image), &maps.intersection, policy, cfg)
}
