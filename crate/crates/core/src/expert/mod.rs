//! Ground-truth expert: label vertex sets for the agent, force correction,
//! and supervised exploration that streams training samples.

mod driver;
mod sampler;
mod state;
mod track;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::graph::{RoadGraph, VertexId};
use crate::matchloss::match_vertices;
use crate::scalar::Scalar;

pub use driver::{Execution, ExplorationDriver};
pub use sampler::{
    replay_exploration, rotate_sample, sample_training_set, ReplayOutcome, SampleError,
    TrainingSample, TrainingSampler,
};
pub use state::{Context, Direction, ExplorationState, Start};
pub use track::{Segment, Track};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    /// Step length along a road segment.
    pub tau: f64,
    /// Step length when leaving an intersection.
    pub tau_prime: f64,
    /// Force-correction threshold.
    pub xi: f64,
    /// Minimum direction change that makes a polyline point a turning point.
    pub curvature_angle_deg: f64,
    /// Per-axis standard deviation of the positional noise on executed moves.
    pub noise_sigma: f64,
    pub force_correction: bool,
    pub rotate_augment: bool,
    /// Half-width of the continuous rotation added to the right-angle turn.
    pub rotate_jitter_deg: f64,
    /// Steps never leave a gap shorter than this before the next stop.
    pub min_step: f64,
    /// Distance within which a position counts as being at a vertex.
    pub vertex_tolerance: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            tau: 40.0,
            tau_prime: 20.0,
            xi: 20.0,
            curvature_angle_deg: 30.0,
            noise_sigma: 3.0,
            force_correction: true,
            rotate_augment: false,
            rotate_jitter_deg: 15.0,
            min_step: 6.0,
            vertex_tolerance: 3.0,
        }
    }
}

impl ExpertConfig {
    /// Defaults with noise switched off.
    pub fn noiseless() -> Self {
        Self {
            noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ExpertError> {
        let bad = |m: &str| Err(ExpertError::InvalidConfig(m.to_string()));
        let finite = [
            self.tau,
            self.tau_prime,
            self.xi,
            self.curvature_angle_deg,
            self.noise_sigma,
            self.rotate_jitter_deg,
            self.min_step,
            self.vertex_tolerance,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("all values must be finite");
        }
        if !(self.tau > self.tau_prime && self.tau_prime > 0.0) {
            return bad("need tau > tau_prime > 0");
        }
        if self.xi <= 0.0 {
            return bad("xi must be positive");
        }
        if !(self.curvature_angle_deg > 0.0 && self.curvature_angle_deg < 180.0) {
            return bad("curvature_angle_deg must lie in (0, 180)");
        }
        if self.noise_sigma < 0.0 || self.rotate_jitter_deg < 0.0 || self.vertex_tolerance < 0.0 {
            return bad("noise_sigma, rotate_jitter_deg and vertex_tolerance must be non-negative");
        }
        if !(self.min_step > 0.0 && self.min_step < self.tau_prime) {
            return bad("need 0 < min_step < tau_prime");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpertError {
    #[error("position is {distance:.2} px from the ground truth, beyond xi; force correction should have fired")]
    OffTrack { distance: f64 },
    #[error("invalid expert config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    RoadSegment,
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetKind {
    /// Intermediate stop on a segment.
    Step,
    /// Stop at a candidate initial vertex lying on the segment.
    Seed(usize),
    /// First arrival at a ground-truth vertex.
    Vertex(VertexId),
    /// Joins already executed geometry; `connect_to` holds the point to join.
    Closure,
}

/// One label vertex with the bookkeeping needed to commit it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelTarget<T> {
    /// Label position on the ground-truth geometry.
    pub point: Point2<T>,
    pub segment: usize,
    pub direction: Direction,
    /// Arclength span (from the segment's lo end) covered by this step.
    pub from_arc: T,
    pub to_arc: T,
    pub kind: TargetKind,
    /// Executed position to join exactly, for closures.
    pub connect_to: Option<Point2<T>>,
}

impl<T: Scalar> LabelTarget<T> {
    pub fn is_closure(&self) -> bool {
        matches!(self.kind, TargetKind::Closure)
    }
}

/// The label vertex set for one agent position.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertLabel<T> {
    pub mode: LabelMode,
    pub vertices: Vec<Point2<T>>,
    pub matched_segment_ids: Vec<usize>,
    pub targets: Vec<LabelTarget<T>>,
    pub start: Start<T>,
}

impl<T: Scalar> ExpertLabel<T> {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Labels for an agent at `v_t`, given ground truth and exploration state.
pub fn expert_next<T: Scalar>(
    track: &Track<T>,
    state: &ExplorationState<T>,
    v_t: Point2<T>,
    cfg: &ExpertConfig,
) -> Result<ExpertLabel<T>, ExpertError> {
    let start = state.locate(track, v_t, cfg)?;
    Ok(state.plan(track, start, cfg))
}

/// Chooses which vertices update the agent: the predictions, or the labels
/// when any matched pair is farther apart than `xi` or the set sizes differ.
/// Returns the chosen points and whether a correction happened.
pub fn force_correct<T: Scalar>(
    pred: &[Point2<T>],
    label: &[Point2<T>],
    xi: T,
) -> (Vec<Point2<T>>, bool) {
    if pred.len() != label.len() {
        return (label.to_vec(), true);
    }
    let a = match_vertices(pred, label);
    if a.pairs.iter().any(|(p, l)| pred[*p].dist(label[*l]) > xi) {
        (label.to_vec(), true)
    } else {
        (pred.to_vec(), false)
    }
}

/// Convenience: builds the track of a ground-truth graph with the
/// configured turning-point angle.
pub fn prepare_track<T: Scalar>(gt: &RoadGraph<T>, cfg: &ExpertConfig) -> Track<T> {
    Track::new(gt, T::lit(cfg.curvature_angle_deg))
}
