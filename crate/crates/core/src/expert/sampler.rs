use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    run_detection_with_maps, seed_initial_vertices, Agent, DetectionResult, EngineConfig,
    EngineError, ExpertPolicy, Policy, PolicyRequest,
};
use crate::expert::{ExpertConfig, ExpertError, LabelMode};
use crate::geometry::Point2;
use crate::graph::RoadGraph;
use crate::imaging::{crop_roi, RoiSpec, Tile};
use crate::scalar::Scalar;

/// One expert demonstration step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample<T> {
    pub step: usize,
    pub center: Point2<T>,
    pub mode: LabelMode,
    /// Label vertices as offsets from the ROI center.
    pub labels: Vec<Point2<T>>,
    pub roi_rgb: Tile<T>,
    /// History raster before the step.
    pub history: Tile<T>,
    pub road: Tile<T>,
    pub intersection: Tile<T>,
    pub rotation_deg: f64,
    pub corrected: bool,
}

/// Rotates every crop of a sample about the ROI center by `angle_deg`
/// (nearest-neighbour resampling) together with its label offsets.
pub fn rotate_sample<T: Scalar>(s: &TrainingSample<T>, angle_deg: f64) -> TrainingSample<T> {
    let theta = T::lit(angle_deg.to_radians());
    let rot = |t: &Tile<T>| rotate_tile(t, -theta);
    TrainingSample {
        labels: s.labels.iter().map(|p| p.rotate(theta)).collect(),
        roi_rgb: rot(&s.roi_rgb),
        history: rot(&s.history),
        road: rot(&s.road),
        intersection: rot(&s.intersection),
        rotation_deg: s.rotation_deg + angle_deg,
        ..s.clone()
    }
}

/// Output pixel at offset `q` from the center samples the source at
/// `q.rotate(inverse)`.
fn rotate_tile<T: Scalar>(t: &Tile<T>, inverse: T) -> Tile<T> {
    let (w, h) = (t.width(), t.height());
    let c = Point2::new(T::from_usize_lossy(w / 2), T::from_usize_lossy(h / 2));
    let mut out = Tile::zeros(w, h, t.channels());
    for j in 0..h {
        for i in 0..w {
            let q = Point2::new(T::from_usize_lossy(i), T::from_usize_lossy(j)) - c;
            let (sx, sy) = (c + q.rotate(inverse)).pixel();
            for ch in 0..t.channels() {
                out.set(i, j, ch, t.get_or_zero(sx, sy, ch));
            }
        }
    }
    out
}

/// Streams training samples by driving the agent with the expert as its
/// policy. Deterministic for a given seed.
pub struct TrainingSampler<'a, T> {
    image: &'a Tile<T>,
    road: &'a Tile<T>,
    intersection: &'a Tile<T>,
    agent: Agent<T>,
    policy: ExpertPolicy<T>,
    expert_cfg: ExpertConfig,
    rng: ChaCha8Rng,
    step: usize,
}

impl<T: Scalar> TrainingSampler<'_, T> {
    pub fn policy(&self) -> &ExpertPolicy<T> {
        &self.policy
    }

    pub fn agent(&self) -> &Agent<T> {
        &self.agent
    }
}

impl<T: Scalar> Iterator for TrainingSampler<'_, T> {
    type Item = TrainingSample<T>;

    fn next(&mut self) -> Option<TrainingSample<T>> {
        let center = self.agent.next_center()?;
        let cfg = self.agent.config();
        let spec = RoiSpec::new(center, cfg.roi_side).expect("validated roi side");
        let req = PolicyRequest {
            center,
            roi_side: cfg.roi_side,
            history_stroke: cfg.history_stroke,
            image: Some(self.image),
            history: self.agent.history(),
        };
        let history = req.history_raster();
        let roi_rgb = req.roi_rgb();
        let resp = self
            .policy
            .predict(&req)
            .expect("expert policy never fails");
        let (mode, labels, corrected) = match self.policy.last() {
            Some((label, exec)) => (
                label.mode,
                label.vertices.iter().map(|v| *v - center).collect(),
                exec.corrected,
            ),
            None => (LabelMode::RoadSegment, Vec::new(), false),
        };
        self.agent.apply(&resp.predictions);
        let sample = TrainingSample {
            step: self.step,
            center,
            mode,
            labels,
            roi_rgb,
            history,
            road: crop_roi(self.road, &spec),
            intersection: crop_roi(self.intersection, &spec),
            rotation_deg: 0.0,
            corrected,
        };
        self.step += 1;
        if self.expert_cfg.rotate_augment {
            let quarter = self.rng.random_range(0..4u32) as f64 * 90.0;
            let jitter = self.expert_cfg.rotate_jitter_deg;
            let extra = if jitter > 0.0 {
                self.rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            Some(rotate_sample(&sample, quarter + extra))
        } else {
            Some(sample)
        }
    }
}

/// Sampler over one tile. Seeds come from the intersection mask peaks.
pub fn sample_training_set<'a, T: Scalar>(
    gt: &RoadGraph<T>,
    image: &'a Tile<T>,
    masks: (&'a Tile<T>, &'a Tile<T>),
    cfg: &ExpertConfig,
    engine_cfg: &EngineConfig,
    seed: u64,
) -> Result<TrainingSampler<'a, T>, SampleError> {
    engine_cfg.validate()?;
    let mut policy = ExpertPolicy::new(gt, cfg.clone(), seed)?;
    let seeds = seed_initial_vertices(masks.1, engine_cfg);
    policy.observe_seeds(&seeds);
    let bounds = Some((image.width(), image.height()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    Ok(TrainingSampler {
        image,
        road: masks.0,
        intersection: masks.1,
        agent: Agent::new(seeds, engine_cfg.clone(), bounds),
        policy,
        expert_cfg: cfg.clone(),
        rng,
        step: 0,
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Result of a full expert-driven exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome<T> {
    pub detection: DetectionResult<T>,
    /// Fraction of ground-truth arclength marked explored.
    pub coverage: f64,
    pub corrections: usize,
    pub labels: usize,
}

/// Runs the agent with the (possibly noisy) expert policy to completion.
pub fn replay_exploration<T: Scalar>(
    gt: &RoadGraph<T>,
    intersection_map: &Tile<T>,
    cfg: &ExpertConfig,
    engine_cfg: &EngineConfig,
    seed: u64,
) -> Result<ReplayOutcome<T>, SampleError> {
    let mut policy = ExpertPolicy::new(gt, cfg.clone(), seed)?;
    let detection = run_detection_with_maps(None, intersection_map, &mut policy, engine_cfg)?;
    let d = policy.driver();
    Ok(ReplayOutcome {
        detection,
        coverage: d.coverage().as_f64(),
        corrections: d.corrections(),
        labels: d.labels_emitted(),
    })
}
