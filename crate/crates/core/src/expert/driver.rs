use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::expert::state::ExplorationState;
use crate::expert::track::Track;
use crate::expert::{
    expert_next, force_correct, prepare_track, ExpertConfig, ExpertError, ExpertLabel,
};
use crate::geometry::Point2;
use crate::graph::RoadGraph;
use crate::scalar::Scalar;

/// Where the agent is told to place each label target.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution<T> {
    pub points: Vec<Point2<T>>,
    /// Set when force correction replaced the noisy moves by the labels.
    pub corrected: bool,
}

/// Runs the expert against a ground truth with simulated execution noise:
/// labels are perturbed by per-axis Gaussian noise, force corrected when
/// enabled, and committed to the exploration state.
#[derive(Debug, Clone)]
pub struct ExplorationDriver<T> {
    track: Track<T>,
    state: ExplorationState<T>,
    cfg: ExpertConfig,
    rng: ChaCha8Rng,
    corrections: usize,
    labels: usize,
}

impl<T: Scalar> ExplorationDriver<T> {
    pub fn new(gt: &RoadGraph<T>, cfg: ExpertConfig, seed: u64) -> Result<Self, ExpertError> {
        cfg.validate()?;
        let track = prepare_track(gt, &cfg);
        let state = ExplorationState::new(&track);
        Ok(Self {
            track,
            state,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            corrections: 0,
            labels: 0,
        })
    }

    pub fn track(&self) -> &Track<T> {
        &self.track
    }

    pub fn state(&self) -> &ExplorationState<T> {
        &self.state
    }

    pub fn config(&self) -> &ExpertConfig {
        &self.cfg
    }

    pub fn observe_seeds(&mut self, seeds: &[Point2<T>]) {
        self.state.observe_seeds(&self.track, seeds, &self.cfg);
    }

    /// Labels at `v_t` without changing any state.
    pub fn prepare(&self, v_t: Point2<T>) -> Result<ExpertLabel<T>, ExpertError> {
        expert_next(&self.track, &self.state, v_t, &self.cfg)
    }

    /// Picks executed positions for a prepared label and commits them.
    /// Closure targets are executed exactly at their join point.
    pub fn execute(&mut self, label: &ExpertLabel<T>) -> Execution<T> {
        let sigma = self.cfg.noise_sigma;
        let mut points: Vec<Point2<T>> = Vec::with_capacity(label.targets.len());
        let mut noisy = Vec::new();
        let mut clean = Vec::new();
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("validated sigma"));
        for t in &label.targets {
            if let Some(c) = t.connect_to {
                points.push(c);
                continue;
            }
            let p = match &normal {
                Some(n) => {
                    let dx = n.sample(&mut self.rng);
                    let dy = n.sample(&mut self.rng);
                    t.point + Point2::from_f64(dx, dy)
                }
                None => t.point,
            };
            noisy.push(p);
            clean.push(t.point);
            points.push(p);
        }
        let mut corrected = false;
        if self.cfg.force_correction && normal.is_some() && !noisy.is_empty() {
            let (_, c) = force_correct(&noisy, &clean, T::lit(self.cfg.xi));
            if c {
                corrected = true;
                for (p, t) in points.iter_mut().zip(&label.targets) {
                    if t.connect_to.is_none() {
                        *p = t.point;
                    }
                }
            }
        }
        self.state.commit(&self.track, label, &points);
        self.labels += 1;
        if corrected {
            self.corrections += 1;
        }
        Execution { points, corrected }
    }

    /// [`prepare`](Self::prepare) followed by [`execute`](Self::execute).
    pub fn respond(
        &mut self,
        v_t: Point2<T>,
    ) -> Result<(ExpertLabel<T>, Execution<T>), ExpertError> {
        let label = self.prepare(v_t)?;
        let exec = self.execute(&label);
        Ok((label, exec))
    }

    pub fn coverage(&self) -> T {
        self.state.coverage(&self.track)
    }

    pub fn corrections(&self) -> usize {
        self.corrections
    }

    pub fn labels_emitted(&self) -> usize {
        self.labels
    }
}
