use crate::engine::policy::{Policy, PolicyError, PolicyRequest, PolicyResponse, VertexPrediction};
use crate::expert::{Execution, ExpertConfig, ExpertError, ExpertLabel, ExplorationDriver};
use crate::geometry::Point2;
use crate::graph::RoadGraph;
use crate::scalar::Scalar;

/// Ground-truth policy: answers every request with the expert's label set
/// at probability 1, perturbed by the configured noise and force corrected.
/// Requests off the ground truth get an empty answer.
#[derive(Debug, Clone)]
pub struct ExpertPolicy<T> {
    driver: ExplorationDriver<T>,
    last: Option<(ExpertLabel<T>, Execution<T>)>,
    off_track: usize,
}

impl<T: Scalar> ExpertPolicy<T> {
    pub fn new(gt: &RoadGraph<T>, cfg: ExpertConfig, seed: u64) -> Result<Self, ExpertError> {
        Ok(Self {
            driver: ExplorationDriver::new(gt, cfg, seed)?,
            last: None,
            off_track: 0,
        })
    }

    pub fn driver(&self) -> &ExplorationDriver<T> {
        &self.driver
    }

    /// Label and execution behind the most recent answer.
    pub fn last(&self) -> Option<&(ExpertLabel<T>, Execution<T>)> {
        self.last.as_ref()
    }

    /// Number of requests answered empty because they were off track.
    pub fn off_track_requests(&self) -> usize {
        self.off_track
    }

    /// Answer for a bare center position.
    pub fn respond_at(&mut self, center: Point2<T>) -> PolicyResponse<T> {
        match self.driver.respond(center) {
            Ok((label, exec)) => {
                let predictions = exec
                    .points
                    .iter()
                    .map(|p| VertexPrediction {
                        offset: *p - center,
                        prob: T::one(),
                    })
                    .collect();
                self.last = Some((label, exec));
                PolicyResponse { predictions }
            }
            Err(e) => {
                log::debug!("expert: {e}");
                self.off_track += 1;
                self.last = None;
                PolicyResponse::empty()
            }
        }
    }
}

impl<T: Scalar> Policy<T> for ExpertPolicy<T> {
    fn observe_seeds(&mut self, seeds: &[Point2<T>]) {
        self.driver.observe_seeds(seeds);
    }

    fn predict(&mut self, req: &PolicyRequest<'_, T>) -> Result<PolicyResponse<T>, PolicyError> {
        Ok(self.respond_at(req.center))
    }
}

/// The expert as a policy, with the noise setting taken from `cfg`.
pub fn wrap_expert_as_policy<T: Scalar>(
    gt: &RoadGraph<T>,
    cfg: &ExpertConfig,
) -> Result<ExpertPolicy<T>, ExpertError> {
    ExpertPolicy::new(gt, cfg.clone(), 0)
}
