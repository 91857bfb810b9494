use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::graph::RoadGraph;
use crate::imaging::{crop_roi, rasterize_graph_window, RoiSpec, Tile};
use crate::scalar::Scalar;

/// One decoded query: an offset from the ROI center and its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexPrediction<T> {
    pub offset: Point2<T>,
    pub prob: T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyResponse<T> {
    pub predictions: Vec<VertexPrediction<T>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid policy response: {0}")]
    Invalid(String),
    #[error("policy transport failure: {0}")]
    Transport(String),
    #[error("policy timed out")]
    Timeout,
    #[error("remote policy error [{code}]: {message}")]
    Remote { code: String, message: String },
}

impl<T: Scalar> PolicyResponse<T> {
    pub fn empty() -> Self {
        Self {
            predictions: Vec::new(),
        }
    }

    /// Checks the response contract: at most `n_queries` predictions,
    /// probabilities in [0, 1], offsets finite and within half the ROI side.
    pub fn validate(&self, n_queries: usize, roi_side: usize) -> Result<(), PolicyError> {
        if self.predictions.len() > n_queries {
            return Err(PolicyError::Invalid(format!(
                "{} predictions exceed the {} queries",
                self.predictions.len(),
                n_queries
            )));
        }
        let half = T::from_usize_lossy(roi_side / 2);
        for (i, p) in self.predictions.iter().enumerate() {
            if !(p.prob >= T::zero() && p.prob <= T::one()) {
                return Err(PolicyError::Invalid(format!(
                    "prediction {i} has probability {}",
                    p.prob
                )));
            }
            if !p.offset.is_finite() || p.offset.x.abs() > half || p.offset.y.abs() > half {
                return Err(PolicyError::Invalid(format!(
                    "prediction {i} offset ({}, {}) outside the ROI",
                    p.offset.x, p.offset.y
                )));
            }
        }
        Ok(())
    }
}

/// Inputs for one policy call. Rasters are produced on demand so policies
/// that do not look at pixels pay nothing for them.
pub struct PolicyRequest<'a, T> {
    pub center: Point2<T>,
    pub roi_side: usize,
    pub history_stroke: usize,
    pub image: Option<&'a Tile<T>>,
    pub history: &'a RoadGraph<T>,
}

impl<T: Scalar> PolicyRequest<'_, T> {
    fn spec(&self) -> RoiSpec<T> {
        RoiSpec::new(self.center, self.roi_side).expect("validated roi side")
    }

    /// Crop of the aerial image around the center (zeros without an image).
    pub fn roi_rgb(&self) -> Tile<T> {
        match self.image {
            Some(img) => crop_roi(img, &self.spec()),
            None => Tile::zeros(self.roi_side, self.roi_side, 3),
        }
    }

    /// Rasterized history graph over the ROI window.
    pub fn history_raster(&self) -> Tile<T> {
        rasterize_graph_window(
            self.history,
            self.spec().origin(),
            self.roi_side,
            self.roi_side,
            self.history_stroke,
        )
    }
}

/// A vertex-prediction policy driven by the agent.
pub trait Policy<T: Scalar> {
    /// Called once with the candidate initial vertices before the first request.
    fn observe_seeds(&mut self, _seeds: &[Point2<T>]) {}

    fn predict(&mut self, req: &PolicyRequest<'_, T>) -> Result<PolicyResponse<T>, PolicyError>;
}

impl<T: Scalar, P: Policy<T> + ?Sized> Policy<T> for &mut P {
    fn observe_seeds(&mut self, seeds: &[Point2<T>]) {
        (**self).observe_seeds(seeds)
    }

    fn predict(&mut self, req: &PolicyRequest<'_, T>) -> Result<PolicyResponse<T>, PolicyError> {
        (**self).predict(req)
    }
}

/// Full-tile road and intersection probability maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMaps<T> {
    pub road: Tile<T>,
    pub intersection: Tile<T>,
}

pub trait SegmentationProvider<T: Scalar> {
    fn segment(&mut self, image: &Tile<T>) -> Result<SegmentationMaps<T>, PolicyError>;
}

/// Serves fixed maps, typically rasterized ground truth.
#[derive(Debug, Clone)]
pub struct GroundTruthSegmentation<T> {
    pub maps: SegmentationMaps<T>,
}

impl<T: Scalar> SegmentationProvider<T> for GroundTruthSegmentation<T> {
    fn segment(&mut self, _image: &Tile<T>) -> Result<SegmentationMaps<T>, PolicyError> {
        Ok(self.maps.clone())
    }
}

/// Always answers "no road ahead".
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyPolicy;

impl<T: Scalar> Policy<T> for EmptyPolicy {
    fn predict(&mut self, _req: &PolicyRequest<'_, T>) -> Result<PolicyResponse<T>, PolicyError> {
        Ok(PolicyResponse::empty())
    }
}
