//! Iterative road-network graph detection: graph model, rasters, the
//! ground-truth expert, the agent loop, matching losses, evaluation metrics
//! and the policy bridge protocol.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod bridge;
pub mod engine;
pub mod expert;
pub mod geometry;
pub mod graph;
pub mod imaging;
pub mod matchloss;
pub mod metrics;
pub mod scalar;

pub use scalar::Scalar;

pub type Point = geometry::Point2<f64>;
pub type Graph = graph::RoadGraph<f64>;
pub type Image = imaging::Tile<f64>;
pub type Prediction = engine::VertexPrediction<f64>;
pub type Label = expert::ExpertLabel<f64>;
pub type Sample = expert::TrainingSample<f64>;
pub type World = imaging::SyntheticWorld<f64>;

pub type PointF32 = geometry::Point2<f32>;
pub type GraphF32 = graph::RoadGraph<f32>;
pub type ImageF32 = imaging::Tile<f32>;
