//! The iterative graph-generation agent and the policy contract it drives.

mod agent;
mod oracle;
mod policy;

pub use agent::{
    run_detection, run_detection_with_maps, seed_initial_vertices, step, valid_predictions, Action,
    Agent, AgentState, DetectionResult, EngineConfig, EngineError,
};
pub use oracle::{wrap_expert_as_policy, ExpertPolicy};
pub use policy::{
    EmptyPolicy, GroundTruthSegmentation, Policy, PolicyError, PolicyRequest, PolicyResponse,
    SegmentationMaps, SegmentationProvider, VertexPrediction,
};
