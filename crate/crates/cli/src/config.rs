use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use roadgraph::bridge::BridgeConfig;
use roadgraph::engine::EngineConfig;
use roadgraph::expert::ExpertConfig;
use roadgraph::imaging::WorldStyle;
use roadgraph::matchloss::LossWeights;
use roadgraph::metrics::MetricsConfig;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "ROADGRAPH_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub style: WorldStyle,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 1024,
            style: WorldStyle::Grid,
        }
    }
}

/// Every tunable, loaded from TOML. Missing keys take their defaults,
/// unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub expert: ExpertConfig,
    pub engine: EngineConfig,
    pub metrics: MetricsConfig,
    pub loss: LossWeights<f64>,
    pub bridge: BridgeConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("config {}", p.display()))
            }
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.expert.validate()?;
        self.engine.validate()?;
        if self.synth.width < 256 || self.synth.height < 256 {
            bail!("synth worlds must be at least 256x256");
        }
        let m = &self.metrics;
        if m.deltas.is_empty() || m.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            bail!("metrics.deltas must be non-empty and positive");
        }
        if !(m.snap_radius.is_finite() && m.snap_radius > 0.0) || m.apls_pairs == 0 {
            bail!("metrics.snap_radius and metrics.apls_pairs must be positive");
        }
        if !(self.bridge.timeout_secs.is_finite() && self.bridge.timeout_secs > 0.0) {
            bail!("bridge.timeout_secs must be positive");
        }
        Ok(())
    }
}
