//! Whole-pipeline configuration.
//!
//! One JSON document tunes every stage. Each section is optional and each
//! field within a section is optional; anything omitted keeps its default.
//! Unknown keys are rejected so typos fail loudly instead of silently
//! running with defaults.
//!
//! Frame timing is deliberately absent from the file format: the stream
//! header carries `t_frame`, and [`PipelineConfig::with_frame_period`]
//! pushes it into the tracker and vertical filter so the two can never
//! disagree with the data.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterConfig;
use crate::detector::DetectorConfig;
use crate::error::{FadeError, Result};
use crate::frame::RadarLimits;
use crate::imm::ImmConfig;
use crate::tracking::TrackerConfig;

// ---------------------------------------------------------------------------
// Aggregate config
// ---------------------------------------------------------------------------

/// Tuning for the full detection chain, one section per stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Grid clustering and torso extraction.
    pub clustering: ClusterConfig,
    /// Multi-target tracker.
    pub tracker: TrackerConfig,
    /// Vertical two-model filter.
    pub imm: ImmConfig,
    /// Sliding-window fall decision.
    pub detector: DetectorConfig,
    /// Parse-time plausibility limits.
    pub limits: RadarLimits,
}

impl PipelineConfig {
    /// Parses a JSON config document.
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| FadeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a JSON config document from a reader.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_reader(reader).map_err(|e| FadeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section for internally consistent values.
    pub fn validate(&self) -> Result<()> {
        self.clustering.validate()?;
        self.tracker.validate()?;
        self.imm.validate()?;
        self.detector.validate()?;
        Ok(())
    }

    /// Returns a copy with the frame period wired into the stages that
    /// integrate over time.
    #[must_use]
    pub fn with_frame_period(&self, t_frame: f64) -> Self {
        let mut cfg = self.clone();
        cfg.tracker.t_s = t_frame;
        cfg.imm.t = t_frame;
        cfg
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
