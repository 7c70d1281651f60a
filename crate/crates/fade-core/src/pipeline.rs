//! The full detection chain behind one streaming struct.
//!
//! Per frame: transform points to world coordinates, cluster them and take
//! one torso centroid per person, feed the centroids to the multi-target
//! tracker, then run each confirmed track's vertical filter and fall
//! decision. [`run_pipeline`] drives the whole chain over a frame stream and
//! also measures throughput, since the decision loop must keep up with the
//! radar's frame rate.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::time::Instant;

use nalgebra::Vector3;

use crate::clustering::{cluster_frame, ClusterConfig};
use crate::config::PipelineConfig;
use crate::detector::{FallDetector, FallEvent};
use crate::error::{FadeError, Result};
use crate::eval::Timing;
use crate::frame::{frame_to_world, FrameReader, PointFrame, SensorPose, StreamHeader};
use crate::tracking::{TrackId, Tracker};

// ---------------------------------------------------------------------------
// Streaming pipeline
// ---------------------------------------------------------------------------

/// One per-track line of the estimate log, written as CSV by
/// [`write_features_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    /// Frame time, seconds.
    pub t: f64,
    pub track: TrackId,
    /// Raw torso-centroid height fed to the vertical filter.
    pub z_meas: f64,
    pub z_hat: f64,
    pub v_hat: f64,
    pub a_hat: f64,
    /// Posterior probability of the constant-acceleration model.
    pub mu_ca: f64,
    /// Whether this track declared a fall this frame.
    pub decision: bool,
}

/// What one pipeline step produced.
#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    /// Falls declared this frame, ordered by track id.
    pub events: Vec<FallEvent>,
    /// One row per track whose vertical filter ran this frame.
    pub features: Vec<FeatureRow>,
}

/// The detection chain for one frame stream.
pub struct FadePipeline {
    clustering: ClusterConfig,
    pose: SensorPose,
    tracker: Tracker,
    detector: FallDetector,
    live_tracks: BTreeSet<TrackId>,
}

impl FadePipeline {
    /// Builds the chain for a stream, wiring the header's frame period into
    /// the stages that integrate over time.
    pub fn new(cfg: &PipelineConfig, header: &StreamHeader) -> Result<FadePipeline> {
        if !(header.t_frame.is_finite() && header.t_frame > 0.0) {
            return Err(FadeError::Config(format!(
                "frame period must be positive, got {}",
                header.t_frame
            )));
        }
        let cfg = cfg.with_frame_period(header.t_frame);
        cfg.validate()?;
        Ok(FadePipeline {
            clustering: cfg.clustering.clone(),
            pose: header.pose.clone(),
            tracker: Tracker::new(cfg.tracker)?,
            detector: FallDetector::new(cfg.imm, cfg.detector)?,
            live_tracks: BTreeSet::new(),
        })
    }

    /// Number of tracks currently alive in the tracker (test and confirmed).
    pub fn track_count(&self) -> usize {
        self.live_tracks.len()
    }

    /// Processes one frame of sensor-coordinate points.
    pub fn step(&mut self, frame: &PointFrame) -> StepOutput {
        let world = frame_to_world(&self.pose, frame);
        let clusters = cluster_frame(&world.points, &self.clustering);
        let centroids: Vec<Vector3<f64>> = clusters.iter().map(|c| c.centroid).collect();

        let tracked = self.tracker.step(frame.t, &centroids);
        for id in &tracked.promoted {
            self.live_tracks.insert(*id);
        }
        for id in &tracked.deleted {
            self.live_tracks.remove(id);
        }

        let decided = self
            .detector
            .step(frame.t, &tracked.observations, &tracked.deleted);
        let features = decided
            .estimates
            .iter()
            .map(|e| FeatureRow {
                t: frame.t,
                track: e.id,
                z_meas: e.z_meas,
                z_hat: e.z_hat,
                v_hat: e.v_hat,
                a_hat: e.a_hat,
                mu_ca: e.mu_ca,
                decision: e.fired,
            })
            .collect();
        StepOutput {
            events: decided.events,
            features,
        }
    }
}

// ---------------------------------------------------------------------------
// File-level entry points
// ---------------------------------------------------------------------------

/// Everything one run over a frame stream produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// All falls declared, in decision order.
    pub events: Vec<FallEvent>,
    /// The per-frame, per-track estimate log.
    pub features: Vec<FeatureRow>,
    /// Wall-clock throughput of the decision loop.
    pub timing: Timing,
    /// Seconds spent in the decision chain for each frame, parsing excluded.
    pub frame_times_s: Vec<f64>,
    /// Points the parser dropped as physically implausible.
    pub rejected_points: usize,
}

/// Runs the detection chain over an open frame stream.
pub fn run_pipeline<R: BufRead>(
    cfg: &PipelineConfig,
    mut reader: FrameReader<R>,
) -> Result<RunOutput> {
    let mut pipeline = FadePipeline::new(cfg, reader.header())?;
    let mut events = Vec::new();
    let mut features = Vec::new();
    let mut frame_times_s = Vec::new();
    let start = Instant::now();
    for frame in &mut reader {
        let frame = frame?;
        let frame_start = Instant::now();
        let out = pipeline.step(&frame);
        frame_times_s.push(frame_start.elapsed().as_secs_f64());
        events.extend(out.events);
        features.extend(out.features);
    }
    let elapsed_s = start.elapsed().as_secs_f64();
    Ok(RunOutput {
        events,
        features,
        timing: Timing::from_frame_times(&frame_times_s, elapsed_s),
        frame_times_s,
        rejected_points: reader.rejected_points(),
    })
}

/// Writes per-frame processing times as CSV, milliseconds per frame.
pub fn write_timing_csv<W: Write>(frame_times_s: &[f64], mut w: W) -> Result<()> {
    let io = |e| FadeError::io("<timing>", e);
    writeln!(w, "frame,ms").map_err(io)?;
    for (i, t) in frame_times_s.iter().enumerate() {
        writeln!(w, "{i},{:.4}", t * 1e3).map_err(io)?;
    }
    Ok(())
}

/// Writes the estimate log as CSV with a fixed header row.
pub fn write_features_csv<W: Write>(rows: &[FeatureRow], mut w: W) -> Result<()> {
    let io = |e| FadeError::io("<features>", e);
    writeln!(w, "t,track_id,z_meas,z_hat,v_hat,a_hat,mu_ca,decision").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{:.3},{},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            r.t,
            r.track,
            r.z_meas,
            r.z_hat,
            r.v_hat,
            r.a_hat,
            r.mu_ca,
            u8::from(r.decision)
        )
        .map_err(io)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
