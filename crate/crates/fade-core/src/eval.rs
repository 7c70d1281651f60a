//! Scoring detections against scripted ground truth.
//!
//! A detection is credited to a fall when its decision time lands inside
//! the fall's window `[fall_start - tolerance, impact + tolerance]`.
//! Matching is one-to-one and greedy: detections are considered in time
//! order and each takes the still-unmatched fall whose impact lies closest.
//! Leftover detections are false positives; leftover falls are misses.
//!
//! Ratio metrics are `Option`: with no positives to score, precision or
//! recall is undefined and reported as `null`, never silently as zero.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::detector::FallEvent;
use crate::error::{FadeError, Result};
use crate::sim::TruthEvent;

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Seconds of slack around `[fall_start, impact]`, both sides.
    pub tolerance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { tolerance: 2.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    /// `(truth_index, detection_index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Truth events no detection claimed.
    pub missed_truth: Vec<usize>,
    /// Detections no truth window accepts.
    pub false_detections: Vec<usize>,
}

/// Greedy one-to-one assignment of detections to fall windows.
pub fn match_events(
    truth: &[TruthEvent],
    detections: &[FallEvent],
    cfg: &EvalConfig,
) -> MatchOutcome {
    let mut det_order: Vec<usize> = (0..detections.len()).collect();
    det_order.sort_by(|&a, &b| {
        detections[a]
            .t
            .partial_cmp(&detections[b].t)
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut taken = vec![false; truth.len()];
    let mut outcome = MatchOutcome::default();
    for di in det_order {
        let t = detections[di].t;
        let mut best: Option<(f64, usize)> = None;
        for (ti, tr) in truth.iter().enumerate() {
            if taken[ti] {
                continue;
            }
            if t < tr.fall_start_t - cfg.tolerance || t > tr.impact_t + cfg.tolerance {
                continue;
            }
            let gap = (t - tr.impact_t).abs();
            let better = match best {
                None => true,
                Some((bg, _)) => gap < bg,
            };
            if better {
                best = Some((gap, ti));
            }
        }
        match best {
            Some((_, ti)) => {
                taken[ti] = true;
                outcome.pairs.push((ti, di));
            }
            None => outcome.false_detections.push(di),
        }
    }
    outcome.missed_truth = taken
        .iter()
        .enumerate()
        .filter(|(_, &v)| !v)
        .map(|(i, _)| i)
        .collect();
    outcome.pairs.sort_unstable();
    outcome
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Counts {
    pub fn from_outcome(outcome: &MatchOutcome) -> Counts {
        Counts {
            true_positives: outcome.pairs.len(),
            false_positives: outcome.false_detections.len(),
            false_negatives: outcome.missed_truth.len(),
        }
    }

    pub fn add(&mut self, other: &Counts) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }

    /// None when no detections were made.
    pub fn precision(&self) -> Option<f64> {
        let denom = self.true_positives + self.false_positives;
        (denom > 0).then(|| self.true_positives as f64 / denom as f64)
    }

    /// None when no falls were scripted.
    pub fn recall(&self) -> Option<f64> {
        let denom = self.true_positives + self.false_negatives;
        (denom > 0).then(|| self.true_positives as f64 / denom as f64)
    }

    /// Harmonic mean of precision and recall; None when either is
    /// undefined or both are zero.
    pub fn f1(&self) -> Option<f64> {
        let p = self.precision()?;
        let r = self.recall()?;
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }
}

/// Throughput of a pipeline run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub frames: usize,
    /// Wall-clock seconds for the whole run, parsing included.
    pub elapsed_s: f64,
    pub frames_per_second: f64,
    /// Mean milliseconds spent in the decision chain per frame.
    pub mean_ms: f64,
    /// 95th-percentile milliseconds per frame.
    pub p95_ms: f64,
}

impl Timing {
    /// Summarizes per-frame processing times (seconds each) plus the total
    /// wall clock of the run that produced them.
    pub fn from_frame_times(frame_times_s: &[f64], elapsed_s: f64) -> Timing {
        let frames = frame_times_s.len();
        if frames == 0 {
            return Timing {
                elapsed_s,
                ..Timing::default()
            };
        }
        let mean_ms = 1e3 * frame_times_s.iter().sum::<f64>() / frames as f64;
        let mut sorted = frame_times_s.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let p95_idx = ((0.95 * frames as f64).ceil() as usize).clamp(1, frames) - 1;
        Timing {
            frames,
            elapsed_s,
            frames_per_second: if elapsed_s > 0.0 {
                frames as f64 / elapsed_s
            } else {
                0.0
            },
            mean_ms,
            p95_ms: 1e3 * sorted[p95_idx],
        }
    }
}

/// The full scoring report the evaluation command prints as JSON.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Breakdown keyed by how many actors were in the scene, when the
    /// caller aggregates runs of different crowd sizes.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_actor_count: BTreeMap<usize, Counts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl MetricsReport {
    pub fn from_counts(counts: Counts) -> MetricsReport {
        MetricsReport {
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            per_actor_count: BTreeMap::new(),
            timing: None,
        }
    }
}

/// Match and score one run.
pub fn evaluate(
    truth: &[TruthEvent],
    detections: &[FallEvent],
    cfg: &EvalConfig,
) -> MetricsReport {
    let outcome = match_events(truth, detections, cfg);
    MetricsReport::from_counts(Counts::from_outcome(&outcome))
}

// ---------------------------------------------------------------------------
// Event stream I/O
// ---------------------------------------------------------------------------

/// Serialize detections as one JSON object per line.
pub fn write_events<W: Write>(events: &[FallEvent], mut w: W) -> Result<()> {
    for event in events {
        let line = serde_json::to_string(event)
            .map_err(|e| FadeError::Config(format!("event serialization: {e}")))?;
        writeln!(w, "{line}").map_err(|e| FadeError::io("<events>", e))?;
    }
    Ok(())
}

/// Parse detections written by [`write_events`].
pub fn read_events<R: BufRead>(r: R) -> Result<Vec<FallEvent>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| FadeError::io("<events>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: FallEvent = serde_json::from_str(&line)
            .map_err(|e| FadeError::malformed(i + 1, format!("fall event: {e}")))?;
        if !event.t.is_finite() {
            return Err(FadeError::malformed(i + 1, "event time must be finite"));
        }
        out.push(event);
    }
    Ok(out)
}
