//! Fall decision on top of the per-track vertical estimates.
//!
//! A sliding window of recent `[v, a, mu_ca]` estimates is kept per track
//! and a fall is declared when, within the window,
//!
//! * the estimated vertical velocity dipped below `v_thre`,
//! * the estimated vertical acceleration dipped below `a_thre` (downward;
//!   the large positive accelerations of standing up never qualify), and
//! * the constant-acceleration model probability exceeded `p_thre`.
//!
//! The three extremes may occur in different frames of the window, which
//! absorbs the lag between the velocity peak (just before impact) and the
//! model probability peak (shortly after). After an event a per-track
//! refractory period suppresses retriggering on the same impact.
//!
//! [`FallDetector`] wires this to the tracker output: it owns one vertical
//! filter and one decision window per confirmed track, created when the
//! track first reports and dropped when the tracker deletes it.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{FadeError, Result};
use crate::imm::{ImmConfig, ImmFilter, CA};
use crate::tracking::{TrackId, TrackObservation};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Downward velocity threshold, m/s (negative).
    pub v_thre: f64,
    /// Downward acceleration threshold, m/s^2 (negative).
    pub a_thre: f64,
    /// Constant-acceleration probability threshold.
    pub p_thre: f64,
    /// Decision window length in frames.
    pub window: usize,
    /// Seconds to suppress repeat events per track.
    pub refractory: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            v_thre: -3.0,
            a_thre: -5.0,
            p_thre: 0.5,
            window: 20,
            refractory: 2.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.v_thre.is_finite() || !self.a_thre.is_finite() {
            return Err(FadeError::Config("detector thresholds must be finite".into()));
        }
        if self.v_thre >= 0.0 || self.a_thre >= 0.0 {
            return Err(FadeError::Config(
                "v_thre and a_thre are downward thresholds and must be negative".into(),
            ));
        }
        if !(0.0 < self.p_thre && self.p_thre < 1.0) {
            return Err(FadeError::Config("p_thre must be in (0,1)".into()));
        }
        if self.window == 0 {
            return Err(FadeError::Config("window must hold at least one frame".into()));
        }
        if !(self.refractory >= 0.0) {
            return Err(FadeError::Config("refractory must be nonnegative".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Windowed threshold decision
// ---------------------------------------------------------------------------

/// Extremes of the window that produced a trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FallTrigger {
    pub peak_velocity: f64,
    pub peak_acceleration: f64,
    pub peak_ca_probability: f64,
}

/// Sliding-window threshold check over one track's estimate stream.
#[derive(Debug, Clone)]
pub struct ThresholdDecider {
    cfg: DetectorConfig,
    ring: VecDeque<(f64, f64, f64)>,
    last_event_t: Option<f64>,
}

impl ThresholdDecider {
    pub fn new(cfg: DetectorConfig) -> Result<ThresholdDecider> {
        cfg.validate()?;
        let ring = VecDeque::with_capacity(cfg.window);
        Ok(ThresholdDecider {
            cfg,
            ring,
            last_event_t: None,
        })
    }

    /// Record one frame's estimates and report a trigger if the window now
    /// satisfies all three conditions and the track is out of refractory.
    pub fn push(&mut self, t: f64, v: f64, a: f64, mu_ca: f64) -> Option<FallTrigger> {
        if self.ring.len() == self.cfg.window {
            self.ring.pop_front();
        }
        self.ring.push_back((v, a, mu_ca));

        let mut min_v = f64::INFINITY;
        let mut min_a = f64::INFINITY;
        let mut max_mu = f64::NEG_INFINITY;
        for &(v, a, mu) in &self.ring {
            min_v = min_v.min(v);
            min_a = min_a.min(a);
            max_mu = max_mu.max(mu);
        }
        let fired =
            min_v <= self.cfg.v_thre && min_a <= self.cfg.a_thre && max_mu >= self.cfg.p_thre;
        if !fired {
            return None;
        }
        if let Some(te) = self.last_event_t {
            if t - te < self.cfg.refractory {
                return None;
            }
        }
        self.last_event_t = Some(t);
        Some(FallTrigger {
            peak_velocity: min_v,
            peak_acceleration: min_a,
            peak_ca_probability: max_mu,
        })
    }
}

// ---------------------------------------------------------------------------
// Per-track orchestration
// ---------------------------------------------------------------------------

/// A declared fall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallEvent {
    pub track: TrackId,
    /// Decision time, seconds.
    pub t: f64,
    pub peak_velocity: f64,
    pub peak_acceleration: f64,
    pub peak_ca_probability: f64,
}

/// One track's vertical estimate for one frame, for logging and analysis.
#[derive(Debug, Clone, Copy)]
pub struct TrackEstimate {
    pub id: TrackId,
    /// The raw height measurement that was filtered.
    pub z_meas: f64,
    pub z_hat: f64,
    pub v_hat: f64,
    pub a_hat: f64,
    /// Posterior probability of the constant-acceleration model.
    pub mu_ca: f64,
    /// True when this track declared a fall this frame.
    pub fired: bool,
}

/// What one detector step produced.
#[derive(Debug, Clone, Default)]
pub struct DetectorStep {
    /// Falls declared this frame, ordered by track id.
    pub events: Vec<FallEvent>,
    /// One estimate per track that ran its filter this frame (a track's
    /// first-ever report only seeds its filter and yields no estimate).
    pub estimates: Vec<TrackEstimate>,
}

struct TrackState {
    imm: ImmFilter,
    decider: ThresholdDecider,
}

/// Runs one vertical filter and one decision window per confirmed track.
pub struct FallDetector {
    imm_cfg: ImmConfig,
    det_cfg: DetectorConfig,
    tracks: BTreeMap<TrackId, TrackState>,
}

impl FallDetector {
    pub fn new(imm_cfg: ImmConfig, det_cfg: DetectorConfig) -> Result<FallDetector> {
        imm_cfg.validate()?;
        det_cfg.validate()?;
        Ok(FallDetector {
            imm_cfg,
            det_cfg,
            tracks: BTreeMap::new(),
        })
    }

    /// Number of tracks currently carrying detector state.
    pub fn active_tracks(&self) -> usize {
        self.tracks.len()
    }

    /// Latest vertical estimate per track, for logging.
    pub fn estimates(&self) -> impl Iterator<Item = (TrackId, &ImmFilter)> {
        self.tracks.iter().map(|(&id, s)| (id, &s.imm))
    }

    /// Consume one frame of tracker output. Events are ordered by track id.
    pub fn step(
        &mut self,
        t: f64,
        observations: &[TrackObservation],
        deleted: &[TrackId],
    ) -> DetectorStep {
        for id in deleted {
            self.tracks.remove(id);
        }

        // Observations arrive in id order from the tracker, but sort anyway
        // so event order never depends on the caller.
        let mut obs: Vec<&TrackObservation> = observations.iter().collect();
        obs.sort_by_key(|o| o.id);

        let mut out = DetectorStep::default();
        for o in obs {
            let z = o.measurement.z;
            match self.tracks.get_mut(&o.id) {
                None => {
                    // First report seeds the filter; decisions start next frame.
                    let imm = ImmFilter::new(self.imm_cfg.clone(), t, z)
                        .expect("config validated in new");
                    let decider = ThresholdDecider::new(self.det_cfg.clone())
                        .expect("config validated in new");
                    self.tracks.insert(o.id, TrackState { imm, decider });
                }
                Some(state) => {
                    let est = state.imm.step(t, z);
                    let trigger = state.decider.push(t, est.v_hat, est.a_hat, est.mu[CA]);
                    if let Some(trig) = &trigger {
                        out.events.push(FallEvent {
                            track: o.id,
                            t,
                            peak_velocity: trig.peak_velocity,
                            peak_acceleration: trig.peak_acceleration,
                            peak_ca_probability: trig.peak_ca_probability,
                        });
                    }
                    out.estimates.push(TrackEstimate {
                        id: o.id,
                        z_meas: z,
                        z_hat: est.z_hat,
                        v_hat: est.v_hat,
                        a_hat: est.a_hat,
                        mu_ca: est.mu[CA],
                        fired: trigger.is_some(),
                    });
                }
            }
        }
        out
    }
}
