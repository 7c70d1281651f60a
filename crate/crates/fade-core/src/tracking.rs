//! Multi-target tracking over per-frame torso centroids.
//!
//! Life cycle of a track:
//!
//! 1. **Direct starting.** Two centroids from consecutive frames whose
//!    distance is consistent with human speed (`v_min * t_s` to
//!    `v_max * t_s`) found a *test* track, initialized by two-point
//!    differencing. Pairs are formed greedily by smallest distance and only
//!    from centroids no existing track claimed.
//! 2. **M/N confirmation.** The founding pair contributes the first two hit
//!    flags. When the flag ring reaches `n_window` entries the track is
//!    promoted iff at least `m_confirm` are hits, otherwise it is removed.
//! 3. **Association.** Every frame each track predicts forward with a
//!    constant-velocity model and claims the nearest centroid inside its
//!    chi-squared ellipsoid gate (`nu' S^-1 nu <= gamma`). Confirmed tracks
//!    pick before test tracks, older before younger, and a claimed centroid
//!    is gone for everyone after it.
//! 4. **Deletion.** A confirmed track is dropped once a full
//!    `delete_window`-frame flag ring shows fewer than `m_delete` hits.
//!
//! The per-frame step order is fixed: predict, associate confirmed,
//! associate test, update hits, M/N bookkeeping, then direct starting on the
//! leftovers. Confirmed tracks that were updated this frame emit their id,
//! filtered position and raw measurement for the downstream fall detector.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{FadeError, Result};
use crate::stats::chi2_quantile;

pub type TrackId = u64;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Frame period in seconds. Wired from the stream header, not the config file.
    #[serde(skip)]
    pub t_s: f64,
    /// Slowest plausible walking speed for direct starting, m/s.
    pub v_min: f64,
    /// Fastest plausible speed for direct starting, m/s.
    pub v_max: f64,
    /// Hits required in the first `n_window` flags to confirm.
    pub m_confirm: usize,
    /// Flag-ring length for the confirmation decision.
    pub n_window: usize,
    /// Minimum hits per `delete_window` flags to keep a confirmed track.
    pub m_delete: usize,
    /// Flag-ring length for the deletion decision.
    pub delete_window: usize,
    /// Probability mass the association gate must cover.
    pub gate_probability: f64,
    /// White-noise acceleration intensity per axis, (m/s^2)^2.
    pub kf_process_noise: f64,
    /// Measurement variance per axis, m^2.
    pub kf_measurement_noise: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            t_s: 0.05,
            v_min: 0.1,
            v_max: 4.0,
            m_confirm: 3,
            n_window: 4,
            m_delete: 1,
            delete_window: 10,
            gate_probability: 0.99,
            kf_process_noise: 9.0,
            kf_measurement_noise: 0.01,
        }
    }
}

impl TrackerConfig {
    /// Gate threshold for a 3-D measurement: the `gate_probability` quantile
    /// of chi-squared with 3 degrees of freedom.
    pub fn gate_gamma(&self) -> f64 {
        chi2_quantile(self.gate_probability, 3)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_s.is_finite() && self.t_s > 0.0) {
            return Err(FadeError::Config("t_s must be positive".into()));
        }
        if !(0.0 <= self.v_min && self.v_min < self.v_max) {
            return Err(FadeError::Config("need 0 <= v_min < v_max".into()));
        }
        if self.n_window < 2 || self.m_confirm == 0 || self.m_confirm > self.n_window {
            return Err(FadeError::Config(
                "need 2 <= n_window and 1 <= m_confirm <= n_window".into(),
            ));
        }
        if self.m_delete == 0 || self.m_delete > self.delete_window {
            return Err(FadeError::Config(
                "need 1 <= m_delete <= delete_window".into(),
            ));
        }
        if !(self.gate_probability > 0.0 && self.gate_probability < 1.0) {
            return Err(FadeError::Config("gate_probability must be in (0,1)".into()));
        }
        if self.kf_process_noise < 0.0 || self.kf_measurement_noise <= 0.0 {
            return Err(FadeError::Config(
                "kf noise terms must be positive (process noise may be zero)".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Kalman model pieces
// ---------------------------------------------------------------------------

/// Constant-velocity transition for the 6-state [pos; vel] vector.
fn transition(t: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for axis in 0..3 {
        f[(axis, axis + 3)] = t;
    }
    f
}

/// Discrete white-noise-acceleration process covariance.
fn process_noise(t: f64, q: f64) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
    for axis in 0..3 {
        m[(axis, axis)] = q * t4 / 4.0;
        m[(axis, axis + 3)] = q * t3 / 2.0;
        m[(axis + 3, axis)] = q * t3 / 2.0;
        m[(axis + 3, axis + 3)] = q * t2;
    }
    m
}

fn symmetrize6(m: &mut Matrix6<f64>) {
    *m = (*m + m.transpose()) * 0.5;
}

// ---------------------------------------------------------------------------
// Track
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Test,
    Confirmed,
}

#[derive(Debug, Clone)]
struct Prediction {
    z_hat: Vector3<f64>,
    /// None when S failed to factor (treated as an empty gate).
    s_inv: Option<Matrix3<f64>>,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: TrackId,
    pub status: TrackStatus,
    /// [x, y, z, vx, vy, vz]
    pub state: Vector6<f64>,
    pub cov: Matrix6<f64>,
    pub birth_t: f64,
    pub last_update_t: f64,
    /// Filtered position after the most recent update.
    pub last_centroid: Vector3<f64>,
    /// Raw centroid consumed by the most recent update.
    pub last_measurement: Vector3<f64>,
    history: VecDeque<bool>,
    pred: Option<Prediction>,
}

/// Outcome of one M/N bookkeeping step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnDecision {
    Keep,
    Promote,
    Delete,
}

impl Track {
    /// Two-point initialization from a founding centroid pair.
    pub fn start(
        id: TrackId,
        prev: Vector3<f64>,
        cur: Vector3<f64>,
        t: f64,
        cfg: &TrackerConfig,
    ) -> Track {
        let ts = cfg.t_s;
        let vel = (cur - prev) / ts;
        let state = Vector6::new(cur.x, cur.y, cur.z, vel.x, vel.y, vel.z);
        let r = cfg.kf_measurement_noise;
        let mut cov = Matrix6::zeros();
        for axis in 0..3 {
            cov[(axis, axis)] = r;
            cov[(axis, axis + 3)] = r / ts;
            cov[(axis + 3, axis)] = r / ts;
            cov[(axis + 3, axis + 3)] = 2.0 * r / (ts * ts);
        }
        // The founding pair counts as the first two hit flags.
        let history = VecDeque::from([true, true]);
        Track {
            id,
            status: TrackStatus::Test,
            state,
            cov,
            birth_t: t,
            last_update_t: t,
            last_centroid: cur,
            last_measurement: cur,
            history,
            pred: None,
        }
    }

    /// Advance the state one frame and cache the predicted measurement and
    /// its innovation covariance for gating.
    pub fn predict(&mut self, cfg: &TrackerConfig) -> (Vector3<f64>, Matrix3<f64>) {
        let f = transition(cfg.t_s);
        self.state = f * self.state;
        self.cov = f * self.cov * f.transpose() + process_noise(cfg.t_s, cfg.kf_process_noise);
        symmetrize6(&mut self.cov);
        let z_hat = self.state.fixed_rows::<3>(0).into_owned();
        let s = self.cov.fixed_view::<3, 3>(0, 0)
            + Matrix3::identity() * cfg.kf_measurement_noise;
        let s_inv = s.cholesky().map(|ch| ch.inverse());
        self.pred = Some(Prediction { z_hat, s_inv });
        (z_hat, s)
    }

    /// Squared Mahalanobis distance of a centroid from the predicted
    /// measurement; None when no prediction is cached or S was singular.
    pub fn gate_distance(&self, centroid: Vector3<f64>) -> Option<f64> {
        let pred = self.pred.as_ref()?;
        let s_inv = pred.s_inv.as_ref()?;
        let nu = centroid - pred.z_hat;
        Some((nu.transpose() * s_inv * nu)[(0, 0)])
    }

    /// True when the last prediction's innovation covariance failed to
    /// factor; such a track cannot gate anything this frame.
    fn gate_unusable(&self) -> bool {
        matches!(&self.pred, Some(p) if p.s_inv.is_none())
    }

    /// Kalman measurement update with the associated centroid.
    pub fn update(&mut self, centroid: Vector3<f64>, t: f64, cfg: &TrackerConfig) {
        let pred = self
            .pred
            .as_ref()
            .expect("update requires a prior predict in the same frame");
        let Some(s_inv) = pred.s_inv else { return };
        let nu = centroid - pred.z_hat;
        // K = P H' S^-1 with H = [I 0]: the first three columns of P.
        let phk = self.cov.fixed_view::<6, 3>(0, 0).into_owned();
        let k = phk * s_inv;
        self.state += k * nu;
        // Joseph form keeps the covariance PSD under rounding.
        let mut ikh: Matrix6<f64> = Matrix6::identity();
        for row in 0..6 {
            for col in 0..3 {
                ikh[(row, col)] -= k[(row, col)];
            }
        }
        let r = Matrix3::identity() * cfg.kf_measurement_noise;
        self.cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        symmetrize6(&mut self.cov);
        self.last_update_t = t;
        self.last_centroid = self.state.fixed_rows::<3>(0).into_owned();
        self.last_measurement = centroid;
    }

    /// Record this frame's hit/miss flag and apply the M/N rules.
    pub fn mn_step(&mut self, hit: bool, cfg: &TrackerConfig) -> MnDecision {
        self.history.push_back(hit);
        match self.status {
            TrackStatus::Test => {
                if self.history.len() < cfg.n_window {
                    return MnDecision::Keep;
                }
                let hits = self.history.iter().filter(|&&h| h).count();
                if hits >= cfg.m_confirm {
                    self.status = TrackStatus::Confirmed;
                    self.history.clear();
                    MnDecision::Promote
                } else {
                    MnDecision::Delete
                }
            }
            TrackStatus::Confirmed => {
                if self.history.len() > cfg.delete_window {
                    self.history.pop_front();
                }
                if self.history.len() == cfg.delete_window {
                    let hits = self.history.iter().filter(|&&h| h).count();
                    if hits < cfg.m_delete {
                        return MnDecision::Delete;
                    }
                }
                MnDecision::Keep
            }
        }
    }

    pub fn hits_in_window(&self) -> usize {
        self.history.iter().filter(|&&h| h).count()
    }
}

// ---------------------------------------------------------------------------
// Direct starting
// ---------------------------------------------------------------------------

/// Pair unclaimed centroids from consecutive frames whose spacing implies a
/// plausible human speed. Greedy by smallest distance; each centroid joins
/// at most one pair. Returns `(prev_index, cur_index)` pairs.
pub fn direct_start_pairs(
    prev: &[Vector3<f64>],
    cur: &[Vector3<f64>],
    cfg: &TrackerConfig,
) -> Vec<(usize, usize)> {
    let lo = cfg.v_min * cfg.t_s;
    let hi = cfg.v_max * cfg.t_s;
    let mut candidates = Vec::new();
    for (i, p) in prev.iter().enumerate() {
        for (j, c) in cur.iter().enumerate() {
            let d = (p - c).norm();
            if d >= lo && d <= hi {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut used_prev = vec![false; prev.len()];
    let mut used_cur = vec![false; cur.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_prev[i] && !used_cur[j] {
            used_prev[i] = true;
            used_cur[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// Tracker
// ---------------------------------------------------------------------------

/// A confirmed track's output for one frame.
#[derive(Debug, Clone)]
pub struct TrackObservation {
    pub id: TrackId,
    /// Filtered position after this frame's update.
    pub filtered: Vector3<f64>,
    /// The raw associated centroid.
    pub measurement: Vector3<f64>,
}

/// What one tracker step produced.
#[derive(Debug, Clone, Default)]
pub struct TrackerStep {
    pub observations: Vec<TrackObservation>,
    /// Confirmed tracks removed this frame.
    pub deleted: Vec<TrackId>,
    /// Tracks promoted to confirmed this frame.
    pub promoted: Vec<TrackId>,
}

pub struct Tracker {
    cfg: TrackerConfig,
    gamma: f64,
    tracks: Vec<Track>,
    next_id: TrackId,
    prev_leftover: Vec<Vector3<f64>>,
    singular_innovations: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Tracker> {
        cfg.validate()?;
        let gamma = cfg.gate_gamma();
        Ok(Tracker {
            cfg,
            gamma,
            tracks: Vec::new(),
            next_id: 0,
            prev_leftover: Vec::new(),
            singular_innovations: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Frames where a track's innovation covariance failed to factor.
    pub fn singular_innovations(&self) -> u64 {
        self.singular_innovations
    }

    /// Process one frame of centroids; `t` is the frame timestamp.
    pub fn step(&mut self, t: f64, centroids: &[Vector3<f64>]) -> TrackerStep {
        let mut result = TrackerStep::default();

        for track in &mut self.tracks {
            track.predict(&self.cfg);
            if track.gate_unusable() {
                self.singular_innovations += 1;
            }
        }

        // Association: confirmed before test, older (smaller id) first.
        // Tracks are stored in id order, so two ordered passes suffice.
        let mut claimed = vec![false; centroids.len()];
        let mut assoc: Vec<Option<usize>> = vec![None; self.tracks.len()];
        for pass_status in [TrackStatus::Confirmed, TrackStatus::Test] {
            for (ti, track) in self.tracks.iter().enumerate() {
                if track.status != pass_status {
                    continue;
                }
                let mut best: Option<(f64, usize)> = None;
                for (ci, &c) in centroids.iter().enumerate() {
                    if claimed[ci] {
                        continue;
                    }
                    if let Some(d2) = track.gate_distance(c) {
                        if d2 <= self.gamma && best.is_none_or(|(bd, _)| d2 < bd) {
                            best = Some((d2, ci));
                        }
                    }
                }
                if let Some((_, ci)) = best {
                    claimed[ci] = true;
                    assoc[ti] = Some(ci);
                }
            }
        }

        for (ti, slot) in assoc.iter().enumerate() {
            if let Some(ci) = slot {
                self.tracks[ti].update(centroids[*ci], t, &self.cfg);
            }
        }

        // M/N bookkeeping; collect removals.
        let mut dead = Vec::new();
        for (ti, track) in self.tracks.iter_mut().enumerate() {
            let was_confirmed = track.status == TrackStatus::Confirmed;
            match track.mn_step(assoc[ti].is_some(), &self.cfg) {
                MnDecision::Keep => {}
                MnDecision::Promote => result.promoted.push(track.id),
                MnDecision::Delete => {
                    if was_confirmed {
                        result.deleted.push(track.id);
                    }
                    dead.push(ti);
                }
            }
        }
        for &ti in dead.iter().rev() {
            self.tracks.remove(ti);
        }

        // Emissions from confirmed tracks updated this frame. `assoc` indices
        // are stale after removal, so re-derive from update timestamps.
        for track in &self.tracks {
            if track.status == TrackStatus::Confirmed && track.last_update_t == t {
                result.observations.push(TrackObservation {
                    id: track.id,
                    filtered: track.last_centroid,
                    measurement: track.last_measurement,
                });
            }
        }

        // Direct starting on this frame's unclaimed centroids against the
        // previous frame's unclaimed ones.
        let leftover: Vec<Vector3<f64>> = centroids
            .iter()
            .enumerate()
            .filter(|(ci, _)| !claimed[*ci])
            .map(|(_, &c)| c)
            .collect();
        for (pi, ci) in direct_start_pairs(&self.prev_leftover, &leftover, &self.cfg) {
            let id = self.next_id;
            self.next_id += 1;
            let mut track = Track::start(id, self.prev_leftover[pi], leftover[ci], t, &self.cfg);
            // Degenerate configs (n_window == 2) decide at birth.
            if track.history.len() >= self.cfg.n_window {
                let hits = track.hits_in_window();
                if hits >= self.cfg.m_confirm {
                    track.status = TrackStatus::Confirmed;
                    track.history.clear();
                    result.promoted.push(id);
                } else {
                    continue;
                }
            }
            self.tracks.push(track);
        }
        self.prev_leftover = leftover;

        result
    }
}
