//! Interacting-multiple-model estimation of vertical motion.
//!
//! Two scalar-measurement Kalman filters run side by side on the state
//! `[z, v, a]` of a tracked torso centroid's height:
//!
//! * a constant-velocity model for ordinary activity, whose transition
//!   zeroes the acceleration component every step, and
//! * a constant-acceleration model that integrates it, which dominates
//!   during a fall.
//!
//! Each frame the branches are re-mixed under a Markov model-switch matrix,
//! filtered against the new measurement, and re-weighted by their Gaussian
//! innovation likelihoods. Likelihood weighting runs in log space so a large
//! innovation can never underflow the posterior to all zeros.
//!
//! When the constant-acceleration posterior first crosses the switch
//! threshold, the recent measurement window is refit with a least-squares
//! quadratic and the gap between that fit and the branch estimate is fed
//! forward once as a control input, snapping both branches onto the
//! maneuver instead of waiting several frames for the gain to catch up.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};

use crate::error::{FadeError, Result};

/// Branch index aliases; the arrays below are always ordered this way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionModel {
    ConstantVelocity,
    ConstantAcceleration,
}

impl MotionModel {
    pub const fn index(self) -> usize {
        match self {
            MotionModel::ConstantVelocity => 0,
            MotionModel::ConstantAcceleration => 1,
        }
    }
}

pub const CV: usize = MotionModel::ConstantVelocity.index();
pub const CA: usize = MotionModel::ConstantAcceleration.index();

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImmConfig {
    /// Frame period in seconds. Wired from the stream header, not the config file.
    #[serde(skip)]
    pub t: f64,
    /// Row-stochastic model-switch matrix: `transition[i][j]` is the
    /// probability of moving from branch `i` to branch `j` between frames.
    pub transition: [[f64; 2]; 2],
    /// Diagonal process noise for the constant-velocity branch.
    pub q_cv: [f64; 3],
    /// Diagonal process noise for the constant-acceleration branch.
    pub q_ca: [f64; 3],
    /// Measurement variance of the height observation, m^2.
    pub r: f64,
    /// Measurements kept for the quadratic refit at a model switch.
    pub u_fit_window: usize,
    /// Initial branch probabilities.
    pub mu_init: [f64; 2],
    /// Constant-acceleration posterior that counts as a switch.
    pub switch_threshold: f64,
}

impl Default for ImmConfig {
    fn default() -> Self {
        ImmConfig {
            t: 0.05,
            transition: [[0.95, 0.05], [0.05, 0.95]],
            q_cv: [1e-4, 1e-3, 0.0],
            q_ca: [1e-4, 1e-2, 1.0],
            r: 0.001,
            u_fit_window: 8,
            mu_init: [0.9, 0.1],
            switch_threshold: 0.5,
        }
    }
}

impl ImmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(FadeError::Config("imm period must be positive".into()));
        }
        for row in &self.transition {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(FadeError::Config(
                    "model-switch probabilities must lie in [0,1]".into(),
                ));
            }
            if (row[0] + row[1] - 1.0).abs() > 1e-9 {
                return Err(FadeError::Config(
                    "model-switch matrix rows must sum to 1".into(),
                ));
            }
        }
        if self.q_cv.iter().chain(&self.q_ca).any(|&q| q < 0.0) {
            return Err(FadeError::Config("process noise must be nonnegative".into()));
        }
        if self.r <= 0.0 {
            return Err(FadeError::Config("measurement variance must be positive".into()));
        }
        if self.u_fit_window < 3 {
            return Err(FadeError::Config(
                "u_fit_window must hold at least 3 samples".into(),
            ));
        }
        if (self.mu_init[0] + self.mu_init[1] - 1.0).abs() > 1e-9
            || self.mu_init.iter().any(|&m| m < 0.0)
        {
            return Err(FadeError::Config("mu_init must be a distribution".into()));
        }
        if !(0.0 < self.switch_threshold && self.switch_threshold < 1.0) {
            return Err(FadeError::Config("switch_threshold must be in (0,1)".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Model matrices
// ---------------------------------------------------------------------------

/// Constant-velocity transition: position integrates velocity, acceleration
/// is forced to zero.
pub fn cv_transition(t: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0, t, 0.0, //
        0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0,
    )
}

/// Constant-acceleration transition.
pub fn ca_transition(t: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0, t, 0.5 * t * t, //
        0.0, 1.0, t, //
        0.0, 0.0, 1.0,
    )
}

fn diag(q: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(q[0], q[1], q[2]))
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ModelState {
    pub x: Vector3<f64>,
    pub p: Matrix3<f64>,
}

#[derive(Debug, Clone)]
pub struct ImmState {
    pub models: [ModelState; 2],
    /// Posterior branch probabilities, summing to 1.
    pub mu: [f64; 2],
    /// Probability-weighted combined estimate.
    pub combined: Vector3<f64>,
    pub combined_cov: Matrix3<f64>,
}

impl ImmState {
    /// Start both branches at rest at the first observed height.
    pub fn init(z0: f64, cfg: &ImmConfig) -> ImmState {
        let x = Vector3::new(z0, 0.0, 0.0);
        let p = Matrix3::from_diagonal(&Vector3::new(cfg.r, 1.0, 4.0));
        let models = [
            ModelState { x, p },
            ModelState { x, p },
        ];
        let mut state = ImmState {
            models,
            mu: cfg.mu_init,
            combined: x,
            combined_cov: p,
        };
        state.combine();
        state
    }

    fn combine(&mut self) {
        let mut x = Vector3::zeros();
        for j in 0..2 {
            x += self.mu[j] * self.models[j].x;
        }
        let mut p = Matrix3::zeros();
        for j in 0..2 {
            let d = self.models[j].x - x;
            p += self.mu[j] * (self.models[j].p + d * d.transpose());
        }
        self.combined = x;
        self.combined_cov = p;
    }
}

// ---------------------------------------------------------------------------
// The three IMM stages
// ---------------------------------------------------------------------------

/// Any predicted branch probability below this is treated as defunct.
const DEGENERATE_EPS: f64 = 1e-30;

#[derive(Debug, Clone)]
pub struct MixOutput {
    /// Per-branch mixed initial conditions for this step.
    pub models: [ModelState; 2],
    /// Predicted branch probabilities before seeing the measurement.
    pub c: [f64; 2],
    /// True when the probability mass collapsed and was reset.
    pub degenerate: bool,
}

/// Blend the branch posteriors under the model-switch matrix. A branch whose
/// predicted probability has vanished is mixed entirely from the surviving
/// prior weights so its state stays finite.
pub fn imm_mix(state: &ImmState, cfg: &ImmConfig) -> MixOutput {
    let g = &cfg.transition;
    let mut mu = state.mu;
    let mut c = [0.0; 2];
    for j in 0..2 {
        c[j] = g[0][j] * mu[0] + g[1][j] * mu[1];
    }
    let degenerate = c[0] + c[1] < DEGENERATE_EPS;
    if degenerate {
        mu = cfg.mu_init;
        for j in 0..2 {
            c[j] = g[0][j] * mu[0] + g[1][j] * mu[1];
        }
    }

    let mut models = [state.models[0].clone(), state.models[1].clone()];
    for j in 0..2 {
        // Conditional weights mu_{i|j}; if branch j is unreachable this
        // frame, fall back to the prior weights.
        let w = if c[j] < DEGENERATE_EPS {
            mu
        } else {
            [g[0][j] * mu[0] / c[j], g[1][j] * mu[1] / c[j]]
        };
        let mut x = Vector3::zeros();
        for i in 0..2 {
            x += w[i] * state.models[i].x;
        }
        let mut p = Matrix3::zeros();
        for i in 0..2 {
            let d = state.models[i].x - x;
            p += w[i] * (state.models[i].p + d * d.transpose());
        }
        models[j] = ModelState { x, p };
    }
    MixOutput { models, c, degenerate }
}

/// What one filter step produced, for logging and the fall decision.
#[derive(Debug, Clone, Copy)]
pub struct ImmOutput {
    pub z_hat: f64,
    pub v_hat: f64,
    pub a_hat: f64,
    pub mu: [f64; 2],
    /// True when a pending control input was consumed this step.
    pub applied_input: bool,
    /// True when the probability mass collapsed and was reset.
    pub degenerate: bool,
}

/// One full IMM cycle: mix, per-branch predict (with an optional one-shot
/// control input added to both branches), scalar update, likelihood
/// re-weighting in log space, and recombination.
pub fn imm_step(
    state: &mut ImmState,
    z: f64,
    u: Option<&Vector3<f64>>,
    cfg: &ImmConfig,
) -> ImmOutput {
    let mix = imm_mix(state, cfg);
    let f = [cv_transition(cfg.t), ca_transition(cfg.t)];
    let q = [diag(&cfg.q_cv), diag(&cfg.q_ca)];

    let mut log_w = [0.0f64; 2];
    for j in 0..2 {
        let mut x = f[j] * mix.models[j].x;
        if let Some(u) = u {
            x += u;
        }
        let mut p = f[j] * mix.models[j].p * f[j].transpose() + q[j];
        p = (p + p.transpose()) * 0.5;

        // Scalar update, H = [1 0 0].
        let s = p[(0, 0)] + cfg.r;
        let nu = z - x[0];
        let k = p.column(0) / s;
        x += k * nu;
        let mut ikh: Matrix3<f64> = Matrix3::identity();
        for row in 0..3 {
            ikh[(row, 0)] -= k[row];
        }
        p = ikh * p * ikh.transpose() + (k * cfg.r) * k.transpose();
        p = (p + p.transpose()) * 0.5;

        state.models[j] = ModelState { x, p };
        let log_like = -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + nu * nu / s);
        log_w[j] = log_like + if mix.c[j] > 0.0 { mix.c[j].ln() } else { f64::NEG_INFINITY };
    }

    // Normalize via log-sum-exp; a huge innovation cannot underflow both
    // weights because the shift is relative.
    let m = log_w[0].max(log_w[1]);
    if m.is_finite() {
        let w0 = (log_w[0] - m).exp();
        let w1 = (log_w[1] - m).exp();
        state.mu = [w0 / (w0 + w1), w1 / (w0 + w1)];
    } else {
        state.mu = cfg.mu_init;
    }
    state.combine();

    ImmOutput {
        z_hat: state.combined[0],
        v_hat: state.combined[1],
        a_hat: state.combined[2],
        mu: state.mu,
        applied_input: u.is_some(),
        degenerate: mix.degenerate,
    }
}

// ---------------------------------------------------------------------------
// Control-input estimation at a model switch
// ---------------------------------------------------------------------------

/// Least-squares quadratic through `(t, z)` samples, reported as the state
/// `[z, v, a]` it implies at the last sample time. None when fewer than
/// three distinct times are present.
pub fn fit_quadratic(samples: &[(f64, f64)]) -> Option<Vector3<f64>> {
    let t_last = samples.last()?.0;
    let mut distinct: Vec<f64> = samples.iter().map(|&(t, _)| t).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return None;
    }
    // Normal equations for z = c0 + c1*dt + c2*dt^2 with dt = t - t_last.
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for &(t, z) in samples {
        let dt = t - t_last;
        let row = Vector3::new(1.0, dt, dt * dt);
        ata += row * row.transpose();
        aty += row * z;
    }
    let c = ata.lu().solve(&aty)?;
    Some(Vector3::new(c[0], c[1], 2.0 * c[2]))
}

/// Control input that moves a branch from its own one-step extrapolation
/// onto the extrapolation of the fitted quadratic. Zero when the fit is
/// rank-deficient.
pub fn estimate_input_u(
    samples: &[(f64, f64)],
    x_ca: &Vector3<f64>,
    cfg: &ImmConfig,
) -> Vector3<f64> {
    match fit_quadratic(samples) {
        Some(fit) => {
            let f = ca_transition(cfg.t);
            f * fit - f * x_ca
        }
        None => Vector3::zeros(),
    }
}

// ---------------------------------------------------------------------------
// Streaming wrapper
// ---------------------------------------------------------------------------

/// Per-track IMM filter with the measurement window and one-shot input
/// estimation handled internally.
#[derive(Debug, Clone)]
pub struct ImmFilter {
    cfg: ImmConfig,
    state: ImmState,
    window: VecDeque<(f64, f64)>,
    pending_u: Option<Vector3<f64>>,
    prev_mu_ca: f64,
    degenerate_resets: u64,
}

impl ImmFilter {
    /// `z0` is the first observed height; filtering starts with the next
    /// measurement.
    pub fn new(cfg: ImmConfig, t0: f64, z0: f64) -> Result<ImmFilter> {
        cfg.validate()?;
        let state = ImmState::init(z0, &cfg);
        let mut window = VecDeque::with_capacity(cfg.u_fit_window);
        window.push_back((t0, z0));
        let prev_mu_ca = state.mu[CA];
        Ok(ImmFilter {
            cfg,
            state,
            window,
            pending_u: None,
            prev_mu_ca,
            degenerate_resets: 0,
        })
    }

    pub fn config(&self) -> &ImmConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ImmState {
        &self.state
    }

    pub fn degenerate_resets(&self) -> u64 {
        self.degenerate_resets
    }

    /// Filter one height measurement.
    pub fn step(&mut self, t: f64, z: f64) -> ImmOutput {
        let u = self.pending_u.take();
        let out = imm_step(&mut self.state, z, u.as_ref(), &self.cfg);
        if out.degenerate {
            self.degenerate_resets += 1;
        }

        if self.window.len() == self.cfg.u_fit_window {
            self.window.pop_front();
        }
        self.window.push_back((t, z));

        // A switch is the constant-acceleration posterior crossing the
        // threshold from below; arm the input for exactly one next step.
        let mu_ca = self.state.mu[CA];
        if self.prev_mu_ca < self.cfg.switch_threshold && mu_ca >= self.cfg.switch_threshold {
            let samples: Vec<(f64, f64)> = self.window.iter().copied().collect();
            self.pending_u = Some(estimate_input_u(
                &samples,
                &self.state.models[CA].x,
                &self.cfg,
            ));
        }
        self.prev_mu_ca = mu_ca;
        out
    }
}
