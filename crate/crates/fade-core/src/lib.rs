//! Radar fall detection on point-cloud streams.
//!
//! The processing chain mirrors a deployed indoor mmWave setup:
//!
//! 1. [`frame`] — JSONL frame I/O and the sensor-to-world pose transform.
//! 2. [`clustering`] — occupancy-grid clustering plus Doppler-based torso
//!    extraction, one centroid per person per frame.
//! 3. [`tracking`] — multi-target tracker: two-frame direct starting,
//!    M/N-logic confirmation, chi-squared-gated nearest-neighbor association
//!    and a constant-velocity Kalman filter per track.
//! 4. [`imm`] + [`detector`] — per-track interacting-multiple-model filter on
//!    the vertical coordinate (constant-velocity vs constant-acceleration
//!    motion) feeding a sliding-window threshold decision that reports falls.
//! 5. [`sim`] — a scripted kinematic scenario simulator that produces frame
//!    streams with scatter, clutter and wall-mirror ghosts for benchmarks.
//! 6. [`eval`] — event matching against ground truth and precision/recall
//!    metrics.
//!
//! [`pipeline`] wires 1-4 together behind one streaming struct and the file
//!-level entry points used by the `fade` CLI.

pub mod clustering;
pub mod config;
pub mod detector;
pub mod error;
pub mod eval;
pub mod frame;
pub mod imm;
pub mod pipeline;
pub mod sim;
pub mod stats;
pub mod tracking;

pub use error::{FadeError, Result};
