//! Kinematic scene simulator producing radar point-cloud streams with
//! ground truth.
//!
//! A scenario scripts one or more actors as a sequence of actions. Each
//! action defines a closed-form torso trajectory, so fall timing and peak
//! speeds are exact, not integrated. Ordinary activities use smoothstep
//! position profiles (zero velocity at both ends); their peak speed is
//! validated against a 1.2 m/s everyday-motion bound. A fall plays out in
//! four phases:
//!
//! 1. a short pre-fall slump (balance loss) ending at zero velocity,
//! 2. constant downward acceleration until the torso reaches rest height,
//! 3. the impact, which stops motion instantly, and
//! 4. a lying-still phase.
//!
//! Ground truth records the start of phase 2 and the impact time. Around
//! each torso sample the point-cloud stage scatters body and limb points,
//! projects Doppler as the radial component of the torso velocity seen from
//! the sensor, thins by detection probability, adds uniform clutter with a
//! Poisson count, and optionally mirrors detections across a wall plane to
//! model multipath ghosts. Output is in the sensor frame, ready for the
//! same reader the live pipeline uses. Everything is driven by one seeded
//! generator: equal seeds give byte-identical streams.

use std::io::Write;

use nalgebra::Vector3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{FadeError, Result};
use crate::frame::{world_to_sensor, PointFrame, RadarPoint, SensorPose, StreamHeader};

/// Everyday motions must stay at or below this speed, m/s.
pub const ADL_SPEED_LIMIT: f64 = 1.2;
/// Free-fall acceleration; a scripted fall must stay strictly below it.
pub const GRAVITY: f64 = 9.81;
/// Duration of the pre-fall slump, seconds.
pub const PREFALL_DURATION: f64 = 0.2;
/// Height lost during the pre-fall slump, m.
pub const PREFALL_DROP: f64 = 0.05;

// ---------------------------------------------------------------------------
// Scenario schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Scene length in seconds.
    pub duration: f64,
    /// Frame period in seconds.
    #[serde(default = "default_t_frame")]
    pub t_frame: f64,
    #[serde(default)]
    pub pose: SensorPose,
    #[serde(default)]
    pub actors: Vec<ActorScript>,
    #[serde(default)]
    pub noise: NoiseSpec,
}

fn default_t_frame() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorScript {
    /// Ground-plane start position, m.
    pub start: [f64; 2],
    /// Standing torso height, m.
    #[serde(default = "default_height")]
    pub height: f64,
    pub actions: Vec<ActionSpec>,
}

fn default_height() -> f64 {
    1.6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionSpec {
    /// Hold still.
    Stand { duration: f64 },
    /// Walk a straight line to `to`, easing in and out.
    Walk { duration: f64, to: [f64; 2] },
    /// Lower the torso by `drop` and stay there.
    Sit {
        duration: f64,
        #[serde(default = "default_sit_drop")]
        drop: f64,
    },
    /// Raise the torso by `raise` (stand up from sitting).
    Rise {
        duration: f64,
        #[serde(default = "default_sit_drop")]
        raise: f64,
    },
    /// Dip down by `drop` and come back up within `duration`.
    Squat {
        duration: f64,
        #[serde(default = "default_squat_drop")]
        drop: f64,
    },
    /// Collapse: slump, accelerate down at `accel` until `rest_height`,
    /// stop, lie still for `rest_duration`.
    Fall {
        accel: f64,
        #[serde(default = "default_rest_height")]
        rest_height: f64,
        #[serde(default = "default_rest_duration")]
        rest_duration: f64,
    },
}

fn default_sit_drop() -> f64 {
    0.45
}

fn default_squat_drop() -> f64 {
    0.6
}

fn default_rest_height() -> f64 {
    0.3
}

fn default_rest_duration() -> f64 {
    1.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Per-point position jitter, m (standard deviation per axis).
    #[serde(default = "default_pos_sigma")]
    pub pos_sigma: f64,
    /// Doppler noise on body points, m/s.
    #[serde(default = "default_doppler_sigma")]
    pub doppler_sigma: f64,
    /// Extra Doppler spread on limb points, m/s.
    #[serde(default = "default_limb_doppler_sigma")]
    pub limb_doppler_sigma: f64,
    /// Probability each real point is detected in a frame.
    #[serde(default = "default_detection")]
    pub detection: f64,
    /// Mean clutter points per frame (Poisson).
    #[serde(default = "default_clutter_rate")]
    pub clutter_rate: f64,
    /// Torso points scattered per actor.
    #[serde(default = "default_n_torso")]
    pub n_torso: usize,
    /// Limb points scattered per actor.
    #[serde(default = "default_n_limb")]
    pub n_limb: usize,
    /// World-space box clutter is drawn from.
    #[serde(default)]
    pub bounds: Bounds,
    /// Multipath ghost model; absent means no wall.
    #[serde(default)]
    pub ghost: Option<GhostSpec>,
}

fn default_pos_sigma() -> f64 {
    0.03
}

fn default_doppler_sigma() -> f64 {
    0.15
}

fn default_limb_doppler_sigma() -> f64 {
    0.3
}

fn default_detection() -> f64 {
    0.95
}

fn default_clutter_rate() -> f64 {
    2.0
}

fn default_n_torso() -> usize {
    20
}

fn default_n_limb() -> usize {
    6
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            pos_sigma: default_pos_sigma(),
            doppler_sigma: default_doppler_sigma(),
            limb_doppler_sigma: default_limb_doppler_sigma(),
            detection: default_detection(),
            clutter_rate: default_clutter_rate(),
            n_torso: default_n_torso(),
            n_limb: default_n_limb(),
            bounds: Bounds::default(),
            ghost: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            x: [-4.0, 4.0],
            y: [0.5, 7.0],
            z: [0.0, 2.5],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhostSpec {
    /// A point on the reflecting wall plane, world coordinates.
    pub wall_point: [f64; 3],
    /// Wall plane normal (any nonzero vector).
    pub wall_normal: [f64; 3],
    /// Probability each detected real point also produces a mirrored ghost.
    pub detection: f64,
}

/// One scripted fall, as ground truth for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub actor: usize,
    /// Start of the constant-acceleration phase, seconds.
    pub fall_start_t: f64,
    /// Moment the torso reaches rest height, seconds.
    pub impact_t: f64,
}

// ---------------------------------------------------------------------------
// Trajectory synthesis
// ---------------------------------------------------------------------------

/// Torso center state at one frame.
#[derive(Debug, Clone, Copy)]
pub struct ActorSample {
    pub t: f64,
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
}

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

fn smoothstep_rate(u: f64) -> f64 {
    6.0 * u * (1.0 - u)
}

enum Segment {
    Hold {
        pos: Vector3<f64>,
    },
    /// Smoothstep glide between two points over the segment.
    Glide {
        from: Vector3<f64>,
        to: Vector3<f64>,
    },
    /// Constant downward acceleration from rest.
    Drop {
        top: Vector3<f64>,
        accel: f64,
    },
}

struct TimedSegment {
    t0: f64,
    t1: f64,
    seg: Segment,
}

impl TimedSegment {
    fn eval(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let len = self.t1 - self.t0;
        match &self.seg {
            Segment::Hold { pos } => (*pos, Vector3::zeros()),
            Segment::Glide { from, to } => {
                let u = ((t - self.t0) / len).clamp(0.0, 1.0);
                let d = to - from;
                (from + d * smoothstep(u), d * (smoothstep_rate(u) / len))
            }
            Segment::Drop { top, accel } => {
                let dt = (t - self.t0).clamp(0.0, len);
                (
                    Vector3::new(top.x, top.y, top.z - 0.5 * accel * dt * dt),
                    Vector3::new(0.0, 0.0, -accel * dt),
                )
            }
        }
    }
}

fn glide_peak_speed(from: &Vector3<f64>, to: &Vector3<f64>, duration: f64) -> f64 {
    // Smoothstep peaks at 1.5x the average rate.
    1.5 * (to - from).norm() / duration
}

fn build_segments(script: &ActorScript) -> Result<(Vec<TimedSegment>, Vec<TruthEvent>)> {
    let mut segs = Vec::new();
    let mut falls = Vec::new();
    let mut cursor = Vector3::new(script.start[0], script.start[1], script.height);
    if !(script.height > 0.2 && script.height < 2.5) {
        return Err(FadeError::InvalidScript(format!(
            "actor height {} m is not plausible",
            script.height
        )));
    }
    let mut t = 0.0;
    for (k, action) in script.actions.iter().enumerate() {
        let bad = |msg: String| Err(FadeError::InvalidScript(format!("action {k}: {msg}")));
        let mut push_glide = |t0: f64, dur: f64, from: Vector3<f64>, to: Vector3<f64>| {
            segs.push(TimedSegment {
                t0,
                t1: t0 + dur,
                seg: Segment::Glide { from, to },
            });
        };
        match *action {
            ActionSpec::Stand { duration } => {
                if duration <= 0.0 {
                    return bad("duration must be positive".into());
                }
                segs.push(TimedSegment {
                    t0: t,
                    t1: t + duration,
                    seg: Segment::Hold { pos: cursor },
                });
                t += duration;
            }
            ActionSpec::Walk { duration, to } => {
                if duration <= 0.0 {
                    return bad("duration must be positive".into());
                }
                let target = Vector3::new(to[0], to[1], cursor.z);
                let peak = glide_peak_speed(&cursor, &target, duration);
                if peak > ADL_SPEED_LIMIT + 1e-9 {
                    return bad(format!(
                        "walk peaks at {peak:.2} m/s, above the {ADL_SPEED_LIMIT} m/s limit"
                    ));
                }
                push_glide(t, duration, cursor, target);
                cursor = target;
                t += duration;
            }
            ActionSpec::Sit { duration, drop } => {
                if duration <= 0.0 || drop <= 0.0 {
                    return bad("duration and drop must be positive".into());
                }
                let target = cursor - Vector3::new(0.0, 0.0, drop);
                if target.z < 0.1 {
                    return bad("sit would push the torso into the floor".into());
                }
                if glide_peak_speed(&cursor, &target, duration) > ADL_SPEED_LIMIT + 1e-9 {
                    return bad("sit is too fast for an everyday motion".into());
                }
                push_glide(t, duration, cursor, target);
                cursor = target;
                t += duration;
            }
            ActionSpec::Rise { duration, raise } => {
                if duration <= 0.0 || raise <= 0.0 {
                    return bad("duration and raise must be positive".into());
                }
                let target = cursor + Vector3::new(0.0, 0.0, raise);
                if target.z > 2.5 {
                    return bad("rise exceeds a plausible standing height".into());
                }
                if glide_peak_speed(&cursor, &target, duration) > ADL_SPEED_LIMIT + 1e-9 {
                    return bad("rise is too fast for an everyday motion".into());
                }
                push_glide(t, duration, cursor, target);
                cursor = target;
                t += duration;
            }
            ActionSpec::Squat { duration, drop } => {
                if duration <= 0.0 || drop <= 0.0 {
                    return bad("duration and drop must be positive".into());
                }
                let half = duration / 2.0;
                let bottom = cursor - Vector3::new(0.0, 0.0, drop);
                if bottom.z < 0.1 {
                    return bad("squat would push the torso into the floor".into());
                }
                if glide_peak_speed(&cursor, &bottom, half) > ADL_SPEED_LIMIT + 1e-9 {
                    return bad("squat is too fast for an everyday motion".into());
                }
                push_glide(t, half, cursor, bottom);
                push_glide(t + half, half, bottom, cursor);
                t += duration;
            }
            ActionSpec::Fall {
                accel,
                rest_height,
                rest_duration,
            } => {
                if !(accel > 0.0) {
                    return bad("fall acceleration must be positive (downward)".into());
                }
                if accel >= GRAVITY {
                    return bad(format!(
                        "fall acceleration {accel} m/s^2 reaches free fall; bodies fall slower"
                    ));
                }
                if rest_duration < 0.0 {
                    return bad("rest_duration must be nonnegative".into());
                }
                let top = cursor - Vector3::new(0.0, 0.0, PREFALL_DROP);
                if rest_height >= top.z {
                    return bad("rest_height must lie below the pre-fall torso height".into());
                }
                push_glide(t, PREFALL_DURATION, cursor, top);
                t += PREFALL_DURATION;
                let fall_start_t = t;
                let fall_time = (2.0 * (top.z - rest_height) / accel).sqrt();
                segs.push(TimedSegment {
                    t0: t,
                    t1: t + fall_time,
                    seg: Segment::Drop { top, accel },
                });
                t += fall_time;
                falls.push(TruthEvent {
                    actor: 0, // caller fills in the index
                    fall_start_t,
                    impact_t: t,
                });
                cursor = Vector3::new(top.x, top.y, rest_height);
                if rest_duration > 0.0 {
                    segs.push(TimedSegment {
                        t0: t,
                        t1: t + rest_duration,
                        seg: Segment::Hold { pos: cursor },
                    });
                    t += rest_duration;
                }
            }
        }
    }
    Ok((segs, falls))
}

/// Sample an actor's torso trajectory on the frame grid. Returns the frame
/// samples and the actor's fall events (with `actor` left at 0).
pub fn synth_trajectory(
    script: &ActorScript,
    t_frame: f64,
    duration: f64,
) -> Result<(Vec<ActorSample>, Vec<TruthEvent>)> {
    if !(t_frame > 0.0 && t_frame.is_finite()) {
        return Err(FadeError::InvalidScript("t_frame must be positive".into()));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(FadeError::InvalidScript("duration must be positive".into()));
    }
    let (segs, falls) = build_segments(script)?;
    let n_frames = (duration / t_frame + 1e-9).floor() as usize + 1;
    let mut samples = Vec::with_capacity(n_frames);
    let mut si = 0usize;
    for k in 0..n_frames {
        let t = k as f64 * t_frame;
        while si < segs.len() && t >= segs[si].t1 {
            si += 1;
        }
        let (pos, vel) = if si < segs.len() && t >= segs[si].t0 {
            segs[si].eval(t)
        } else if let Some(last) = segs.last().filter(|_| si >= segs.len()) {
            // Script exhausted: hold the final state.
            (last.eval(last.t1).0, Vector3::zeros())
        } else {
            // Before the first segment or an empty script.
            (
                Vector3::new(script.start[0], script.start[1], script.height),
                Vector3::zeros(),
            )
        };
        samples.push(ActorSample { t, pos, vel });
    }
    Ok((samples, falls))
}

// ---------------------------------------------------------------------------
// Point-cloud synthesis
// ---------------------------------------------------------------------------

/// Reflect a point across the plane through `wall_point` with `wall_normal`.
pub fn mirror_across(
    p: Vector3<f64>,
    wall_point: Vector3<f64>,
    wall_normal: Vector3<f64>,
) -> Vector3<f64> {
    let n = wall_normal.normalize();
    p - 2.0 * (p - wall_point).dot(&n) * n
}

/// Reflect a velocity across the same plane (direction only).
pub fn mirror_velocity(v: Vector3<f64>, wall_normal: Vector3<f64>) -> Vector3<f64> {
    let n = wall_normal.normalize();
    v - 2.0 * v.dot(&n) * n
}

/// Radial speed of a point moving at `vel`, as the radar at `sensor_world`
/// measures it: positive means receding.
fn radial_speed(p: Vector3<f64>, vel: Vector3<f64>, sensor_world: Vector3<f64>) -> f64 {
    let r = p - sensor_world;
    let dist = r.norm();
    if dist < 1e-9 {
        0.0
    } else {
        vel.dot(&r) / dist
    }
}

fn sample_in_unit_ball(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

/// Generate one frame of sensor-frame points for the given actor states.
pub fn synth_pointcloud(
    rng: &mut ChaCha8Rng,
    actors: &[ActorSample],
    noise: &NoiseSpec,
    pose: &SensorPose,
) -> Vec<RadarPoint> {
    let sensor_world = Vector3::new(0.0, 0.0, pose.h);
    let pos_noise = Normal::new(0.0, noise.pos_sigma.max(1e-12)).unwrap();
    let doppler_noise = Normal::new(0.0, noise.doppler_sigma.max(1e-12)).unwrap();
    let limb_noise = Normal::new(0.0, noise.limb_doppler_sigma.max(1e-12)).unwrap();

    // (position, source velocity, doppler, snr) in world coordinates; the
    // velocity rides along so ghosts can mirror it.
    let mut world_points: Vec<(Vector3<f64>, Vector3<f64>, f64, f64)> = Vec::new();

    for actor in actors {
        // Torso scatter: ellipsoid around the center.
        for _ in 0..noise.n_torso {
            let e = sample_in_unit_ball(rng);
            let offset = Vector3::new(0.2 * e.x, 0.15 * e.y, 0.3 * e.z);
            let p = actor.pos
                + offset
                + Vector3::new(
                    pos_noise.sample(rng),
                    pos_noise.sample(rng),
                    pos_noise.sample(rng),
                );
            let d = radial_speed(p, actor.vel, sensor_world) + doppler_noise.sample(rng);
            let snr = (20.0 + 5.0 * pos_noise.sample(rng) / noise.pos_sigma.max(1e-12)).max(1.0);
            if rng.random_bool(noise.detection) {
                world_points.push((p, actor.vel, d, snr));
            }
        }
        // Limbs: wider scatter, extra Doppler spread from swing.
        for _ in 0..noise.n_limb {
            let e = sample_in_unit_ball(rng);
            let offset = Vector3::new(0.5 * e.x, 0.5 * e.y, 0.6 * e.z);
            let p = actor.pos + offset;
            let d = radial_speed(p, actor.vel, sensor_world)
                + doppler_noise.sample(rng)
                + limb_noise.sample(rng);
            let snr = (12.0 + 4.0 * pos_noise.sample(rng) / noise.pos_sigma.max(1e-12)).max(1.0);
            if rng.random_bool(noise.detection) {
                world_points.push((p, actor.vel, d, snr));
            }
        }
    }

    // Multipath ghosts: each detected body point may reflect once off the
    // wall, appearing mirrored with the mirrored velocity's radial speed.
    if let Some(ghost) = &noise.ghost {
        let wp = Vector3::from(ghost.wall_point);
        let wn = Vector3::from(ghost.wall_normal);
        let n_real = world_points.len();
        for i in 0..n_real {
            if rng.random_bool(ghost.detection) {
                let (p, vel, _, snr) = world_points[i];
                let gp = mirror_across(p, wp, wn);
                let gv = mirror_velocity(vel, wn);
                let gd = radial_speed(gp, gv, sensor_world) + doppler_noise.sample(rng);
                world_points.push((gp, gv, gd, snr * 0.6));
            }
        }
    }

    // Clutter: Poisson count, uniform in the bounds box, near-zero Doppler.
    let clutter_n = if noise.clutter_rate > 0.0 {
        Poisson::new(noise.clutter_rate).unwrap().sample(rng) as usize
    } else {
        0
    };
    for _ in 0..clutter_n {
        let p = Vector3::new(
            rng.random_range(noise.bounds.x[0]..noise.bounds.x[1]),
            rng.random_range(noise.bounds.y[0]..noise.bounds.y[1]),
            rng.random_range(noise.bounds.z[0]..noise.bounds.z[1]),
        );
        let d = doppler_noise.sample(rng) * 0.3;
        let snr = (8.0 + 3.0 * pos_noise.sample(rng) / noise.pos_sigma.max(1e-12)).max(1.0);
        world_points.push((p, Vector3::zeros(), d, snr));
    }

    world_points
        .into_iter()
        .map(|(p, _, d, snr)| {
            let s = world_to_sensor(pose, p);
            RadarPoint {
                x: s.x,
                y: s.y,
                z: s.z,
                doppler: d,
                snr,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Whole-scenario simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub header: StreamHeader,
    pub frames: Vec<PointFrame>,
    pub truth: Vec<TruthEvent>,
}

pub fn simulate(scenario: &Scenario) -> Result<SimOutput> {
    if let Some(ghost) = &scenario.noise.ghost {
        let n = Vector3::from(ghost.wall_normal);
        if n.norm() < 1e-9 {
            return Err(FadeError::InvalidScript(
                "ghost wall normal must be nonzero".into(),
            ));
        }
        if !(0.0..=1.0).contains(&ghost.detection) {
            return Err(FadeError::InvalidScript(
                "ghost detection must be a probability".into(),
            ));
        }
    }
    if !(0.0..=1.0).contains(&scenario.noise.detection) {
        return Err(FadeError::InvalidScript(
            "detection must be a probability".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut trajectories = Vec::new();
    let mut truth = Vec::new();
    for (idx, script) in scenario.actors.iter().enumerate() {
        let (samples, mut falls) = synth_trajectory(script, scenario.t_frame, scenario.duration)?;
        for f in &mut falls {
            f.actor = idx;
        }
        truth.extend(falls);
        trajectories.push(samples);
    }
    truth.sort_by(|a, b| {
        a.fall_start_t
            .partial_cmp(&b.fall_start_t)
            .unwrap()
            .then(a.actor.cmp(&b.actor))
    });

    let n_frames = trajectories
        .first()
        .map(|t| t.len())
        .unwrap_or_else(|| (scenario.duration / scenario.t_frame + 1e-9).floor() as usize + 1);
    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let t = k as f64 * scenario.t_frame;
        let at_t: Vec<ActorSample> = trajectories.iter().map(|traj| traj[k]).collect();
        let points = synth_pointcloud(&mut rng, &at_t, &scenario.noise, &scenario.pose);
        frames.push(PointFrame {
            index: k as u64,
            t,
            points,
        });
    }

    Ok(SimOutput {
        header: StreamHeader {
            format: crate::frame::FORMAT_TAG.to_string(),
            t_frame: scenario.t_frame,
            pose: scenario.pose.clone(),
        },
        frames,
        truth,
    })
}

/// Serialize ground truth as one JSON object per line.
pub fn write_truth<W: Write>(truth: &[TruthEvent], mut w: W) -> Result<()> {
    for event in truth {
        let line = serde_json::to_string(event)
            .map_err(|e| FadeError::Config(format!("truth serialization: {e}")))?;
        writeln!(w, "{line}").map_err(|e| FadeError::io("<truth>", e))?;
    }
    Ok(())
}

/// Parse ground truth written by [`write_truth`].
pub fn read_truth<R: std::io::BufRead>(r: R) -> Result<Vec<TruthEvent>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| FadeError::io("<truth>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TruthEvent = serde_json::from_str(&line)
            .map_err(|e| FadeError::malformed(i + 1, format!("truth event: {e}")))?;
        if !(event.fall_start_t.is_finite() && event.impact_t > event.fall_start_t) {
            return Err(FadeError::malformed(
                i + 1,
                "truth event times must be finite with impact after start",
            ));
        }
        out.push(event);
    }
    Ok(out)
}
