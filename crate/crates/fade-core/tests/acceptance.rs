//! System-level acceptance checks for the detection chain. Every test
//! prints one `criterion N: PASS/FAIL` line (visible with `--nocapture`)
//! before asserting, so a full run reads as a scorecard.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::time::Instant;

use nalgebra::Vector3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use fade_core::clustering::{build_grid, cluster_frame, grid_cluster, ClusterConfig};
use fade_core::config::PipelineConfig;
use fade_core::detector::FallEvent;
use fade_core::eval::{match_events, Counts, EvalConfig};
use fade_core::frame::{frame_to_world, PointFrame, RadarPoint, SensorPose};
use fade_core::imm::{fit_quadratic, ImmConfig, ImmFilter, CA};
use fade_core::pipeline::FadePipeline;
use fade_core::sim::{
    simulate, synth_pointcloud, synth_trajectory, ActorSample, NoiseSpec, Scenario, TruthEvent,
};
use fade_core::stats::chi2_quantile;
use fade_core::tracking::{MnDecision, Track, Tracker, TrackerConfig};

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn report(criterion: usize, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

/// Simulate a scenario and push every frame through a default pipeline.
fn run_scenario_json(json: &str) -> (Vec<FallEvent>, Vec<TruthEvent>) {
    let scenario: Scenario = serde_json::from_str(json).expect("scenario json");
    let sim = simulate(&scenario).expect("simulate");
    let mut pipeline =
        FadePipeline::new(&PipelineConfig::default(), &sim.header).expect("pipeline");
    let mut events = Vec::new();
    for frame in &sim.frames {
        events.extend(pipeline.step(frame).events);
    }
    (events, sim.truth)
}

fn score(truth: &[TruthEvent], events: &[FallEvent]) -> Counts {
    Counts::from_outcome(&match_events(truth, events, &EvalConfig::default()))
}

// ---------------------------------------------------------------------------
// Criterion 1: end-to-end benchmark, 50 falls + 50 daily-motion scenarios
// ---------------------------------------------------------------------------

fn fall_scenario(i: usize) -> String {
    let accel = 5.0 + 4.0 * i as f64 / 49.0;
    let height = 1.5 + 0.2 * ((i * 7) % 11) as f64 / 10.0;
    let angle = std::f64::consts::TAU * i as f64 / 50.0;
    let radius = 1.2 + 2.0 * ((i * 3) % 7) as f64 / 6.0;
    let x = (radius * angle.cos()).clamp(-2.6, 2.6);
    let y = 3.2 + 1.8 * angle.sin();
    let pre = match i % 3 {
        0 => r#"{"kind": "stand", "duration": 1.6}"#.to_string(),
        1 => format!(
            r#"{{"kind": "stand", "duration": 0.6}},
               {{"kind": "walk", "duration": 2.0, "to": [{:.3}, {:.3}]}}"#,
            x + 0.9 * (angle + 1.0).cos(),
            y + 0.9 * (angle + 1.0).sin()
        ),
        _ => r#"{"kind": "stand", "duration": 1.1}"#.to_string(),
    };
    format!(
        r#"{{
            "seed": {seed},
            "duration": 7.0,
            "actors": [{{
                "start": [{x:.3}, {y:.3}],
                "height": {height:.3},
                "actions": [
                    {pre},
                    {{"kind": "fall", "accel": {accel:.3}, "rest_duration": 2.5}}
                ]
            }}]
        }}"#,
        seed = 1000 + i,
    )
}

fn adl_scenario(i: usize) -> String {
    let x = -2.2 + 4.4 * (i % 10) as f64 / 9.0;
    let y = 1.6 + 3.0 * ((i * 3) % 8) as f64 / 7.0;
    let (actions, duration) = match i % 5 {
        0 => (
            r#"{"kind": "stand", "duration": 1.0},
               {"kind": "sit", "duration": 1.4},
               {"kind": "stand", "duration": 1.5},
               {"kind": "rise", "duration": 1.4},
               {"kind": "stand", "duration": 1.0}"#
                .to_string(),
            8.0,
        ),
        1 => (
            r#"{"kind": "stand", "duration": 0.8},
               {"kind": "squat", "duration": 1.6},
               {"kind": "stand", "duration": 0.9},
               {"kind": "rise", "duration": 1.6, "raise": 0.6},
               {"kind": "stand", "duration": 0.8}"#
                .to_string(),
            8.0,
        ),
        2 => (
            format!(
                r#"{{"kind": "stand", "duration": 0.6}},
                   {{"kind": "walk", "duration": 3.0, "to": [{ax:.3}, {ay:.3}]}},
                   {{"kind": "stand", "duration": 0.7}},
                   {{"kind": "walk", "duration": 3.0, "to": [{x:.3}, {y:.3}]}},
                   {{"kind": "stand", "duration": 0.6}}"#,
                ax = x - 1.0,
                ay = y + 1.2,
            ),
            9.5,
        ),
        3 => (
            format!(
                r#"{{"kind": "stand", "duration": 0.7}},
                   {{"kind": "sit", "duration": 1.2}},
                   {{"kind": "stand", "duration": 2.0}},
                   {{"kind": "rise", "duration": 1.2}},
                   {{"kind": "walk", "duration": 2.5, "to": [{ax:.3}, {ay:.3}]}},
                   {{"kind": "stand", "duration": 0.6}}"#,
                ax = x + 1.0,
                ay = y + 1.0,
            ),
            9.5,
        ),
        _ => (
            format!(
                r#"{{"kind": "squat", "duration": 1.5}},
                   {{"kind": "rise", "duration": 1.5, "raise": 0.6}},
                   {{"kind": "walk", "duration": 2.8, "to": [{ax:.3}, {ay:.3}]}},
                   {{"kind": "sit", "duration": 1.3}},
                   {{"kind": "rise", "duration": 1.3}},
                   {{"kind": "stand", "duration": 0.5}}"#,
                ax = x + 1.1,
                ay = y + 1.1,
            ),
            10.0,
        ),
    };
    format!(
        r#"{{
            "seed": {seed},
            "duration": {duration:.1},
            "actors": [{{
                "start": [{x:.3}, {y:.3}],
                "actions": [{actions}]
            }}]
        }}"#,
        seed = 2000 + i,
    )
}

#[test]
fn c1_end_to_end_benchmark() {
    let start = Instant::now();
    let mut counts = Counts::default();
    for i in 0..50 {
        let (events, truth) = run_scenario_json(&fall_scenario(i));
        counts.add(&score(&truth, &events));
    }
    for i in 0..50 {
        let (events, truth) = run_scenario_json(&adl_scenario(i));
        assert!(truth.is_empty());
        counts.add(&score(&truth, &events));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let recall = counts.recall().unwrap_or(0.0);
    let precision = counts.precision().unwrap_or(0.0);
    let f1 = counts.f1().unwrap_or(0.0);
    let ok = recall >= 0.95 && precision >= 0.90 && f1 >= 0.92 && elapsed < 120.0;
    report(
        1,
        ok,
        &format!(
            "recall {recall:.4}, precision {precision:.4}, f1 {f1:.4}, \
             tp {} fp {} fn {}, {elapsed:.1}s",
            counts.true_positives, counts.false_positives, counts.false_negatives
        ),
    );
}

#[test]
fn probe_branch_states() {
    let json = fall_scenario(3);
    let scenario: Scenario = serde_json::from_str(&json).unwrap();
    let sim = simulate(&scenario).unwrap();
    let mut pipeline = FadePipeline::new(&PipelineConfig::default(), &sim.header).unwrap();
    let mut series = Vec::new();
    for frame in &sim.frames {
        for f in pipeline.step(frame).features {
            if f.track == 0 {
                series.push((f.t, f.z_meas));
            }
        }
    }
    let mut filter = ImmFilter::new(ImmConfig::default(), series[0].0, series[0].1).unwrap();
    for &(t, z) in &series[1..] {
        let out = filter.step(t, z);
        let st = filter.state();
        if (1.9..2.9).contains(&t) {
            println!(
                "t{t:.2} z{z:.2} mu_ca {:.3} | cv v {:+.2} | ca v {:+.2} a {:+.2} | comb v {:+.2} a {:+.2} input {} degen {}",
                out.mu[CA],
                st.models[0].x[1],
                st.models[1].x[1],
                st.models[1].x[2],
                out.v_hat,
                out.a_hat,
                out.applied_input,
                out.degenerate,
            );
        }
    }
}

#[test]
fn probe_c6_misses() {
    for n_actors in 1..=3usize {
        for seed in 0..20 {
            let json = multi_user_scenario(n_actors, seed);
            let (events, truth) = run_scenario_json(&json);
            let counts = score(&truth, &events);
            if counts.false_negatives > 0 || counts.false_positives > 0 {
                let times: Vec<String> = events.iter().map(|e| format!("{:.2}", e.t)).collect();
                let impacts: Vec<String> =
                    truth.iter().map(|t| format!("{:.2}", t.impact_t)).collect();
                println!(
                    "C6MISS n={n_actors} seed={seed} tp{} fp{} fn{} events[{}] impacts[{}] json={}",
                    counts.true_positives,
                    counts.false_positives,
                    counts.false_negatives,
                    times.join(","),
                    impacts.join(","),
                    json.replace(['\n', ' '], "")
                );
            }
        }
    }
}

#[test]
fn probe_cluster_stream() {
    let json = fall_scenario(24);
    let scenario: Scenario = serde_json::from_str(&json).unwrap();
    let sim = simulate(&scenario).unwrap();
    let ccfg = ClusterConfig::default();
    let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
    for frame in &sim.frames {
        let world = frame_to_world(&sim.header.pose, frame);
        let clusters = cluster_frame(&world.points, &ccfg);
        let centroids: Vec<Vector3<f64>> = clusters.iter().map(|c| c.centroid).collect();
        let step = tracker.step(frame.t, &centroids);
        if (1.7..2.9).contains(&frame.t) {
            let cz: Vec<String> = clusters
                .iter()
                .map(|c| format!("z{:.2}/n{}", c.centroid.z, c.points.len()))
                .collect();
            let obs: Vec<String> = step
                .observations
                .iter()
                .map(|o| format!("id{} z{:.2}", o.id, o.filtered.z))
                .collect();
            println!(
                "t{:.2} pts{} clusters[{}] obs[{}] promoted{:?} deleted{:?}",
                frame.t,
                frame.points.len(),
                cz.join(" "),
                obs.join(" "),
                step.promoted,
                step.deleted,
            );
        }
    }
}

#[test]
fn probe_c1_misses() {
    for i in 0..50 {
        let json = fall_scenario(i);
        let scenario: Scenario = serde_json::from_str(&json).unwrap();
        let sim = simulate(&scenario).unwrap();
        let mut pipeline =
            FadePipeline::new(&PipelineConfig::default(), &sim.header).unwrap();
        let mut events = Vec::new();
        let mut features = Vec::new();
        for frame in &sim.frames {
            let out = pipeline.step(frame);
            events.extend(out.events);
            features.extend(out.features);
        }
        let counts = score(&sim.truth, &events);
        if counts.false_negatives == 0 && counts.false_positives == 0 {
            continue;
        }
        let times: Vec<String> = events.iter().map(|e| format!("{:.2}", e.t)).collect();
        println!(
            "SCEN i={i} tp{} fp{} fn{} events[{}]",
            counts.true_positives,
            counts.false_positives,
            counts.false_negatives,
            times.join(",")
        );
        let accel = 5.0 + 4.0 * i as f64 / 49.0;
        let truth = &sim.truth[0];
        let vmin = features.iter().map(|f| f.v_hat).fold(0.0f64, f64::min);
        let mumax = features.iter().map(|f| f.mu_ca).fold(0.0f64, f64::max);
        let amin = features.iter().map(|f| f.a_hat).fold(0.0f64, f64::min);
        let near: Vec<String> = features
            .iter()
            .filter(|f| (f.t - truth.impact_t).abs() < 0.5)
            .map(|f| {
                format!(
                    "t{:.2} id{} zm{:.2} zh{:.2} v{:.2} a{:.2} mu{:.2}",
                    f.t, f.track, f.z_meas, f.z_hat, f.v_hat, f.a_hat, f.mu_ca
                )
            })
            .collect();
        println!(
            "MISS i={i} accel={accel:.2} h={:.3} pos=({:.2},{:.2}) impact={:.2} rows={} vmin={vmin:.2} amin={amin:.2} mumax={mumax:.2}",
            scenario.actors[0].height,
            scenario.actors[0].start[0],
            scenario.actors[0].start[1],
            truth.impact_t,
            features.len(),
        );
        for line in near {
            println!("    {line}");
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: two-model vertical filter beats a single CV filter
// ---------------------------------------------------------------------------

#[test]
fn c2_vertical_filter_beats_single_cv() {
    let t_frame = 0.05;
    let imm_cfg = ImmConfig::default();
    let cv_cfg = ImmConfig {
        transition: [[1.0, 0.0], [0.0, 1.0]],
        mu_init: [1.0, 0.0],
        ..ImmConfig::default()
    };
    let noise = Normal::new(0.0, 0.05).unwrap();

    let mut sq_imm = 0.0;
    let mut sq_cv = 0.0;
    let mut n_terms = 0usize;
    let mut switched = 0usize;
    let runs = 100;
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + run);
        // Constant height, then a constant-acceleration drop.
        let cv_frames = 30usize;
        let drop_frames = 12usize;
        let accel = 7.0;
        let truth: Vec<f64> = (0..=cv_frames + drop_frames)
            .map(|k| {
                if k <= cv_frames {
                    1.6
                } else {
                    let tau = (k - cv_frames) as f64 * t_frame;
                    1.6 - 0.5 * accel * tau * tau
                }
            })
            .collect();
        let meas: Vec<f64> = truth.iter().map(|z| z + noise.sample(&mut rng)).collect();

        let mut imm = ImmFilter::new(imm_cfg.clone(), 0.0, meas[0]).unwrap();
        let mut cv = ImmFilter::new(cv_cfg.clone(), 0.0, meas[0]).unwrap();
        let mut max_mu_ca: f64 = 0.0;
        for k in 1..meas.len() {
            let t = k as f64 * t_frame;
            let out_imm = imm.step(t, meas[k]);
            let out_cv = cv.step(t, meas[k]);
            sq_imm += (out_imm.z_hat - truth[k]).powi(2);
            sq_cv += (out_cv.z_hat - truth[k]).powi(2);
            n_terms += 1;
            if k > cv_frames {
                max_mu_ca = max_mu_ca.max(out_imm.mu[CA]);
            }
        }
        if max_mu_ca > 0.5 {
            switched += 1;
        }
    }
    let rmse_imm = (sq_imm / n_terms as f64).sqrt();
    let rmse_cv = (sq_cv / n_terms as f64).sqrt();
    let ok = rmse_imm < rmse_cv && switched >= 90;
    report(
        2,
        ok,
        &format!(
            "rmse imm {rmse_imm:.4} vs cv {rmse_cv:.4}, fall-phase switch in {switched}/{runs}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: wall-mirror ghosts stay unconfirmed, real actors confirm fast
// ---------------------------------------------------------------------------

#[test]
fn c3_ghost_suppression() {
    let actor_xy = (1.0, 3.0);
    let ghost_xy = (3.0, 3.0); // mirror across the x = 2 wall plane
    let seeds = 200u64;
    let mut ghost_confirmed = 0usize;
    let mut real_fast = 0usize;

    for seed in 0..seeds {
        let json = format!(
            r#"{{
                "seed": {},
                "duration": 3.0,
                "actors": [{{
                    "start": [{:.1}, {:.1}],
                    "actions": [{{"kind": "stand", "duration": 3.0}}]
                }}],
                "noise": {{
                    "ghost": {{
                        "wall_point": [2.0, 3.0, 0.0],
                        "wall_normal": [1.0, 0.0, 0.0],
                        "detection": 0.3
                    }}
                }}
            }}"#,
            4000 + seed,
            actor_xy.0,
            actor_xy.1
        );
        let scenario: Scenario = serde_json::from_str(&json).unwrap();
        let sim = simulate(&scenario).unwrap();

        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        let ccfg = ClusterConfig::default();
        let mut ghost_hit = false;
        let mut real_frame: Option<usize> = None;
        for (idx, frame) in sim.frames.iter().enumerate() {
            let world = frame_to_world(&sim.header.pose, frame);
            let centroids: Vec<Vector3<f64>> = cluster_frame(&world.points, &ccfg)
                .iter()
                .map(|c| c.centroid)
                .collect();
            let step = tracker.step(frame.t, &centroids);
            for id in &step.promoted {
                let Some(obs) = step.observations.iter().find(|o| o.id == *id) else {
                    continue;
                };
                let p = obs.filtered;
                if (p.x - ghost_xy.0).hypot(p.y - ghost_xy.1) < 0.7 {
                    ghost_hit = true;
                }
                if (p.x - actor_xy.0).hypot(p.y - actor_xy.1) < 0.7 && real_frame.is_none() {
                    real_frame = Some(idx);
                }
            }
        }
        ghost_confirmed += usize::from(ghost_hit);
        real_fast += usize::from(real_frame.is_some_and(|f| f <= 9));
    }

    let ok = (ghost_confirmed as f64) < 0.05 * seeds as f64 && real_fast >= 190;
    report(
        3,
        ok,
        &format!("ghost confirmed {ghost_confirmed}/{seeds}, real within 10 frames {real_fast}/{seeds}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: association gate covers its stated probability
// ---------------------------------------------------------------------------

#[test]
fn c4_gate_calibration() {
    let cfg = TrackerConfig::default();
    let mut track = Track::start(
        0,
        Vector3::new(1.0, 2.0, 1.0),
        Vector3::new(1.02, 2.03, 1.01),
        cfg.t_s,
        &cfg,
    );
    let (z_hat, s) = track.predict(&cfg);
    let chol = nalgebra::Cholesky::new(s).expect("innovation covariance is PD");
    let l = chol.l();

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let gamma = cfg.gate_gamma();
    let n = 10_000usize;
    let mut in_gate = 0usize;
    for _ in 0..n {
        let e = Vector3::new(
            std_normal.sample(&mut rng),
            std_normal.sample(&mut rng),
            std_normal.sample(&mut rng),
        );
        let z = z_hat + l * e;
        if track.gate_distance(z).unwrap() <= gamma {
            in_gate += 1;
        }
    }
    let frac = in_gate as f64 / n as f64;
    let ok = (frac - 0.99).abs() <= 0.03;
    report(4, ok, &format!("in-gate fraction {frac:.4} over {n} samples"));
}

// ---------------------------------------------------------------------------
// Criterion 5: cluster separation and the connected-components oracle
// ---------------------------------------------------------------------------

/// Independent reference: 8-connected components over occupied floor cells,
/// kept when some cell reaches the seed threshold and the total reaches the
/// final threshold.
fn cc_oracle(points: &[RadarPoint], cfg: &ClusterConfig) -> BTreeSet<Vec<usize>> {
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        let cell = (
            (p.x / cfg.cell_size).floor() as i64,
            (p.y / cfg.cell_size).floor() as i64,
        );
        cells.entry(cell).or_default().push(i);
    }
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    let mut out = BTreeSet::new();
    let keys: Vec<(i64, i64)> = cells.keys().copied().collect();
    for &start in &keys {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(cell) = stack.pop() {
            for di in -1..=1i64 {
                for dj in -1..=1i64 {
                    let n = (cell.0 + di, cell.1 + dj);
                    if (di != 0 || dj != 0) && cells.contains_key(&n) && seen.insert(n) {
                        comp.push(n);
                        stack.push(n);
                    }
                }
            }
        }
        let total: usize = comp.iter().map(|c| cells[c].len()).sum();
        let densest = comp.iter().map(|c| cells[c].len()).max().unwrap();
        if densest >= cfg.thre_starter && total >= cfg.thre_final {
            let mut idx: Vec<usize> = comp.iter().flat_map(|c| cells[c].iter().copied()).collect();
            idx.sort_unstable();
            out.insert(idx);
        }
    }
    out
}

fn random_frame(rng: &mut ChaCha8Rng) -> Vec<RadarPoint> {
    let mut points = Vec::new();
    let n_blobs = rng.random_range(0..=3usize);
    for _ in 0..n_blobs {
        let cx = rng.random_range(-3.0..3.0);
        let cy = rng.random_range(0.8..6.0);
        let cz = rng.random_range(0.3..1.8);
        let sigma = rng.random_range(0.15..0.45);
        let spread = Normal::new(0.0, sigma).unwrap();
        for _ in 0..rng.random_range(12..=70usize) {
            points.push(RadarPoint {
                x: cx + spread.sample(rng),
                y: cy + spread.sample(rng),
                z: cz + rng.random_range(-0.3..0.3),
                doppler: rng.random_range(-3.0..3.0),
                snr: rng.random_range(5.0..30.0),
            });
        }
    }
    for _ in 0..rng.random_range(0..=60usize) {
        points.push(RadarPoint {
            x: rng.random_range(-4.0..4.0),
            y: rng.random_range(0.5..7.0),
            z: rng.random_range(0.0..2.5),
            doppler: rng.random_range(-3.0..3.0),
            snr: rng.random_range(5.0..30.0),
        });
    }
    points.truncate(200);
    points
}

#[test]
fn c5_cluster_separation_and_oracle() {
    // Two torso-scatter actors 1 m apart moving in opposite directions.
    let noise: NoiseSpec =
        serde_json::from_str(r#"{"n_limb": 0, "clutter_rate": 0.0, "detection": 1.0}"#).unwrap();
    let pose = SensorPose::default();
    let actors = [
        ActorSample {
            t: 0.0,
            pos: Vector3::new(-0.5, 3.0, 1.2),
            vel: Vector3::new(0.0, 0.6, 0.0),
        },
        ActorSample {
            t: 0.0,
            pos: Vector3::new(0.5, 3.0, 1.2),
            vel: Vector3::new(0.0, -0.6, 0.0),
        },
    ];
    let ccfg = ClusterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let frames = 1000usize;
    let mut two = 0usize;
    let mut opposite = 0usize;
    for i in 0..frames {
        let pts = synth_pointcloud(&mut rng, &actors, &noise, &pose);
        let frame = PointFrame {
            index: i as u64,
            t: i as f64 * 0.05,
            points: pts,
        };
        let world = frame_to_world(&pose, &frame);
        let clusters = cluster_frame(&world.points, &ccfg);
        if clusters.len() == 2 {
            two += 1;
            if clusters[0].mean_doppler * clusters[1].mean_doppler < 0.0 {
                opposite += 1;
            }
        }
    }

    // Exact agreement with the reference on random frames.
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(56);
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let pts = random_frame(&mut oracle_rng);
        let grid = build_grid(&pts, ccfg.cell_size);
        let got: BTreeSet<Vec<usize>> = grid_cluster(&grid, &ccfg).into_iter().collect();
        if got != cc_oracle(&pts, &ccfg) {
            mismatches += 1;
        }
    }

    let ok = two >= 950 && opposite as f64 >= 0.9 * two as f64 && mismatches == 0;
    report(
        5,
        ok,
        &format!(
            "two clusters {two}/{frames}, opposite doppler {opposite}/{two}, \
             oracle mismatches {mismatches}/1000"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: recall holds up as the user count grows
// ---------------------------------------------------------------------------

fn multi_user_scenario(n_actors: usize, seed: usize) -> String {
    let xs = [-2.4, 0.0, 2.4];
    let mut actors = Vec::new();
    for k in 0..n_actors {
        let x = xs[k] + 0.3 * ((seed * 5 + k * 3) % 7) as f64 / 6.0;
        let y = 2.2 + 1.6 * ((seed * 3 + k) % 5) as f64 / 4.0;
        let height = 1.55 + 0.15 * ((seed + k) % 3) as f64 / 2.0;
        let accel = 6.5 + 1.5 * ((seed * 7 + k) % 5) as f64 / 4.0;
        let stand = 1.0 + 3.5 * k as f64;
        actors.push(format!(
            r#"{{
                "start": [{x:.3}, {y:.3}],
                "height": {height:.3},
                "actions": [
                    {{"kind": "stand", "duration": {stand:.2}}},
                    {{"kind": "fall", "accel": {accel:.3}, "rest_duration": 2.5}}
                ]
            }}"#
        ));
    }
    format!(
        r#"{{
            "seed": {},
            "duration": {:.1},
            "actors": [{}]
        }}"#,
        6000 + seed * 10 + n_actors,
        6.0 + 3.5 * (n_actors as f64 - 1.0),
        actors.join(",")
    )
}

#[test]
fn c6_multi_user_recall() {
    let mut recalls = Vec::new();
    let mut precisions = Vec::new();
    let mut detail = String::new();
    for n_actors in 1..=3usize {
        let mut counts = Counts::default();
        for seed in 0..20 {
            let (events, truth) = run_scenario_json(&multi_user_scenario(n_actors, seed));
            assert_eq!(truth.len(), n_actors);
            counts.add(&score(&truth, &events));
        }
        let recall = counts.recall().unwrap_or(0.0);
        let precision = counts.precision().unwrap_or(0.0);
        detail.push_str(&format!(
            "{n_actors} actors: recall {recall:.3} precision {precision:.3}; "
        ));
        recalls.push(recall);
        precisions.push(precision);
    }
    let ok = recalls[0] + 1e-12 >= recalls[1]
        && recalls[1] + 1e-12 >= recalls[2]
        && recalls[2] >= 0.80
        && precisions.iter().all(|&p| p >= 0.90);
    report(6, ok, detail.trim_end_matches("; "));
}

// ---------------------------------------------------------------------------
// Criterion 7: throughput budget and the dormant fast path
// ---------------------------------------------------------------------------

fn throughput_scenario(with_actors: bool) -> String {
    let actors = if with_actors {
        r#"[
            {"start": [-2.2, 2.2], "actions": [{"kind": "stand", "duration": 16.0}]},
            {"start": [0.0, 4.6], "actions": [{"kind": "stand", "duration": 16.0}]},
            {"start": [2.2, 2.8], "actions": [{"kind": "stand", "duration": 16.0}]}
        ]"#
    } else {
        "[]"
    };
    format!(
        r#"{{
            "seed": 77,
            "duration": 16.0,
            "actors": {actors},
            "noise": {{
                "n_torso": 88,
                "n_limb": 10,
                "detection": 1.0,
                "clutter_rate": 6.0
            }}
        }}"#
    )
}

fn mean_step_seconds(json: &str) -> (f64, f64) {
    let scenario: Scenario = serde_json::from_str(json).unwrap();
    let sim = simulate(&scenario).unwrap();
    let mut pipeline =
        FadePipeline::new(&PipelineConfig::default(), &sim.header).unwrap();
    let warmup = 20usize;
    let mut total = 0.0;
    let mut timed = 0usize;
    let mut points = 0usize;
    for (i, frame) in sim.frames.iter().enumerate() {
        let t0 = Instant::now();
        pipeline.step(frame);
        let dt = t0.elapsed().as_secs_f64();
        if i >= warmup {
            total += dt;
            timed += 1;
            points += frame.points.len();
        }
    }
    (total / timed as f64, points as f64 / timed as f64)
}

#[test]
fn c7_throughput() {
    let (busy_mean, busy_points) = mean_step_seconds(&throughput_scenario(true));
    let (empty_mean, _) = mean_step_seconds(&throughput_scenario(false));
    let busy_fps = 1.0 / busy_mean;
    let ok = (270.0..=330.0).contains(&busy_points)
        && busy_fps >= 200.0
        && empty_mean * 10.0 <= busy_mean;
    report(
        7,
        ok,
        &format!(
            "3 actors at {busy_points:.0} pts/frame: {busy_fps:.0} frames/s \
             ({:.3} ms); empty scene {:.4} ms ({:.0}x faster)",
            busy_mean * 1e3,
            empty_mean * 1e3,
            busy_mean / empty_mean
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: unit-level oracles behind the derived numbers
// ---------------------------------------------------------------------------

#[test]
fn c8_unit_oracles() {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    // Chi-squared quantiles against an independent statistics library.
    let mut chi_ok = true;
    for (p, k) in [(0.99, 3.0), (0.95, 3.0), (0.99, 1.0), (0.9, 2.0)] {
        let got = chi2_quantile(p, k as usize);
        let want = ChiSquared::new(k).unwrap().inverse_cdf(p);
        chi_ok &= (got - want).abs() < 1e-8;
    }

    // Closed-form drop kinematics against the simulator's ground truth.
    let scenario: Scenario = serde_json::from_str(
        r#"{
            "seed": 1,
            "duration": 4.0,
            "t_frame": 0.001,
            "actors": [{
                "start": [0.0, 3.0],
                "height": 0.95,
                "actions": [
                    {"kind": "stand", "duration": 1.0},
                    {"kind": "fall", "accel": 7.0}
                ]
            }],
            "noise": {"clutter_rate": 0.0}
        }"#,
    )
    .unwrap();
    let sim = simulate(&scenario).unwrap();
    let drop_time = (2.0f64 * 0.6 / 7.0).sqrt();
    let kin_ok = (sim.truth[0].impact_t - sim.truth[0].fall_start_t - drop_time).abs() < 1e-9;
    let (traj, _) = synth_trajectory(&scenario.actors[0], 0.001, 4.0).unwrap();
    let peak_speed = traj.iter().map(|s| -s.vel.z).fold(0.0f64, f64::max);
    let peak_want = 7.0 * drop_time; // 2.898275349237888 m/s
    let peak_ok = (peak_speed - peak_want).abs() < 0.01;

    // Quadratic refit recovers an exact polynomial.
    let samples: Vec<(f64, f64)> = (0..8)
        .map(|k| {
            let t = k as f64 * 0.05;
            (t, 2.0 - 3.0 * t + 4.0 * t * t)
        })
        .collect();
    let fit = fit_quadratic(&samples).unwrap();
    let t_last = 0.35;
    let fit_ok = (fit[0] - (2.0 - 3.0 * t_last + 4.0 * t_last * t_last)).abs() < 1e-9
        && (fit[1] - (-3.0 + 8.0 * t_last)).abs() < 1e-9
        && (fit[2] - 8.0).abs() < 1e-9;

    // Published ratio table reproduced to 4 decimal places.
    let counts = Counts {
        true_positives: 101,
        false_positives: 6,
        false_negatives: 4,
    };
    let round4 = |x: f64| (x * 1e4).round() / 1e4;
    let table_ok = round4(counts.precision().unwrap()) == 0.9439
        && round4(counts.recall().unwrap()) == 0.9619
        && round4(counts.f1().unwrap()) == 0.9528;

    let ok = chi_ok && kin_ok && peak_ok && fit_ok && table_ok;
    report(
        8,
        ok,
        &format!(
            "chi2 {chi_ok}, drop timing {kin_ok}, peak speed {peak_ok} \
             ({peak_speed:.6} vs {peak_want:.6}), quad fit {fit_ok}, ratio table {table_ok}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: randomized invariant suites, 10k cases each
// ---------------------------------------------------------------------------

fn suite_probability_closure(cases: usize) -> usize {
    let mut checked = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let steps = 50usize;
    while checked < cases {
        let mut z = rng.random_range(0.5..2.0);
        let mut filter = ImmFilter::new(ImmConfig::default(), 0.0, z).unwrap();
        for k in 1..=steps {
            z += rng.random_range(-0.2..0.2);
            let out = filter.step(k as f64 * 0.05, z);
            let sum: f64 = out.mu.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "mu sums to {sum}");
            assert!(out.mu.iter().all(|&m| (-1e-12..=1.0 + 1e-12).contains(&m)));
            checked += 1;
        }
    }
    checked
}

fn suite_psd_preservation(cases: usize) -> usize {
    let mut checked = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    let cfg = TrackerConfig::default();

    // Position tracker: predict/update cycles must keep covariance PSD.
    while checked < cases / 2 {
        let p0 = Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(1.0..6.0),
            rng.random_range(0.5..2.0),
        );
        let mut track = Track::start(0, p0, p0 + Vector3::new(0.02, 0.02, 0.0), cfg.t_s, &cfg);
        let mut pos = p0;
        for k in 2..102 {
            pos += Vector3::new(
                rng.random_range(-0.08..0.08),
                rng.random_range(-0.08..0.08),
                rng.random_range(-0.08..0.08),
            );
            track.predict(&cfg);
            track.update(pos, k as f64 * cfg.t_s, &cfg);
            let sym = (track.cov - track.cov.transpose()).norm();
            assert!(sym < 1e-9, "covariance asymmetry {sym}");
            let min_eig = track
                .cov
                .symmetric_eigenvalues()
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            assert!(min_eig > -1e-9, "negative eigenvalue {min_eig}");
            checked += 1;
        }
    }

    // Vertical filter: both model covariances stay PSD.
    let icfg = ImmConfig::default();
    while checked < cases {
        let mut z = rng.random_range(0.5..2.0);
        let mut filter = ImmFilter::new(icfg.clone(), 0.0, z).unwrap();
        for k in 1..=50 {
            z += rng.random_range(-0.3..0.3);
            filter.step(k as f64 * 0.05, z);
            for model in &filter.state().models {
                let min_eig = model
                    .p
                    .symmetric_eigenvalues()
                    .iter()
                    .fold(f64::INFINITY, |a, &b| a.min(b));
                assert!(min_eig > -1e-9, "negative model eigenvalue {min_eig}");
            }
            checked += 1;
        }
    }
    checked
}

fn suite_serialization_roundtrip(cases: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(93);
    for i in 0..cases {
        let value = match i % 4 {
            0 => serde_json::to_value(RadarPoint {
                x: rng.random_range(-8.0..8.0),
                y: rng.random_range(-8.0..8.0),
                z: rng.random_range(-1.0..3.0),
                doppler: rng.random_range(-9.0..9.0),
                snr: rng.random_range(0.1..40.0),
            })
            .unwrap(),
            1 => serde_json::to_value(FallEvent {
                track: rng.random_range(0..1000),
                t: rng.random_range(0.0..600.0),
                peak_velocity: rng.random_range(-9.0..0.0),
                peak_acceleration: rng.random_range(-20.0..0.0),
                peak_ca_probability: rng.random_range(0.0..1.0),
            })
            .unwrap(),
            2 => serde_json::to_value(TruthEvent {
                actor: rng.random_range(0..8),
                fall_start_t: rng.random_range(0.0..100.0),
                impact_t: rng.random_range(100.0..200.0),
            })
            .unwrap(),
            _ => {
                let points: Vec<RadarPoint> = (0..rng.random_range(0..5usize))
                    .map(|_| RadarPoint {
                        x: rng.random_range(-8.0..8.0),
                        y: rng.random_range(-8.0..8.0),
                        z: rng.random_range(-1.0..3.0),
                        doppler: rng.random_range(-9.0..9.0),
                        snr: rng.random_range(0.1..40.0),
                    })
                    .collect();
                serde_json::to_value(PointFrame {
                    index: rng.random_range(0..100000),
                    t: rng.random_range(0.0..600.0),
                    points,
                })
                .unwrap()
            }
        };
        let text = serde_json::to_string(&value).unwrap();
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value, back, "round-trip changed the record");
    }
    cases
}

/// Literal restatement of the confirmation/deletion bookkeeping, kept apart
/// from the tracker so drift in either shows up as disagreement.
struct MnReference {
    confirmed: bool,
    ring: VecDeque<bool>,
}

impl MnReference {
    fn new() -> MnReference {
        MnReference {
            confirmed: false,
            ring: VecDeque::from([true, true]),
        }
    }

    fn step(&mut self, hit: bool, cfg: &TrackerConfig) -> MnDecision {
        self.ring.push_back(hit);
        if !self.confirmed {
            if self.ring.len() < cfg.n_window {
                return MnDecision::Keep;
            }
            let hits = self.ring.iter().filter(|&&h| h).count();
            if hits >= cfg.m_confirm {
                self.confirmed = true;
                self.ring.clear();
                return MnDecision::Promote;
            }
            return MnDecision::Delete;
        }
        if self.ring.len() > cfg.delete_window {
            self.ring.pop_front();
        }
        if self.ring.len() == cfg.delete_window
            && self.ring.iter().filter(|&&h| h).count() < cfg.m_delete
        {
            return MnDecision::Delete;
        }
        MnDecision::Keep
    }
}

fn suite_mn_equivalence(cases: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(94);
    for _ in 0..cases {
        let n_window = rng.random_range(2..=8usize);
        let cfg = TrackerConfig {
            n_window,
            m_confirm: rng.random_range(1..=n_window),
            delete_window: rng.random_range(2..=12usize),
            m_delete: rng.random_range(1..=3usize),
            ..TrackerConfig::default()
        };
        let p = Vector3::new(1.0, 2.0, 1.0);
        let mut track = Track::start(0, p, p + Vector3::new(0.02, 0.0, 0.0), cfg.t_s, &cfg);
        let mut reference = MnReference::new();
        for _ in 0..25 {
            let hit = rng.random_bool(0.6);
            let got = track.mn_step(hit, &cfg);
            let want = reference.step(hit, &cfg);
            assert_eq!(got, want, "mn divergence under {cfg:?}");
            if got == MnDecision::Delete {
                break;
            }
        }
    }
    cases
}

#[test]
fn c9_invariant_suites() {
    let cases = 10_000usize;
    let closure = suite_probability_closure(cases);
    let psd = suite_psd_preservation(cases);
    let roundtrip = suite_serialization_roundtrip(cases);
    let mn = suite_mn_equivalence(cases);
    let ok = closure >= cases && psd >= cases && roundtrip >= cases && mn >= cases;
    report(
        9,
        ok,
        &format!(
            "probability closure {closure}, psd {psd}, serialization {roundtrip}, \
             mn equivalence {mn} cases"
        ),
    );
}
