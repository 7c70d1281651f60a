//! `fade`: scenario simulation, the detection pipeline, and event scoring
//! from the command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration problems, 2 for
//! malformed or inconsistent data files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use fade_core::config::PipelineConfig;
use fade_core::error::FadeError;
use fade_core::eval::{evaluate, read_events, write_events, EvalConfig, MetricsReport};
use fade_core::frame::{write_frame_stream, FrameReader};
use fade_core::pipeline::{run_pipeline, write_features_csv, write_timing_csv, RunOutput};
use fade_core::sim::{read_truth, simulate, write_truth, Scenario, SimOutput, TruthEvent};

#[derive(Parser)]
#[command(name = "fade", version, about = "Radar point-cloud fall detection")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a scripted scenario into a frame stream plus ground truth.
    Simulate {
        /// Scenario script, JSON.
        #[arg(long)]
        scenario: PathBuf,
        /// Where to write the frame stream, JSONL.
        #[arg(long)]
        out_frames: PathBuf,
        /// Where to write ground-truth fall events, JSONL.
        #[arg(long)]
        out_truth: PathBuf,
    },
    /// Run the detection pipeline over a frame stream.
    Run {
        /// Input frame stream, JSONL.
        #[arg(long)]
        frames: PathBuf,
        /// Pipeline configuration, JSON. Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write detected fall events, JSONL.
        #[arg(long)]
        out_events: PathBuf,
        /// Optional per-frame, per-track estimate log, CSV.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Optional per-frame processing times, CSV.
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Score detected events against ground truth; metrics JSON on stdout.
    Eval {
        /// Detected events, JSONL.
        #[arg(long)]
        events: PathBuf,
        /// Ground-truth events, JSONL.
        #[arg(long)]
        truth: PathBuf,
        /// Match tolerance in seconds around each truth fall's window.
        #[arg(long, default_value_t = 2.0)]
        tol: f64,
    },
    /// Simulate, run and score in one go; metrics JSON on stdout.
    All {
        /// Scenario script, JSON.
        #[arg(long)]
        scenario: PathBuf,
        /// Pipeline configuration, JSON. Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Match tolerance in seconds around each truth fall's window.
        #[arg(long, default_value_t = 2.0)]
        tol: f64,
        /// Optionally keep the generated frame stream, JSONL.
        #[arg(long)]
        out_frames: Option<PathBuf>,
        /// Optionally keep the ground truth, JSONL.
        #[arg(long)]
        out_truth: Option<PathBuf>,
        /// Optionally keep the detected events, JSONL.
        #[arg(long)]
        out_events: Option<PathBuf>,
        /// Optional per-frame, per-track estimate log, CSV.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Optional per-frame processing times, CSV.
        #[arg(long)]
        timing: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fade: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), FadeError> {
    match cmd {
        Cmd::Simulate {
            scenario,
            out_frames,
            out_truth,
        } => {
            let sim = simulate(&load_scenario(&scenario)?)?;
            write_frames_file(&out_frames, &sim)?;
            write_truth_file(&out_truth, &sim.truth)?;
            Ok(())
        }
        Cmd::Run {
            frames,
            config,
            out_events,
            features,
            timing,
        } => {
            let cfg = load_config(config.as_deref())?;
            let file = open(&frames)?;
            let reader = FrameReader::with_limits(BufReader::new(file), cfg.limits)?;
            let out = run_pipeline(&cfg, reader)?;
            write_run_outputs(&out, &out_events, features.as_deref(), timing.as_deref())
        }
        Cmd::Eval {
            events,
            truth,
            tol,
        } => {
            let events = read_events(BufReader::new(open(&events)?))?;
            let truth = read_truth(BufReader::new(open(&truth)?))?;
            print_report(&evaluate(&truth, &events, &eval_cfg(tol)?))
        }
        Cmd::All {
            scenario,
            config,
            tol,
            out_frames,
            out_truth,
            out_events,
            features,
            timing,
        } => {
            let eval_cfg = eval_cfg(tol)?;
            let cfg = load_config(config.as_deref())?;
            let sim = simulate(&load_scenario(&scenario)?)?;
            if let Some(path) = &out_frames {
                write_frames_file(path, &sim)?;
            }
            if let Some(path) = &out_truth {
                write_truth_file(path, &sim.truth)?;
            }

            // Round-trip through the serialized form so `all` exercises the
            // exact same parse path as `run` on files.
            let mut stream = Vec::new();
            write_frame_stream(&mut stream, &sim.header, &sim.frames)
                .map_err(|e| FadeError::io("<memory>", e))?;
            let reader = FrameReader::with_limits(stream.as_slice(), cfg.limits)?;
            let out = run_pipeline(&cfg, reader)?;

            if let Some(path) = &out_events {
                write_run_outputs(&out, path, features.as_deref(), timing.as_deref())?;
            } else {
                write_optional_logs(&out, features.as_deref(), timing.as_deref())?;
            }
            let mut report = evaluate(&sim.truth, &out.events, &eval_cfg);
            report.timing = Some(out.timing);
            print_report(&report)
        }
    }
}

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

fn open(path: &Path) -> Result<File, FadeError> {
    File::open(path).map_err(|e| FadeError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, FadeError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| FadeError::io(path, e))
}

fn load_scenario(path: &Path) -> Result<Scenario, FadeError> {
    let file = open(path)?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| FadeError::InvalidScript(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, FadeError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(path) => {
            let file = open(path)?;
            PipelineConfig::from_reader(BufReader::new(file))
                .map_err(|e| match e {
                    FadeError::Config(msg) => {
                        FadeError::Config(format!("{}: {msg}", path.display()))
                    }
                    other => other,
                })
        }
    }
}

fn eval_cfg(tol: f64) -> Result<EvalConfig, FadeError> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(FadeError::Config(format!(
            "match tolerance must be finite and nonnegative, got {tol}"
        )));
    }
    Ok(EvalConfig { tolerance: tol })
}

fn write_frames_file(path: &Path, sim: &SimOutput) -> Result<(), FadeError> {
    let mut w = create(path)?;
    write_frame_stream(&mut w, &sim.header, &sim.frames).map_err(|e| FadeError::io(path, e))?;
    w.flush().map_err(|e| FadeError::io(path, e))
}

fn write_truth_file(path: &Path, truth: &[TruthEvent]) -> Result<(), FadeError> {
    let mut w = create(path)?;
    write_truth(truth, &mut w)?;
    w.flush().map_err(|e| FadeError::io(path, e))
}

fn write_run_outputs(
    out: &RunOutput,
    out_events: &Path,
    features: Option<&Path>,
    timing: Option<&Path>,
) -> Result<(), FadeError> {
    let mut w = create(out_events)?;
    write_events(&out.events, &mut w)?;
    w.flush().map_err(|e| FadeError::io(out_events, e))?;
    write_optional_logs(out, features, timing)
}

fn write_optional_logs(
    out: &RunOutput,
    features: Option<&Path>,
    timing: Option<&Path>,
) -> Result<(), FadeError> {
    if let Some(path) = features {
        let mut w = create(path)?;
        write_features_csv(&out.features, &mut w)?;
        w.flush().map_err(|e| FadeError::io(path, e))?;
    }
    if let Some(path) = timing {
        let mut w = create(path)?;
        write_timing_csv(&out.frame_times_s, &mut w)?;
        w.flush().map_err(|e| FadeError::io(path, e))?;
    }
    Ok(())
}

fn print_report(report: &MetricsReport) -> Result<(), FadeError> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| FadeError::Config(format!("report serialization: {e}")))?;
    println!("{text}");
    Ok(())
}
