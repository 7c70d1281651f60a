//! Point-cloud frame model and JSONL stream I/O.
//!
//! A recording is one header line followed by one JSON object per frame:
//!
//! ```text
//! {"format":"fade-frames/1","t_frame":0.05,"pose":{"h":2.0,"theta":0.1745}}
//! {"frame":0,"t":0.0,"points":[{"x":0.1,"y":3.2,"z":-0.4,"v":-1.2,"snr":14.0}, ...]}
//! ```
//!
//! Point coordinates in the file are in the sensor frame (x right, y along
//! boresight, z up, origin at the radar). [`sensor_to_world`] lifts them into
//! room coordinates using the mounting pose from the header: a rotation by
//! `-theta` about the sensor x axis (the radar is tilted down by `theta`)
//! followed by a translation to the mounting height. Doppler and SNR are
//! invariant under that rigid motion and pass through untouched.
//!
//! Parsing is strict about structure (bad JSON, missing keys, non-finite
//! numbers and backwards timestamps are errors with line numbers) but
//! tolerant about physics: points beyond the radar's unambiguous range or
//! Doppler limits are silently dropped and only counted, since real front
//! ends emit such artifacts routinely.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{FadeError, Result};

/// Stream format tag expected in the header line.
pub const FORMAT_TAG: &str = "fade-frames/1";

/// Physical limits used to reject implausible points at parse time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarLimits {
    /// Maximum unambiguous range in meters.
    pub max_range: f64,
    /// Maximum unambiguous radial speed in m/s.
    pub max_doppler: f64,
}

impl Default for RadarLimits {
    fn default() -> Self {
        // 2.25 GHz sweep bandwidth front end: 7.28 m range, 8.5556 m/s
        // unambiguous Doppler.
        RadarLimits {
            max_range: 7.28,
            max_doppler: 8.5556,
        }
    }
}

/// One detected point in sensor or world coordinates (meters, m/s, dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Radial velocity; positive means receding from the sensor.
    #[serde(rename = "v")]
    pub doppler: f64,
    pub snr: f64,
}

impl RadarPoint {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn validate(&self, line: usize) -> Result<()> {
        let vals = [self.x, self.y, self.z, self.doppler, self.snr];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FadeError::malformed(line, "non-finite point field"));
        }
        if self.snr < 0.0 {
            return Err(FadeError::malformed(line, "negative snr"));
        }
        Ok(())
    }

    fn within(&self, limits: &RadarLimits) -> bool {
        self.position().norm() <= limits.max_range && self.doppler.abs() <= limits.max_doppler
    }
}

/// All points captured in one radar frame. `points` may be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFrame {
    #[serde(rename = "frame")]
    pub index: u64,
    pub t: f64,
    pub points: Vec<RadarPoint>,
}

/// Radar mounting pose: height above the floor and downward tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    /// Mounting height in meters.
    pub h: f64,
    /// Downward tilt in radians.
    pub theta: f64,
}

impl Default for SensorPose {
    fn default() -> Self {
        SensorPose { h: 2.0, theta: 0.1745 }
    }
}

/// Header line of a frame stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub format: String,
    /// Nominal frame period in seconds.
    pub t_frame: f64,
    pub pose: SensorPose,
}

impl Default for StreamHeader {
    fn default() -> Self {
        StreamHeader {
            format: FORMAT_TAG.to_string(),
            t_frame: 0.05,
            pose: SensorPose::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Coordinate transform
// ---------------------------------------------------------------------------

/// Map a sensor-frame position to world coordinates for the given pose.
///
/// World frame: z up from the floor, sensor above the origin. The transform
/// is the rigid motion `R_x(-theta) * p + (0, 0, h)`, so the sensor origin
/// itself maps to `(0, 0, h)`.
pub fn sensor_to_world(pose: &SensorPose, p: Vector3<f64>) -> Vector3<f64> {
    let (s, c) = pose.theta.sin_cos();
    Vector3::new(p.x, p.y * c + p.z * s, -p.y * s + p.z * c + pose.h)
}

/// Inverse of [`sensor_to_world`]; used when synthesizing sensor-frame files.
pub fn world_to_sensor(pose: &SensorPose, p: Vector3<f64>) -> Vector3<f64> {
    let (s, c) = pose.theta.sin_cos();
    let q = Vector3::new(p.x, p.y, p.z - pose.h);
    Vector3::new(q.x, q.y * c - q.z * s, q.y * s + q.z * c)
}

/// Transform every point of a frame into world coordinates.
pub fn frame_to_world(pose: &SensorPose, frame: &PointFrame) -> PointFrame {
    PointFrame {
        index: frame.index,
        t: frame.t,
        points: frame
            .points
            .iter()
            .map(|pt| {
                let w = sensor_to_world(pose, pt.position());
                RadarPoint {
                    x: w.x,
                    y: w.y,
                    z: w.z,
                    doppler: pt.doppler,
                    snr: pt.snr,
                }
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Stream reading
// ---------------------------------------------------------------------------

/// Incremental reader over a JSONL frame stream.
///
/// The header is consumed eagerly on construction; frames come out of the
/// iterator. A stream without a header line is accepted and gets
/// [`StreamHeader::default`], so hand-built frame-only files keep working.
pub struct FrameReader<R: BufRead> {
    source: std::iter::Enumerate<std::io::Lines<R>>,
    header: StreamHeader,
    limits: RadarLimits,
    /// First frame line if line 1 turned out not to be a header.
    pending: Option<(usize, String)>,
    last_index: Option<u64>,
    last_t: Option<f64>,
    rejected_points: usize,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        Self::with_limits(reader, RadarLimits::default())
    }

    pub fn with_limits(reader: R, limits: RadarLimits) -> Result<Self> {
        let mut source = reader.lines().enumerate();
        let mut header = StreamHeader::default();
        let mut pending = None;
        if let Some((idx, line)) = source.next() {
            let line_no = idx + 1;
            let text = line.map_err(|e| FadeError::io("<stream>", e))?;
            let looks_like_header = serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .is_some_and(|v| v.get("format").is_some());
            if looks_like_header {
                header = serde_json::from_str(&text)
                    .map_err(|e| FadeError::malformed(line_no, format!("bad header: {e}")))?;
                if header.format != FORMAT_TAG {
                    return Err(FadeError::malformed(
                        line_no,
                        format!("unsupported format {:?}", header.format),
                    ));
                }
                if !(header.t_frame.is_finite() && header.t_frame > 0.0) {
                    return Err(FadeError::malformed(line_no, "t_frame must be positive"));
                }
            } else {
                pending = Some((line_no, text));
            }
        }
        Ok(FrameReader {
            source,
            header,
            limits,
            pending,
            last_index: None,
            last_t: None,
            rejected_points: 0,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Points dropped so far for violating the radar's physical limits.
    pub fn rejected_points(&self) -> usize {
        self.rejected_points
    }

    fn parse_frame(&mut self, line_no: usize, text: &str) -> Result<PointFrame> {
        let mut frame: PointFrame = serde_json::from_str(text)
            .map_err(|e| FadeError::malformed(line_no, e.to_string()))?;
        if !frame.t.is_finite() {
            return Err(FadeError::malformed(line_no, "non-finite frame time"));
        }
        for p in &frame.points {
            p.validate(line_no)?;
        }
        let monotone = self.last_index.is_none_or(|last| frame.index > last)
            && self.last_t.is_none_or(|last| frame.t > last);
        if !monotone {
            return Err(FadeError::NonMonotoneTime { line: line_no });
        }
        self.last_index = Some(frame.index);
        self.last_t = Some(frame.t);
        let before = frame.points.len();
        frame.points.retain(|p| p.within(&self.limits));
        self.rejected_points += before - frame.points.len();
        Ok(frame)
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<PointFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some((line_no, text)) = self.pending.take() {
            return Some(self.parse_frame(line_no, &text));
        }
        loop {
            let (idx, line) = self.source.next()?;
            let line_no = idx + 1;
            let text = match line {
                Ok(t) => t,
                Err(e) => return Some(Err(FadeError::io("<stream>", e))),
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(self.parse_frame(line_no, &text));
        }
    }
}

/// Outcome of parsing a whole stream at once.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedStream {
    pub header: StreamHeader,
    pub frames: Vec<PointFrame>,
    /// Count of points dropped for exceeding the radar limits.
    pub rejected_points: usize,
}

/// Parse a complete frame stream. Empty input yields an empty frame list.
pub fn parse_frame_stream<R: BufRead>(reader: R) -> Result<ParsedStream> {
    let mut rd = FrameReader::new(reader)?;
    let mut frames = Vec::new();
    for frame in &mut rd {
        frames.push(frame?);
    }
    Ok(ParsedStream {
        header: rd.header().clone(),
        rejected_points: rd.rejected_points(),
        frames,
    })
}

/// Serialize a header plus frames back to JSONL. Inverse of parsing for any
/// stream that passed validation.
pub fn write_frame_stream<'a, W: Write>(
    mut out: W,
    header: &StreamHeader,
    frames: impl IntoIterator<Item = &'a PointFrame>,
) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for frame in frames {
        serde_json::to_writer(&mut out, frame)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
