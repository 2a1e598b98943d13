//! Packet departure schedules: frame-spread and on-off VBR video streams,
//! periodic streams, and frame-size traces (synthetic or loaded from file),
//! plus source-clock timestamping of departures.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::clock::{ClockError, ClockModel, SimTime, ATTOS_PER_SEC};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("payload size must be positive")]
    ZeroPayload,
    #[error("frame rate must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("transmission rate must be positive and finite, got {0} Hz")]
    InvalidTxRate(f64),
    #[error("interval must be positive and finite, got {0} s")]
    InvalidInterval(f64),
    #[error("frame {frame} needs {packets} packets but only {capacity} fit in one frame period")]
    Overload { frame: usize, packets: u64, capacity: u64 },
    #[error("invalid trace synthesis parameter: {0}")]
    InvalidSynthesis(String),
    #[error("departure {index} at {at} precedes the previous departure")]
    Unsorted { index: usize, at: SimTime },
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Clock(#[from] ClockError),
}

/// Frame sizes in bytes at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub frame_sizes: Vec<u64>,
    pub fps: f64,
}

impl FrameTrace {
    pub fn new(frame_sizes: Vec<u64>, fps: f64) -> Result<Self, TrafficError> {
        check_fps(fps)?;
        Ok(FrameTrace { frame_sizes, fps })
    }

    pub fn len(&self) -> usize {
        self.frame_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_sizes.is_empty()
    }

    pub fn mean_bytes(&self) -> f64 {
        if self.frame_sizes.is_empty() {
            return 0.0;
        }
        self.frame_sizes.iter().map(|&s| s as f64).sum::<f64>() / self.frame_sizes.len() as f64
    }

    fn frame_period(&self) -> SimTime {
        SimTime::from_attos((ATTOS_PER_SEC as f64 / self.fps).round() as i128)
    }
}

fn check_fps(fps: f64) -> Result<(), TrafficError> {
    if fps.is_finite() && fps > 0.0 {
        Ok(())
    } else {
        Err(TrafficError::InvalidFps(fps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Departure {
    pub time: SimTime,
    pub bytes: u32,
}

/// Departures in true time, non-decreasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DepartureSchedule {
    pub departures: Vec<Departure>,
}

impl DepartureSchedule {
    pub fn len(&self) -> usize {
        self.departures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.departures.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.departures.truncate(n);
    }

    pub fn times(&self) -> impl Iterator<Item = SimTime> + '_ {
        self.departures.iter().map(|d| d.time)
    }

    /// Mean gap between consecutive departures, in seconds.
    pub fn mean_interdeparture(&self) -> Option<f64> {
        let n = self.departures.len();
        if n < 2 {
            return None;
        }
        let span = self.departures[n - 1].time - self.departures[0].time;
        Some(span.as_secs_f64() / (n - 1) as f64)
    }

    /// Moves every departure to the next tick edge of `clock` (ticking at
    /// time zero), modelling a packetizer clocked by the source oscillator.
    pub fn align_to_ticks(&self, clock: &ClockModel) -> DepartureSchedule {
        DepartureSchedule {
            departures: self
                .departures
                .iter()
                .map(|d| Departure {
                    time: clock.next_tick_at_or_after(d.time),
                    bytes: d.bytes,
                })
                .collect(),
        }
    }
}

fn packet_sizes(frame_bytes: u64, payload: u64) -> impl Iterator<Item = u32> {
    let m = frame_bytes.div_ceil(payload);
    (0..m).map(move |j| {
        if j + 1 < m {
            payload as u32
        } else {
            (frame_bytes - payload * (m - 1)) as u32
        }
    })
}

/// Splits each frame into `ceil(S / payload)` packets spread evenly over
/// the frame period: packet `j` of `m` leaves at `nT + jT/m`.
pub fn generate_spread_stream(trace: &FrameTrace, payload_bytes: u64) -> Result<DepartureSchedule, TrafficError> {
    if payload_bytes == 0 {
        return Err(TrafficError::ZeroPayload);
    }
    check_fps(trace.fps)?;
    let period = trace.frame_period().attos();
    let mut departures = Vec::new();
    for (n, &size) in trace.frame_sizes.iter().enumerate() {
        let start = n as i128 * period;
        let m = size.div_ceil(payload_bytes) as i128;
        for (j, bytes) in packet_sizes(size, payload_bytes).enumerate() {
            departures.push(Departure {
                time: SimTime::from_attos(start + j as i128 * period / m),
                bytes,
            });
        }
    }
    Ok(DepartureSchedule { departures })
}

/// Sends each frame as a burst at `tx_rate_hz` starting at the frame
/// boundary, then stays idle until the next frame.
pub fn generate_onoff_stream(
    trace: &FrameTrace,
    payload_bytes: u64,
    tx_rate_hz: f64,
) -> Result<DepartureSchedule, TrafficError> {
    if payload_bytes == 0 {
        return Err(TrafficError::ZeroPayload);
    }
    check_fps(trace.fps)?;
    if !(tx_rate_hz.is_finite() && tx_rate_hz > 0.0) {
        return Err(TrafficError::InvalidTxRate(tx_rate_hz));
    }
    let period = trace.frame_period().attos();
    let spacing = (ATTOS_PER_SEC as f64 / tx_rate_hz).round() as i128;
    let capacity = (period / spacing) as u64;
    let mut departures = Vec::new();
    for (n, &size) in trace.frame_sizes.iter().enumerate() {
        let m = size.div_ceil(payload_bytes);
        if m > capacity {
            return Err(TrafficError::Overload {
                frame: n,
                packets: m,
                capacity,
            });
        }
        let start = n as i128 * period;
        for (j, bytes) in packet_sizes(size, payload_bytes).enumerate() {
            departures.push(Departure {
                time: SimTime::from_attos(start + j as i128 * spacing),
                bytes,
            });
        }
    }
    Ok(DepartureSchedule { departures })
}

/// `n` departures at `0, c, 2c, …`.
pub fn generate_periodic_stream(
    interval: f64,
    n: usize,
    payload_bytes: u32,
) -> Result<DepartureSchedule, TrafficError> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(TrafficError::InvalidInterval(interval));
    }
    let step = SimTime::from_secs_f64(interval)?.attos();
    Ok(DepartureSchedule {
        departures: (0..n)
            .map(|k| Departure {
                time: SimTime::from_attos(k as i128 * step),
                bytes: payload_bytes,
            })
            .collect(),
    })
}

/// Lognormal frame sizes with mean `mean_bytes`; `dispersion` is the
/// standard deviation of the log size. Sizes are rounded to whole bytes.
pub fn synthesize_vbr_trace(
    seed: u64,
    n_frames: usize,
    mean_bytes: f64,
    dispersion: f64,
    fps: f64,
) -> Result<FrameTrace, TrafficError> {
    check_fps(fps)?;
    if !(mean_bytes.is_finite() && mean_bytes > 0.0) {
        return Err(TrafficError::InvalidSynthesis(format!("mean_bytes {mean_bytes}")));
    }
    if !(dispersion.is_finite() && dispersion > 0.0) {
        return Err(TrafficError::InvalidSynthesis(format!("dispersion {dispersion}")));
    }
    let mu = mean_bytes.ln() - dispersion * dispersion / 2.0;
    let dist = LogNormal::new(mu, dispersion).map_err(|e| TrafficError::InvalidSynthesis(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame_sizes = (0..n_frames).map(|_| dist.sample(&mut rng).round() as u64).collect();
    Ok(FrameTrace { frame_sizes, fps })
}

/// Expected packets per frame, `E[ceil(round(X) / payload)]`, for lognormal
/// frame sizes `X` with the given mean and log-dispersion.
pub fn expected_packets_per_frame(mean_bytes: f64, dispersion: f64, payload_bytes: u64) -> f64 {
    let mu = mean_bytes.ln() - dispersion * dispersion / 2.0;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let payload = payload_bytes as f64;
    // E[N] = Σ_{j≥0} P(round(X) > j·payload) = Σ P(X ≥ j·payload + 0.5)
    let mut total = 0.0;
    for j in 0.. {
        let x = j as f64 * payload + 0.5;
        let tail = std_normal.sf((x.ln() - mu) / dispersion);
        total += tail;
        if tail < 1e-16 && j as f64 * payload > mean_bytes {
            break;
        }
    }
    total
}

/// Mean frame size that makes a lognormal VBR stream average
/// `target_interdeparture` seconds between packets.
pub fn mean_bytes_for_interdeparture(
    target_interdeparture: f64,
    fps: f64,
    payload_bytes: u64,
    dispersion: f64,
) -> Result<f64, TrafficError> {
    check_fps(fps)?;
    if payload_bytes == 0 {
        return Err(TrafficError::ZeroPayload);
    }
    let target_packets = 1.0 / (fps * target_interdeparture);
    if !(target_packets.is_finite() && target_packets > 0.0) || !(dispersion > 0.0) {
        return Err(TrafficError::InvalidSynthesis(format!(
            "interdeparture {target_interdeparture} s, dispersion {dispersion}"
        )));
    }
    let (mut lo, mut hi) = (1e-3, 1.0);
    while expected_packets_per_frame(hi, dispersion, payload_bytes) < target_packets {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_packets_per_frame(mid, dispersion, payload_bytes) < target_packets {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Parses the frame trace text format: a `fps=<real>` header line, then one
/// frame size in bytes per line. `#` starts a comment; blank lines are
/// ignored. Line numbers in errors are 1-based.
pub fn parse_frame_trace(text: &str) -> Result<FrameTrace, TrafficError> {
    let mut fps = None;
    let mut sizes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match fps {
            None => {
                let value = line
                    .strip_prefix("fps")
                    .map(str::trim_start)
                    .and_then(|rest| rest.strip_prefix('='))
                    .ok_or_else(|| TrafficError::Parse {
                        line: line_no,
                        message: format!("expected `fps=<rate>` header, found {line:?}"),
                    })?;
                let rate: f64 = value.trim().parse().map_err(|_| TrafficError::Parse {
                    line: line_no,
                    message: format!("invalid frame rate {:?}", value.trim()),
                })?;
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(TrafficError::Parse {
                        line: line_no,
                        message: format!("frame rate must be positive, got {rate}"),
                    });
                }
                fps = Some(rate);
            }
            Some(_) => {
                let size: u64 = line.parse().map_err(|_| TrafficError::Parse {
                    line: line_no,
                    message: format!("invalid frame size {line:?}"),
                })?;
                sizes.push(size);
            }
        }
    }
    let fps = fps.ok_or(TrafficError::Parse {
        line: 1,
        message: "missing `fps=<rate>` header".into(),
    })?;
    Ok(FrameTrace {
        frame_sizes: sizes,
        fps,
    })
}

pub fn load_frame_trace(path: impl AsRef<Path>) -> Result<FrameTrace, TrafficError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TrafficError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_frame_trace(&text)
}

/// A departure stamped with the source counter value at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StampedDeparture {
    pub seq: u64,
    pub time: SimTime,
    pub bytes: u32,
    pub ts_ticks: u64,
}

/// Samples the source counter (started at `initial_ticks` at time zero) at
/// each departure instant.
pub fn stamp_departures(
    schedule: &DepartureSchedule,
    source_clock: &ClockModel,
    initial_ticks: u64,
) -> Result<Vec<StampedDeparture>, TrafficError> {
    let mut counter = source_clock.counter_at(initial_ticks)?;
    let mut now = SimTime::ZERO;
    let mut out = Vec::with_capacity(schedule.len());
    for (index, d) in schedule.departures.iter().enumerate() {
        if d.time < now {
            return Err(TrafficError::Unsorted { index, at: d.time });
        }
        counter.advance_by(source_clock, d.time - now)?;
        now = d.time;
        out.push(StampedDeparture {
            seq: index as u64,
            time: d.time,
            bytes: d.bytes,
            ts_ticks: source_clock.snapshot_timestamp(&counter),
        });
    }
    Ok(out)
}
