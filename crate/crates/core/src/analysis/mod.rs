//! Evaluation metrics: frequency error, noise components, spectra,
//! convergence and bias statistics.

mod psd;

pub use psd::{
    resample_uniform, welch_psd, welch_psd_resampled, Detrend, FrequencyAxis, PsdReport, WelchParams, Window,
};

use thiserror::Error;

use crate::channel::ScenarioGroundTruth;
use crate::clock::{tick_delta_signed, ClockError, PacketObservation};

/// Minimum sample count accepted by [`bias_test`].
pub const MIN_BIAS_SAMPLES: usize = 30;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series of length {len} is shorter than one segment of {segment_len}")]
    SeriesTooShort { len: usize, segment_len: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bias test needs at least {MIN_BIAS_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("observation refers to packet {seq} outside the ground truth")]
    UnknownPacket { seq: u64 },
    #[error(transparent)]
    Clock(#[from] ClockError),
}

/// Relative frequency error in parts per million.
pub fn freq_error_ppm(f_hat: f64, f_true: f64) -> f64 {
    debug_assert!(f_true > 0.0);
    (f_hat - f_true) / f_true * 1e6
}

/// Inverse of [`freq_error_ppm`].
pub fn ppm_to_freq(ppm: f64, f_true: f64) -> f64 {
    f_true * (1.0 + ppm * 1e-6)
}

/// Delay noise components seen by the estimators, in arrival order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoiseSeries {
    /// `d(k) − d(0)` in seconds, one entry per observation.
    pub relative_delay: Vec<f64>,
    /// Source-clock time of each observation relative to the first, in
    /// seconds (from the unwrapped timestamps).
    pub source_time: Vec<f64>,
    /// `Δd / Δt_s`, dimensionless, one entry per consecutive pair with a
    /// nonzero timestamp gap.
    pub delay_rate: Vec<f64>,
    /// Source time of the later packet of each `delay_rate` pair.
    pub delay_rate_time: Vec<f64>,
    /// Pairs dropped from `delay_rate` for a zero timestamp gap.
    pub skipped: usize,
}

/// Builds both noise series from ground-truth delays for an observed
/// stream. The first observation is the reference packet.
pub fn noise_series(
    truth: &ScenarioGroundTruth,
    observations: &[PacketObservation],
    source_width: u32,
) -> Result<NoiseSeries, AnalysisError> {
    let delays = observations
        .iter()
        .map(|o| {
            truth
                .delays
                .get(o.seq as usize)
                .copied()
                .ok_or(AnalysisError::UnknownPacket { seq: o.seq })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut gaps = Vec::with_capacity(observations.len().saturating_sub(1));
    for w in observations.windows(2) {
        gaps.push(tick_delta_signed(w[0].ts_ticks, w[1].ts_ticks, source_width)? as f64 / truth.source_hz);
    }
    Ok(noise_from_delays(&delays, &gaps))
}

/// Noise series from per-observation delays and the source-time gaps
/// between consecutive observations (`gaps.len() == delays.len() − 1`).
pub fn noise_from_delays(delays: &[f64], gaps: &[f64]) -> NoiseSeries {
    let Some(&d0) = delays.first() else {
        return NoiseSeries::default();
    };
    let mut out = NoiseSeries {
        relative_delay: delays.iter().map(|d| d - d0).collect(),
        source_time: Vec::with_capacity(delays.len()),
        ..NoiseSeries::default()
    };
    let mut t = 0.0;
    out.source_time.push(t);
    for (w, &gap) in delays.windows(2).zip(gaps) {
        t += gap;
        out.source_time.push(t);
        if gap == 0.0 {
            out.skipped += 1;
        } else {
            out.delay_rate.push((w[1] - w[0]) / gap);
            out.delay_rate_time.push(t);
        }
    }
    out
}

/// First index `k` such that `|errors[k..k + hold]|` all lie within
/// `threshold`. Unavailable entries (NaN) never count as within. `None`
/// when no such window exists.
pub fn convergence_time(errors: &[f64], threshold: f64, hold: usize) -> Result<Option<usize>, AnalysisError> {
    if !(threshold > 0.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "threshold {threshold} must be positive"
        )));
    }
    if hold == 0 {
        return Err(AnalysisError::InvalidParameter("hold count must be at least 1".into()));
    }
    let mut run = 0;
    for (k, e) in errors.iter().enumerate() {
        if e.abs() <= threshold {
            run += 1;
            if run == hold {
                return Ok(Some(k + 1 - hold));
            }
        } else {
            run = 0;
        }
    }
    Ok(None)
}

/// First index after which every entry stays within `threshold`.
pub fn settles_at(errors: &[f64], threshold: f64) -> Option<usize> {
    let last_bad = errors.iter().rposition(|e| !(e.abs() <= threshold));
    match last_bad {
        None if errors.is_empty() => None,
        None => Some(0),
        Some(i) if i + 1 < errors.len() => Some(i + 1),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasTest {
    pub n: usize,
    /// Sample mean minus the reference value.
    pub deviation: f64,
    /// Sample standard deviation over `√n`.
    pub std_error: f64,
    /// `deviation / std_error`; zero when both vanish.
    pub z: f64,
}

/// One-sample location test of `values` against `reference`.
pub fn bias_test(values: &[f64], reference: f64) -> Result<BiasTest, AnalysisError> {
    let n = values.len();
    if n < MIN_BIAS_SAMPLES {
        return Err(AnalysisError::TooFewSamples(n));
    }
    // shifted by the first sample so a constant series has an exact mean
    let pivot = values[0];
    let shift = values.iter().map(|v| v - pivot).sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - pivot - shift).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std_error = (var / n as f64).sqrt();
    let deviation = (pivot - reference) + shift;
    let z = if deviation == 0.0 { 0.0 } else { deviation / std_error };
    Ok(BiasTest {
        n,
        deviation,
        std_error,
        z,
    })
}

/// Pearson correlation; `None` when either side is constant.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
