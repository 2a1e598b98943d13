//! Welch power spectral density estimation.

use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| {
                    let s = (std::f64::consts::PI * i as f64 / n as f64).sin();
                    s * s
                })
                .collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether the series mean is removed before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detrend {
    None,
    Mean,
}

/// Unit of the frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyAxis {
    /// Index-sampled series: one sample per packet.
    CyclesPerPacket,
    /// Series resampled onto a uniform time grid.
    Hertz,
}

impl FrequencyAxis {
    pub fn label(self) -> &'static str {
        match self {
            FrequencyAxis::CyclesPerPacket => "cycles/packet",
            FrequencyAxis::Hertz => "Hz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchParams {
    pub segment_len: usize,
    /// Fraction of a segment shared with the next one, in [0, 1).
    pub overlap: f64,
    pub window: Window,
    pub detrend: Detrend,
}

impl Default for WelchParams {
    fn default() -> Self {
        WelchParams {
            segment_len: 1024,
            overlap: 0.5,
            window: Window::Hann,
            detrend: Detrend::Mean,
        }
    }
}

/// One-sided PSD estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdReport {
    pub frequencies: Vec<f64>,
    pub density: Vec<f64>,
    pub params: WelchParams,
    pub sample_rate: f64,
    pub axis: FrequencyAxis,
    pub segments: usize,
    /// Mean square of the series as it entered the estimator (after
    /// detrending); the variance when the series has zero mean.
    pub series_power: f64,
}

impl PsdReport {
    pub fn bin_width(&self) -> f64 {
        self.sample_rate / self.params.segment_len as f64
    }

    /// `Σ density · Δf`.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    /// Relative mismatch between [`total_power`](Self::total_power) and
    /// the series power. Zero when both are zero.
    pub fn parseval_residual(&self) -> f64 {
        let total = self.total_power();
        if self.series_power == 0.0 {
            return total.abs();
        }
        (total - self.series_power).abs() / self.series_power
    }

    /// Mean density over the lowest `fraction` of the non-DC bins.
    pub fn low_band_mean(&self, fraction: f64) -> f64 {
        let non_dc = self.density.len().saturating_sub(1);
        let count = ((non_dc as f64 * fraction).ceil() as usize).clamp(1, non_dc.max(1));
        let band = &self.density[1..=count.min(non_dc)];
        band.iter().sum::<f64>() / band.len() as f64
    }

    /// Index of the largest density bin.
    pub fn peak_bin(&self) -> usize {
        self.density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Averaged windowed periodogram. The density is one-sided and scaled so
/// that `Σ density · Δf` equals the mean square of the windowed segments
/// divided by the window's mean square, i.e. the series variance for a
/// stationary zero-mean series.
pub fn welch_psd(series: &[f64], sample_rate: f64, params: &WelchParams) -> Result<PsdReport, AnalysisError> {
    let n = params.segment_len;
    if n < 2 {
        return Err(AnalysisError::InvalidParameter(format!(
            "segment length {n} must be at least 2"
        )));
    }
    if !(0.0..1.0).contains(&params.overlap) {
        return Err(AnalysisError::InvalidParameter(format!(
            "overlap {} must be in [0, 1)",
            params.overlap
        )));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(AnalysisError::InvalidParameter(format!("sample rate {sample_rate}")));
    }
    if series.len() < n {
        return Err(AnalysisError::SeriesTooShort {
            len: series.len(),
            segment_len: n,
        });
    }

    let mean = match params.detrend {
        Detrend::None => 0.0,
        Detrend::Mean => series.iter().sum::<f64>() / series.len() as f64,
    };
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let series_power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;

    let window = params.window.coefficients(n);
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    // segments are spread evenly from the first sample to the last, so
    // the realized overlap is at least the requested one and no tail is
    // dropped
    let hop = (n - (params.overlap * n as f64).round() as usize).max(1);
    let span = x.len() - n;
    let segments = span.div_ceil(hop) + 1;
    let start = |s: usize| if segments == 1 { 0 } else { s * span / (segments - 1) };

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for s in 0..segments {
        let seg = &x[start(s)..start(s) + n];
        for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(v * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
    }

    let scale = 1.0 / (segments as f64 * sample_rate * window_energy);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            // the Nyquist bin of an even-length transform has no mirror
            let mirrored = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
            p * scale * if mirrored { 2.0 } else { 1.0 }
        })
        .collect();
    let frequencies = (0..bins).map(|k| k as f64 * sample_rate / n as f64).collect();

    Ok(PsdReport {
        frequencies,
        density,
        params: *params,
        sample_rate,
        axis: FrequencyAxis::CyclesPerPacket,
        segments,
        series_power,
    })
}

/// Linear interpolation of irregular samples `(times, values)` onto a
/// uniform grid starting at the earliest time. Samples are sorted by time
/// first; equal times keep their input order.
pub fn resample_uniform(times: &[f64], values: &[f64], rate_hz: f64) -> Result<Vec<f64>, AnalysisError> {
    if times.len() != values.len() {
        return Err(AnalysisError::LengthMismatch(times.len(), values.len()));
    }
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(AnalysisError::InvalidParameter(format!("resample rate {rate_hz}")));
    }
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let mut pts: Vec<(f64, f64)> = times.iter().copied().zip(values.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t0 = pts[0].0;
    let span = pts[pts.len() - 1].0 - t0;
    let count = (span * rate_hz).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for i in 0..count {
        let t = t0 + i as f64 / rate_hz;
        while j + 1 < pts.len() && pts[j + 1].0 <= t {
            j += 1;
        }
        let (ta, va) = pts[j];
        let v = match pts.get(j + 1) {
            Some(&(tb, vb)) if tb > ta => va + (vb - va) * (t - ta) / (tb - ta),
            _ => va,
        };
        out.push(v);
    }
    Ok(out)
}

/// Welch estimate of an irregularly sampled series after resampling it
/// onto a uniform grid at `rate_hz`. The frequency axis is in hertz.
pub fn welch_psd_resampled(
    times: &[f64],
    values: &[f64],
    rate_hz: f64,
    params: &WelchParams,
) -> Result<PsdReport, AnalysisError> {
    let grid = resample_uniform(times, values, rate_hz)?;
    let mut report = welch_psd(&grid, rate_hz, params)?;
    report.axis = FrequencyAxis::Hertz;
    Ok(report)
}
