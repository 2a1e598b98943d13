//! Flat `section.key = value` scenario configuration.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::analysis::{Detrend, WelchParams, Window};
use crate::channel::DelayModel;
use crate::clock::{MAX_COUNTER_WIDTH, MIN_COUNTER_WIDTH};
use crate::estimators::{PllConfig, DEFAULT_RLS_P0, DEFAULT_RLS_R0};

use super::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficKind {
    Spread,
    OnOff,
    Periodic,
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Constant,
    IidGamma,
    Ar1Gaussian,
    FifoQueue,
    LoadCorrelated,
}

/// What the PLL uses as packet arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PllArrival {
    /// Receiver counter ticks divided by the receiver frequency.
    Counter,
    /// Exact simulated arrival instants.
    Real,
}

/// Sampling convention for noise spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdMode {
    /// One sample per packet, axis in cycles/packet.
    Index,
    /// Linear resampling onto a uniform grid, axis in Hz.
    Time,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        impl $ty {
            pub fn keyword(self) -> &'static str {
                match self { $($ty::$variant => $word),+ }
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($word => Ok($ty::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($word),+].join(", "))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.keyword())
            }
        }
    };
}

keyword_enum!(TrafficKind { Spread => "spread", OnOff => "onoff", Periodic => "periodic", Trace => "trace" });
keyword_enum!(ChannelKind {
    Constant => "constant",
    IidGamma => "iid_gamma",
    Ar1Gaussian => "ar1_gaussian",
    FifoQueue => "fifo_queue",
    LoadCorrelated => "load_correlated",
});
keyword_enum!(PllArrival { Counter => "counter", Real => "real" });
keyword_enum!(PsdMode { Index => "index", Time => "time" });

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockSection {
    pub nominal_hz: f64,
    pub offset_ppm: f64,
    pub width_bits: u32,
    /// Counter value at simulated time zero.
    pub initial_ticks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSection {
    pub kind: TrafficKind,
    pub fps: f64,
    pub payload_bytes: u64,
    /// Burst rate of the on-off sender.
    pub tx_rate_hz: f64,
    pub packets: u64,
    /// Optional cut-off on departure time.
    pub duration_s: Option<f64>,
    pub trace_file: Option<PathBuf>,
    /// Target mean interdeparture of synthesized video; the exact interval
    /// of the periodic stream.
    pub mean_interdeparture_s: f64,
    /// Log-space standard deviation of synthesized frame sizes.
    pub dispersion: f64,
    /// Move departures onto source clock edges.
    pub tick_aligned: bool,
}

/// Parameters of every delay model; only those of `model` are used.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSection {
    pub model: ChannelKind,
    pub delay_s: f64,
    pub base_s: f64,
    pub shape: f64,
    pub scale_s: f64,
    pub mean_s: f64,
    pub rho: f64,
    pub sigma_s: f64,
    pub service_bytes_per_s: f64,
    pub cross_rate_pps: f64,
    pub cross_bytes: u32,
    pub gain_s: f64,
    pub reference_interval_s: f64,
    /// Constant offset added to every delay.
    pub offset_s: f64,
    pub loss_rate: f64,
}

impl ChannelSection {
    pub fn delay_model(&self) -> DelayModel {
        match self.model {
            ChannelKind::Constant => DelayModel::Constant { delay_s: self.delay_s },
            ChannelKind::IidGamma => DelayModel::IidGamma {
                base_s: self.base_s,
                shape: self.shape,
                scale_s: self.scale_s,
            },
            ChannelKind::Ar1Gaussian => DelayModel::Ar1Gaussian {
                mean_s: self.mean_s,
                rho: self.rho,
                sigma_s: self.sigma_s,
            },
            ChannelKind::FifoQueue => DelayModel::FifoQueue {
                base_s: self.base_s,
                service_bytes_per_s: self.service_bytes_per_s,
                cross_rate_pps: self.cross_rate_pps,
                cross_bytes: self.cross_bytes,
            },
            ChannelKind::LoadCorrelated => DelayModel::LoadCorrelated {
                base_s: self.base_s,
                shape: self.shape,
                scale_s: self.scale_s,
                gain_s: self.gain_s,
                reference_interval_s: self.reference_interval_s,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnabledEstimators {
    pub cr: bool,
    pub rls: bool,
    pub ir: bool,
    pub pll: bool,
}

impl EnabledEstimators {
    pub const ALL: EnabledEstimators = EnabledEstimators {
        cr: true,
        rls: true,
        ir: true,
        pll: true,
    };

    fn names(self) -> Vec<&'static str> {
        [("cr", self.cr), ("rls", self.rls), ("ir", self.ir), ("pll", self.pll)]
            .into_iter()
            .filter_map(|(n, on)| on.then_some(n))
            .collect()
    }
}

impl FromStr for EnabledEstimators {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim() == "all" {
            return Ok(EnabledEstimators::ALL);
        }
        let mut e = EnabledEstimators {
            cr: false,
            rls: false,
            ir: false,
            pll: false,
        };
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            let slot = match name {
                "cr" => &mut e.cr,
                "rls" => &mut e.rls,
                "ir" => &mut e.ir,
                "pll" => &mut e.pll,
                other => {
                    return Err(format!(
                        "unknown estimator `{other}` (expected cr, rls, ir, pll or all)"
                    ))
                }
            };
            *slot = true;
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSection {
    pub enabled: EnabledEstimators,
    pub rls_r0: f64,
    pub rls_p0: f64,
    pub pll_kp: f64,
    pub pll_ki: f64,
    pub pll_free_run_hz: f64,
    pub pll_unit_gain: f64,
    pub pll_arrival: PllArrival,
}

impl EstimatorSection {
    pub fn pll_config(&self, source_width: u32) -> PllConfig {
        PllConfig {
            kp: self.pll_kp,
            ki: self.pll_ki,
            free_run_hz: self.pll_free_run_hz,
            unit_gain: self.pll_unit_gain,
            source_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSection {
    pub psd_segment_len: usize,
    pub psd_overlap: f64,
    pub psd_window: Window,
    pub psd_detrend: bool,
    pub psd_mode: PsdMode,
    pub psd_resample_hz: f64,
    pub convergence_threshold_ppm: f64,
    pub convergence_hold: usize,
}

impl AnalysisSection {
    pub fn welch_params(&self) -> WelchParams {
        WelchParams {
            segment_len: self.psd_segment_len,
            overlap: self.psd_overlap,
            window: self.psd_window,
            detrend: if self.psd_detrend { Detrend::Mean } else { Detrend::None },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub source: ClockSection,
    pub receiver: ClockSection,
    pub traffic: TrafficSection,
    pub channel: ChannelSection,
    pub estimators: EstimatorSection,
    pub analysis: AnalysisSection,
}

impl Default for ScenarioConfig {
    /// The evaluation setup: RTP clock at 90 kHz + 200 ppm with 32-bit
    /// timestamps, receiver at 16 MHz − 200 ppm with a 48-bit counter,
    /// 30 fps video in 1460-byte payloads, on-off bursts at `f_s / 50`.
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            source: ClockSection {
                nominal_hz: 90_000.0,
                offset_ppm: 200.0,
                width_bits: 32,
                initial_ticks: 0,
            },
            receiver: ClockSection {
                nominal_hz: 16_000_000.0,
                offset_ppm: -200.0,
                width_bits: 48,
                initial_ticks: 0,
            },
            traffic: TrafficSection {
                kind: TrafficKind::Spread,
                fps: 30.0,
                payload_bytes: 1460,
                tx_rate_hz: 90_018.0 / 50.0,
                packets: 100_000,
                duration_s: None,
                trace_file: None,
                mean_interdeparture_s: 0.0059026,
                dispersion: 0.5,
                tick_aligned: true,
            },
            channel: ChannelSection {
                model: ChannelKind::Constant,
                // half of the 10 ms round trip
                delay_s: 0.005,
                base_s: 0.005,
                shape: 2.0,
                scale_s: 0.0005,
                mean_s: 0.005,
                rho: 0.9,
                sigma_s: 0.0002,
                service_bytes_per_s: 12.5e6,
                cross_rate_pps: 6000.0,
                cross_bytes: 1460,
                gain_s: 0.0005,
                reference_interval_s: 0.0059026,
                offset_s: 0.0,
                loss_rate: 0.0,
            },
            estimators: EstimatorSection {
                enabled: EnabledEstimators::ALL,
                rls_r0: DEFAULT_RLS_R0,
                rls_p0: DEFAULT_RLS_P0,
                pll_kp: 0.0001,
                pll_ki: 0.000001,
                pll_free_run_hz: 89_982.0,
                pll_unit_gain: 1.0,
                pll_arrival: PllArrival::Real,
            },
            analysis: AnalysisSection {
                psd_segment_len: 1024,
                psd_overlap: 0.5,
                psd_window: Window::Hann,
                psd_detrend: true,
                psd_mode: PsdMode::Index,
                psd_resample_hz: 200.0,
                convergence_threshold_ppm: 5.0,
                convergence_hold: 100,
            },
        }
    }
}

fn window_from_str(s: &str) -> Result<Window, String> {
    match s {
        "hann" => Ok(Window::Hann),
        "rectangular" => Ok(Window::Rectangular),
        _ => Err("expected one of: hann, rectangular".into()),
    }
}

struct Assign<'a> {
    key: &'a str,
    value: &'a str,
    line: usize,
    errors: &'a mut Vec<String>,
}

impl Assign<'_> {
    fn set<T: FromStr>(&mut self, slot: &mut T)
    where
        T::Err: fmt::Display,
    {
        match self.value.parse() {
            Ok(v) => *slot = v,
            Err(e) => self
                .errors
                .push(format!("line {}: {} = `{}`: {e}", self.line, self.key, self.value)),
        }
    }

    fn set_with<T>(&mut self, slot: &mut T, parse: impl Fn(&str) -> Result<T, String>) {
        match parse(self.value) {
            Ok(v) => *slot = v,
            Err(e) => self
                .errors
                .push(format!("line {}: {} = `{}`: {e}", self.line, self.key, self.value)),
        }
    }
}

impl ScenarioConfig {
    /// Parses a configuration, starting from the defaults. Every bad line
    /// and every failed check is reported together.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = ScenarioConfig::default();
        let mut errors = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                errors.push(format!("line {line}: expected `key = value`"));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                errors.push(format!("line {line}: duplicate key `{key}`"));
                continue;
            }
            let mut a = Assign {
                key,
                value,
                line,
                errors: &mut errors,
            };
            match key {
                "seed" => a.set(&mut c.seed),
                "source.nominal_hz" => a.set(&mut c.source.nominal_hz),
                "source.offset_ppm" => a.set(&mut c.source.offset_ppm),
                "source.width_bits" => a.set(&mut c.source.width_bits),
                "source.initial_ticks" => a.set(&mut c.source.initial_ticks),
                "receiver.nominal_hz" => a.set(&mut c.receiver.nominal_hz),
                "receiver.offset_ppm" => a.set(&mut c.receiver.offset_ppm),
                "receiver.width_bits" => a.set(&mut c.receiver.width_bits),
                "receiver.initial_ticks" => a.set(&mut c.receiver.initial_ticks),
                "traffic.kind" => a.set(&mut c.traffic.kind),
                "traffic.fps" => a.set(&mut c.traffic.fps),
                "traffic.payload_bytes" => a.set(&mut c.traffic.payload_bytes),
                "traffic.tx_rate_hz" => a.set(&mut c.traffic.tx_rate_hz),
                "traffic.packets" => a.set(&mut c.traffic.packets),
                "traffic.duration_s" => a.set_with(&mut c.traffic.duration_s, |v| {
                    v.parse()
                        .map(Some)
                        .map_err(|e: std::num::ParseFloatError| e.to_string())
                }),
                "traffic.trace_file" => c.traffic.trace_file = Some(PathBuf::from(value)),
                "traffic.mean_interdeparture_s" => a.set(&mut c.traffic.mean_interdeparture_s),
                "traffic.dispersion" => a.set(&mut c.traffic.dispersion),
                "traffic.tick_aligned" => a.set(&mut c.traffic.tick_aligned),
                "channel.model" => a.set(&mut c.channel.model),
                "channel.delay_s" => a.set(&mut c.channel.delay_s),
                "channel.base_s" => a.set(&mut c.channel.base_s),
                "channel.shape" => a.set(&mut c.channel.shape),
                "channel.scale_s" => a.set(&mut c.channel.scale_s),
                "channel.mean_s" => a.set(&mut c.channel.mean_s),
                "channel.rho" => a.set(&mut c.channel.rho),
                "channel.sigma_s" => a.set(&mut c.channel.sigma_s),
                "channel.service_bytes_per_s" => a.set(&mut c.channel.service_bytes_per_s),
                "channel.cross_rate_pps" => a.set(&mut c.channel.cross_rate_pps),
                "channel.cross_bytes" => a.set(&mut c.channel.cross_bytes),
                "channel.gain_s" => a.set(&mut c.channel.gain_s),
                "channel.reference_interval_s" => a.set(&mut c.channel.reference_interval_s),
                "channel.offset_s" => a.set(&mut c.channel.offset_s),
                "channel.loss_rate" => a.set(&mut c.channel.loss_rate),
                "estimators.enabled" => a.set(&mut c.estimators.enabled),
                "estimators.rls_r0" => a.set(&mut c.estimators.rls_r0),
                "estimators.rls_p0" => a.set(&mut c.estimators.rls_p0),
                "estimators.pll_kp" => a.set(&mut c.estimators.pll_kp),
                "estimators.pll_ki" => a.set(&mut c.estimators.pll_ki),
                "estimators.pll_free_run_hz" => a.set(&mut c.estimators.pll_free_run_hz),
                "estimators.pll_unit_gain" => a.set(&mut c.estimators.pll_unit_gain),
                "estimators.pll_arrival" => a.set(&mut c.estimators.pll_arrival),
                "analysis.psd_segment_len" => a.set(&mut c.analysis.psd_segment_len),
                "analysis.psd_overlap" => a.set(&mut c.analysis.psd_overlap),
                "analysis.psd_window" => a.set_with(&mut c.analysis.psd_window, window_from_str),
                "analysis.psd_detrend" => a.set(&mut c.analysis.psd_detrend),
                "analysis.psd_mode" => a.set(&mut c.analysis.psd_mode),
                "analysis.psd_resample_hz" => a.set(&mut c.analysis.psd_resample_hz),
                "analysis.convergence_threshold_ppm" => a.set(&mut c.analysis.convergence_threshold_ppm),
                "analysis.convergence_hold" => a.set(&mut c.analysis.convergence_hold),
                _ => errors.push(format!("line {line}: unknown key `{key}`")),
            }
        }
        errors.extend(c.violations());
        if errors.is_empty() {
            Ok(c)
        } else {
            Err(ConfigError(errors))
        }
    }

    /// Canonical text form; [`parse`](Self::parse) restores it exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", &self.seed);
        for (name, clk) in [("source", &self.source), ("receiver", &self.receiver)] {
            kv(&format!("{name}.nominal_hz"), &clk.nominal_hz);
            kv(&format!("{name}.offset_ppm"), &clk.offset_ppm);
            kv(&format!("{name}.width_bits"), &clk.width_bits);
            kv(&format!("{name}.initial_ticks"), &clk.initial_ticks);
        }
        let t = &self.traffic;
        kv("traffic.kind", &t.kind);
        kv("traffic.fps", &t.fps);
        kv("traffic.payload_bytes", &t.payload_bytes);
        kv("traffic.tx_rate_hz", &t.tx_rate_hz);
        kv("traffic.packets", &t.packets);
        if let Some(d) = t.duration_s {
            kv("traffic.duration_s", &d);
        }
        if let Some(p) = &t.trace_file {
            kv("traffic.trace_file", &p.display());
        }
        kv("traffic.mean_interdeparture_s", &t.mean_interdeparture_s);
        kv("traffic.dispersion", &t.dispersion);
        kv("traffic.tick_aligned", &t.tick_aligned);
        let ch = &self.channel;
        kv("channel.model", &ch.model);
        kv("channel.delay_s", &ch.delay_s);
        kv("channel.base_s", &ch.base_s);
        kv("channel.shape", &ch.shape);
        kv("channel.scale_s", &ch.scale_s);
        kv("channel.mean_s", &ch.mean_s);
        kv("channel.rho", &ch.rho);
        kv("channel.sigma_s", &ch.sigma_s);
        kv("channel.service_bytes_per_s", &ch.service_bytes_per_s);
        kv("channel.cross_rate_pps", &ch.cross_rate_pps);
        kv("channel.cross_bytes", &ch.cross_bytes);
        kv("channel.gain_s", &ch.gain_s);
        kv("channel.reference_interval_s", &ch.reference_interval_s);
        kv("channel.offset_s", &ch.offset_s);
        kv("channel.loss_rate", &ch.loss_rate);
        let e = &self.estimators;
        kv("estimators.enabled", &e.enabled.names().join(","));
        kv("estimators.rls_r0", &e.rls_r0);
        kv("estimators.rls_p0", &e.rls_p0);
        kv("estimators.pll_kp", &e.pll_kp);
        kv("estimators.pll_ki", &e.pll_ki);
        kv("estimators.pll_free_run_hz", &e.pll_free_run_hz);
        kv("estimators.pll_unit_gain", &e.pll_unit_gain);
        kv("estimators.pll_arrival", &e.pll_arrival);
        let an = &self.analysis;
        kv("analysis.psd_segment_len", &an.psd_segment_len);
        kv("analysis.psd_overlap", &an.psd_overlap);
        kv("analysis.psd_window", &an.psd_window);
        kv("analysis.psd_detrend", &an.psd_detrend);
        kv("analysis.psd_mode", &an.psd_mode);
        kv("analysis.psd_resample_hz", &an.psd_resample_hz);
        kv("analysis.convergence_threshold_ppm", &an.convergence_threshold_ppm);
        kv("analysis.convergence_hold", &an.convergence_hold);
        s
    }

    /// Every semantic problem with the configuration.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let positive = |v: &mut Vec<String>, key: &str, x: f64| {
            if !(x.is_finite() && x > 0.0) {
                v.push(format!("{key} must be positive and finite, got {x}"));
            }
        };
        for (name, clk) in [("source", &self.source), ("receiver", &self.receiver)] {
            positive(&mut v, &format!("{name}.nominal_hz"), clk.nominal_hz);
            if !clk.offset_ppm.is_finite() || clk.offset_ppm <= -1e6 {
                v.push(format!(
                    "{name}.offset_ppm must be finite and > -1e6, got {}",
                    clk.offset_ppm
                ));
            }
            if !(MIN_COUNTER_WIDTH..=MAX_COUNTER_WIDTH).contains(&clk.width_bits) {
                v.push(format!(
                    "{name}.width_bits must be in [{MIN_COUNTER_WIDTH}, {MAX_COUNTER_WIDTH}], got {}",
                    clk.width_bits
                ));
            } else if clk.width_bits < 64 && clk.initial_ticks >> clk.width_bits != 0 {
                v.push(format!(
                    "{name}.initial_ticks {} does not fit in {} bits",
                    clk.initial_ticks, clk.width_bits
                ));
            }
        }
        let t = &self.traffic;
        positive(&mut v, "traffic.fps", t.fps);
        if t.payload_bytes == 0 || t.payload_bytes > u64::from(u32::MAX) {
            v.push(format!(
                "traffic.payload_bytes must be in [1, 2^32), got {}",
                t.payload_bytes
            ));
        }
        positive(&mut v, "traffic.tx_rate_hz", t.tx_rate_hz);
        positive(&mut v, "traffic.mean_interdeparture_s", t.mean_interdeparture_s);
        positive(&mut v, "traffic.dispersion", t.dispersion);
        if let Some(d) = t.duration_s {
            if !(d.is_finite() && d >= 0.0) {
                v.push(format!("traffic.duration_s must be finite and >= 0, got {d}"));
            }
        }
        if t.kind == TrafficKind::Trace && t.trace_file.is_none() {
            v.push("traffic.trace_file is required when traffic.kind = trace".into());
        }
        let ch = &self.channel;
        v.extend(
            ch.delay_model()
                .violations()
                .into_iter()
                .map(|m| format!("channel.{m}")),
        );
        if !ch.offset_s.is_finite() {
            v.push(format!("channel.offset_s must be finite, got {}", ch.offset_s));
        }
        if !(0.0..1.0).contains(&ch.loss_rate) {
            v.push(format!("channel.loss_rate must be in [0, 1), got {}", ch.loss_rate));
        }
        let e = &self.estimators;
        if e.enabled.names().is_empty() {
            v.push("estimators.enabled must name at least one estimator".into());
        }
        if !e.rls_r0.is_finite() {
            v.push(format!("estimators.rls_r0 must be finite, got {}", e.rls_r0));
        }
        positive(&mut v, "estimators.rls_p0", e.rls_p0);
        v.extend(
            e.pll_config(self.source.width_bits)
                .violations()
                .into_iter()
                .filter(|m| !m.starts_with("source_width"))
                .map(|m| format!("estimators.pll_{m}")),
        );
        let an = &self.analysis;
        if an.psd_segment_len < 2 {
            v.push(format!(
                "analysis.psd_segment_len must be at least 2, got {}",
                an.psd_segment_len
            ));
        }
        if !(0.0..1.0).contains(&an.psd_overlap) {
            v.push(format!(
                "analysis.psd_overlap must be in [0, 1), got {}",
                an.psd_overlap
            ));
        }
        positive(&mut v, "analysis.psd_resample_hz", an.psd_resample_hz);
        positive(
            &mut v,
            "analysis.convergence_threshold_ppm",
            an.convergence_threshold_ppm,
        );
        if an.convergence_hold == 0 {
            v.push("analysis.convergence_hold must be at least 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(v))
        }
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Drops a `#` comment that starts the line or follows whitespace, so
/// values such as file names may still contain `#`.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ClockModel;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_the_evaluation_setup() {
        let c = ScenarioConfig::default();
        assert_eq!(
            (c.source.nominal_hz, c.source.offset_ppm, c.source.width_bits),
            (90_000.0, 200.0, 32)
        );
        assert_eq!(
            (c.receiver.nominal_hz, c.receiver.offset_ppm, c.receiver.width_bits),
            (16_000_000.0, -200.0, 48)
        );
        let src = ClockModel::new(c.source.nominal_hz, c.source.offset_ppm, c.source.width_bits).unwrap();
        let rx = ClockModel::new(c.receiver.nominal_hz, c.receiver.offset_ppm, c.receiver.width_bits).unwrap();
        assert_eq!(src.effective_micro_hz(), 90_018_000_000);
        assert_eq!(rx.effective_micro_hz(), 15_996_800_000_000);
        assert_eq!(c.traffic.fps, 30.0);
        assert_eq!(c.traffic.payload_bytes, 1460);
        assert!((c.traffic.tx_rate_hz - src.effective_hz() / 50.0).abs() < 1e-9);
        assert_eq!(c.estimators.rls_r0, 16_000_000.0 / 90_000.0);
        assert_eq!(c.estimators.rls_p0, 10.0);
        assert_eq!((c.estimators.pll_kp, c.estimators.pll_ki), (0.0001, 0.000001));
        assert_eq!(c.estimators.pll_free_run_hz, 89_982.0);
        assert!(c.violations().is_empty(), "{:?}", c.violations());
    }

    #[test]
    fn empty_text_is_the_default() {
        assert_eq!(ScenarioConfig::parse("").unwrap(), ScenarioConfig::default());
        let c = ScenarioConfig::parse("# just a comment\n\n   \n").unwrap();
        assert_eq!(c, ScenarioConfig::default());
    }

    #[test]
    fn parses_sections_and_comments() {
        let c = ScenarioConfig::parse(
            "seed = 7\n\
             traffic.kind = onoff  # bursts\n\
             traffic.trace_file = clip#1.txt\n\
             channel.model = iid_gamma\n\
             estimators.enabled = cr, pll\n\
             analysis.psd_window = rectangular\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.traffic.kind, TrafficKind::OnOff);
        assert_eq!(c.traffic.trace_file, Some(PathBuf::from("clip#1.txt")));
        assert_eq!(c.channel.model, ChannelKind::IidGamma);
        assert_eq!(
            c.estimators.enabled,
            EnabledEstimators {
                cr: true,
                rls: false,
                ir: false,
                pll: true
            }
        );
        assert_eq!(c.analysis.psd_window, Window::Rectangular);
        let all = ScenarioConfig::parse("estimators.enabled = all\n").unwrap();
        assert_eq!(all.estimators.enabled, EnabledEstimators::ALL);
        assert!(ScenarioConfig::parse("estimators.enabled = all, cr\n").is_err());
    }

    #[test]
    fn reports_every_violation() {
        let err = ScenarioConfig::parse(
            "bogus.key = 1\n\
             source.width_bits = 4\n\
             traffic.fps = -1\n\
             channel.model = ar1_gaussian\n\
             channel.rho = 1.5\n\
             channel.loss_rate = 1\n\
             seed = x\n\
             seed = 3\n\
             no equals sign\n",
        )
        .unwrap_err();
        let text = err.to_string();
        for needle in [
            "unknown key `bogus.key`",
            "source.width_bits",
            "traffic.fps",
            "channel.rho",
            "channel.loss_rate",
            "line 7: seed",
            "duplicate key `seed`",
            "line 9",
        ] {
            assert!(text.contains(needle), "missing {needle} in:\n{text}");
        }
        assert_eq!(err.0.len(), 8, "{text}");
    }

    #[test]
    fn trace_kind_needs_a_file() {
        let err = ScenarioConfig::parse("traffic.kind = trace").unwrap_err();
        assert!(err.to_string().contains("traffic.trace_file"));
    }

    #[test]
    fn initial_ticks_must_fit() {
        let err = ScenarioConfig::parse("source.initial_ticks = 4294967296").unwrap_err();
        assert!(err.to_string().contains("does not fit"));
        assert!(ScenarioConfig::parse("source.initial_ticks = 4294966296").is_ok());
    }

    #[test]
    fn default_round_trips() {
        let c = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::parse(&c.serialize()).unwrap(), c);
    }

    fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
        (
            any::<u64>(),
            1.0f64..1e9,
            -500.0f64..500.0,
            0u64..256,
            prop::sample::select(vec![TrafficKind::Spread, TrafficKind::OnOff, TrafficKind::Periodic]),
            (0u64..1_000_000, prop::option::of(0.0f64..1e4), any::<bool>()),
            prop::sample::select(vec![
                ChannelKind::Constant,
                ChannelKind::IidGamma,
                ChannelKind::Ar1Gaussian,
                ChannelKind::FifoQueue,
                ChannelKind::LoadCorrelated,
            ]),
            (0.0f64..0.1, -0.99f64..0.99, 0.0f64..0.999),
            (0.1f64..1e3, 1e-12f64..1e3, -1.0f64..1.0),
            (2usize..100_000, 0.0f64..0.99, any::<bool>(), any::<bool>()),
        )
            .prop_map(
                |(seed, hz, ppm, init, kind, (packets, duration, aligned), model, ch, est, an)| {
                    let mut c = ScenarioConfig {
                        seed,
                        ..Default::default()
                    };
                    c.source.nominal_hz = hz;
                    c.source.offset_ppm = ppm;
                    c.source.initial_ticks = init;
                    c.traffic.kind = kind;
                    c.traffic.packets = packets;
                    c.traffic.duration_s = duration;
                    c.traffic.tick_aligned = aligned;
                    c.channel.model = model;
                    (c.channel.delay_s, c.channel.rho, c.channel.loss_rate) = ch;
                    (c.estimators.rls_r0, c.estimators.rls_p0, c.estimators.pll_kp) = est;
                    c.analysis.psd_segment_len = an.0;
                    c.analysis.psd_overlap = an.1;
                    c.analysis.psd_detrend = an.2;
                    c.estimators.pll_arrival = if an.3 { PllArrival::Real } else { PllArrival::Counter };
                    c.analysis.psd_mode = if an.3 { PsdMode::Time } else { PsdMode::Index };
                    c
                },
            )
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(c in arb_config()) {
            prop_assert_eq!(ScenarioConfig::parse(&c.serialize()).unwrap(), c);
        }
    }
}
