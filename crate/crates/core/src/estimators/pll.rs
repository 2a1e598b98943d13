use super::EstimatorError;
use crate::clock::tick_delta_signed;

/// Loop parameters of the PLL baseline.
///
/// The phase detector compares the unwrapped source timestamp count with
/// the VCO's accumulated phase, both in source cycles. The PI filter output
/// is scaled by `unit_gain` (Hz per cycle of phase error) and added to the
/// free-running frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllConfig {
    pub kp: f64,
    pub ki: f64,
    pub free_run_hz: f64,
    pub unit_gain: f64,
    pub source_width: u32,
}

impl Default for PllConfig {
    /// kp = 1e-4, ki = 1e-6, VCO free-running at 89.982 kHz, 1 Hz/cycle.
    fn default() -> Self {
        PllConfig {
            kp: 0.0001,
            ki: 0.000001,
            free_run_hz: 89_982.0,
            unit_gain: 1.0,
            source_width: 32,
        }
    }
}

impl PllConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [("kp", self.kp), ("ki", self.ki), ("unit_gain", self.unit_gain)] {
            if !x.is_finite() {
                v.push(format!("{name} must be finite, got {x}"));
            }
        }
        if !(self.free_run_hz.is_finite() && self.free_run_hz > 0.0) {
            v.push(format!("free_run_hz must be positive, got {}", self.free_run_hz));
        }
        if !(8..=64).contains(&self.source_width) {
            v.push(format!("source_width {} outside [8, 64]", self.source_width));
        }
        v
    }
}

/// Second-order (PI) software PLL updated once per packet arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct PllState {
    config: PllConfig,
    /// Current VCO frequency in Hz.
    pub vco_hz: f64,
    /// VCO phase accumulated since the first packet, in cycles.
    pub vco_phase: f64,
    pub integrator: f64,
    last_error: f64,
    last_arrival: Option<f64>,
    last_ts: u64,
    unwrapped_ts: i64,
}

impl PllState {
    pub fn new(config: PllConfig) -> Result<Self, EstimatorError> {
        let v = config.violations();
        if !v.is_empty() {
            return Err(EstimatorError::InvalidConfig(v.join("; ")));
        }
        Ok(PllState {
            config,
            vco_hz: config.free_run_hz,
            vco_phase: 0.0,
            integrator: 0.0,
            last_error: 0.0,
            last_arrival: None,
            last_ts: 0,
            unwrapped_ts: 0,
        })
    }

    pub fn config(&self) -> &PllConfig {
        &self.config
    }

    /// Phase error at the latest update, in source cycles.
    pub fn phase_error(&self) -> f64 {
        self.last_error
    }

    /// Folds in a packet that arrived at `arrival_s` (receiver seconds)
    /// carrying source timestamp `ts_ticks`. Returns the recovered source
    /// frequency, or `None` for the first packet, which only sets the phase
    /// reference.
    pub fn update(&mut self, arrival_s: f64, ts_ticks: u64) -> Result<Option<f64>, EstimatorError> {
        let Some(prev) = self.last_arrival else {
            tick_delta_signed(ts_ticks, ts_ticks, self.config.source_width)?;
            self.last_arrival = Some(arrival_s);
            self.last_ts = ts_ticks;
            return Ok(None);
        };
        if !(arrival_s > prev) {
            return Err(EstimatorError::NonIncreasingArrival { prev, curr: arrival_s });
        }
        self.unwrapped_ts += tick_delta_signed(self.last_ts, ts_ticks, self.config.source_width)?;
        self.last_ts = ts_ticks;
        self.vco_phase += self.vco_hz * (arrival_s - prev);
        self.last_arrival = Some(arrival_s);

        let error = self.unwrapped_ts as f64 - self.vco_phase;
        self.integrator += error;
        self.last_error = error;
        let c = &self.config;
        let hz = c.free_run_hz + c.unit_gain * (c.kp * error + c.ki * self.integrator);
        // the VCO cannot run at or below zero frequency
        self.vco_hz = hz.max(c.free_run_hz * 1e-6);
        Ok(Some(self.vco_hz))
    }

    /// Recovered source frequency, once at least two packets were seen.
    pub fn estimate(&self) -> Option<f64> {
        (self.vco_phase > 0.0).then_some(self.vco_hz)
    }
}
