use log::warn;

use super::EstimatorError;

/// Smallest receiver-to-source frequency ratio for which DCO synthesis
/// keeps quantization error small.
pub const MIN_OVERSAMPLING: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcoOutput {
    /// Synthesized source-clock ticks so far.
    pub recovered_ticks: u64,
    /// Fraction of a tick carried into the next step, in [0, 1).
    pub residue: f64,
}

/// Digitally controlled oscillator: divides the receiver tick stream by the
/// current ratio estimate to regenerate source-clock ticks.
#[derive(Debug, Clone, Default)]
pub struct Dco {
    recovered_ticks: u64,
    residue: f64,
    undersampled: bool,
}

impl Dco {
    pub fn new() -> Self {
        Self::default()
    }

    /// True once a ratio below [`MIN_OVERSAMPLING`] has been used.
    pub fn undersampled(&self) -> bool {
        self.undersampled
    }

    pub fn output(&self) -> DcoOutput {
        DcoOutput {
            recovered_ticks: self.recovered_ticks,
            residue: self.residue,
        }
    }

    /// Advances by `receiver_ticks` at ratio `r_hat`, emitting
    /// `receiver_ticks / r_hat` recovered ticks with fractional carry.
    pub fn synthesize(&mut self, r_hat: f64, receiver_ticks: u64) -> Result<DcoOutput, EstimatorError> {
        if !(r_hat.is_finite() && r_hat > 0.0) {
            return Err(EstimatorError::InvalidRatio(r_hat));
        }
        if r_hat < MIN_OVERSAMPLING && !self.undersampled {
            warn!(
                "receiver clock is only {r_hat:.3}x the source clock; DCO output will carry large quantization error"
            );
            self.undersampled = true;
        }
        let total = receiver_ticks as f64 / r_hat + self.residue;
        let whole = total.floor();
        self.recovered_ticks += whole as u64;
        self.residue = total - whole;
        Ok(self.output())
    }
}
