use super::{RatioEstimator, RtoSample};

/// `iat / idt` for one packet; `None` when `idt = 0`.
pub fn ir_ratio(sample: &RtoSample) -> Option<f64> {
    (sample.idt != 0).then(|| sample.iat as f64 / sample.idt as f64)
}

/// Instantaneous-ratio estimator. Memoryless apart from holding the most
/// recent value for [`RatioEstimator::estimate`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IrState {
    last: Option<f64>,
}

impl IrState {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RatioEstimator for IrState {
    fn update(&mut self, sample: &RtoSample) -> Option<f64> {
        self.last = ir_ratio(sample);
        self.last
    }

    fn estimate(&self) -> Option<f64> {
        self.last
    }
}
