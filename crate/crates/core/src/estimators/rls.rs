use super::{EstimatorError, RatioEstimator, RtoSample};

/// Initial ratio: nominal receiver over nominal source frequency.
pub const DEFAULT_RLS_R0: f64 = 16_000_000.0 / 90_000.0;
/// Initial gain.
pub const DEFAULT_RLS_P0: f64 = 10.0;

/// Recursive least squares for the through-origin model
/// `t̃_r(k) = R·t̃_s(k) + noise`:
///
/// ```text
/// P(k) = P(k−1) − P(k−1)²·x² / (1 + P(k−1)·x²)
/// R̂(k) = R̂(k−1) + P(k)·x·(y − x·R̂(k−1))
/// ```
///
/// with `x = t̃_s(k)`, `y = t̃_r(k)`. The gain update is evaluated as the
/// algebraically identical `P/(1 + P·x²)`, which avoids cancelling two
/// nearly equal terms once `P·x² ≫ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsState {
    pub r_hat: f64,
    pub p: f64,
    updates: u64,
}

impl RlsState {
    pub fn new(r0: f64, p0: f64) -> Result<Self, EstimatorError> {
        if !(p0.is_finite() && p0 > 0.0) {
            return Err(EstimatorError::NonPositiveGain(p0));
        }
        if !r0.is_finite() {
            return Err(EstimatorError::InvalidConfig(format!("RLS initial ratio {r0}")));
        }
        Ok(RlsState {
            r_hat: r0,
            p: p0,
            updates: 0,
        })
    }

    /// Initialization from nominal clock frequencies.
    pub fn nominal() -> Self {
        RlsState::new(DEFAULT_RLS_R0, DEFAULT_RLS_P0).expect("valid defaults")
    }

    /// Number of samples with a non-zero regressor folded in so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One step with regressor `x` and response `y`. A zero regressor
    /// carries no information and leaves the state unchanged.
    pub fn update_xy(&mut self, x: f64, y: f64) -> f64 {
        if x == 0.0 {
            return self.r_hat;
        }
        let p = self.p / (1.0 + self.p * x * x);
        self.r_hat += p * x * (y - x * self.r_hat);
        self.p = p;
        self.updates += 1;
        self.r_hat
    }
}

impl RatioEstimator for RlsState {
    fn update(&mut self, sample: &RtoSample) -> Option<f64> {
        Some(self.update_xy(sample.tilde_ts as f64, sample.tilde_tr as f64))
    }

    fn estimate(&self) -> Option<f64> {
        Some(self.r_hat)
    }
}

/// Closed-form minimizer of `Σ(t̃_r − R·t̃_s)² + (R − r0)²/p0`:
/// `(r0/p0 + Σt̃_s·t̃_r) / (1/p0 + Σt̃_s²)`. The sums are exact 128-bit
/// integers, independent of the recursive path.
pub fn rls_batch_oracle(samples: &[RtoSample], r0: f64, p0: f64) -> Result<f64, EstimatorError> {
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(EstimatorError::NonPositiveGain(p0));
    }
    let (sxy, sxx) = samples.iter().fold((0i128, 0i128), |(sxy, sxx), s| {
        let x = i128::from(s.tilde_ts);
        (sxy + x * i128::from(s.tilde_tr), sxx + x * x)
    });
    Ok((r0 / p0 + sxy as f64) / (1.0 / p0 + sxx as f64))
}
