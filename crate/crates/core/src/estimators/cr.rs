use super::{RatioEstimator, RtoSample};

/// Cumulative-ratio estimator: `R̂(k) = A(k) / D(k)` with `A = Σiat` and
/// `D = Σidt`. The sums are integers; only the final division is done in
/// floating point. No estimate exists while `D ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CrState {
    /// Cumulative receiver ticks.
    pub a: i64,
    /// Cumulative source ticks.
    pub d: i64,
}

impl CrState {
    pub fn new() -> Self {
        Self::default()
    }

    /// The exact estimate as a fraction `(A, D)`.
    pub fn fraction(&self) -> (i64, i64) {
        (self.a, self.d)
    }
}

impl RatioEstimator for CrState {
    fn update(&mut self, sample: &RtoSample) -> Option<f64> {
        self.a += sample.iat;
        self.d += sample.idt;
        self.estimate()
    }

    fn estimate(&self) -> Option<f64> {
        (self.d > 0).then(|| self.a as f64 / self.d as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(iat: i64, idt: i64) -> RtoSample {
        RtoSample {
            iat,
            idt,
            ..Default::default()
        }
    }

    #[test]
    fn single_sample_ratio() {
        // iat = 17770.668, idt = 100 scaled by 1000 to whole ticks
        let mut cr = CrState::new();
        let r = cr.update(&sample(17_770_668, 100_000)).unwrap();
        assert!((r - 177.706_68).abs() < 1e-12);
    }

    #[test]
    fn two_sample_ratio() {
        let mut cr = CrState::new();
        cr.update(&sample(355, 2));
        let r = cr.update(&sample(356, 2)).unwrap();
        assert_eq!(r, 177.75);
        assert_eq!(cr.fraction(), (711, 4));
    }

    #[test]
    fn zero_denominator_is_unavailable() {
        let mut cr = CrState::new();
        assert_eq!(cr.estimate(), None);
        assert_eq!(cr.update(&sample(40, 0)), None);
        // duplicate timestamp: A grows, D does not
        assert_eq!(cr.update(&sample(60, 1)), Some(100.0));
    }
}
