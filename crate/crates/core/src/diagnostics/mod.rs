//! Numerical probes of the convergence analysis.
//!
//! Monte Carlo verdicts carry standard errors and only count as violations
//! when the estimate exceeds its bound by more than three of them. Per-step
//! checks are reported as frequencies, never asserted.

mod coupled;
mod epoch;
mod localization;
mod variance;

pub use coupled::{run_coupled_experiment, CoupledParams, CoupledReport, CoupledRun};
pub use epoch::{verify_epoch_decrease, EpochDecreaseReport, EpochStat, SvrgContrast};
pub use localization::{
    localization_frequency, verify_localization, LocalizationPoint, LocalizationReport,
};
pub use variance::{
    enumerate_estimator_moments, verify_variance_bound, EstimatorKind, Moment, VarianceMethod,
    VariancePoint, VarianceReport,
};

/// Number of standard errors a Monte Carlo estimate may exceed its bound by.
pub const SE_SLACK: f64 = 3.0;

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error of the mean.
    pub(crate) fn std_err(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Wilson score interval for a binomial proportion at ~95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}
