//! Empirical-law containers and the distance and trend tests that turn the
//! weak-convergence claims into falsifiable desk-scale checks.
//!
//! Convergence of laws is tested at the marginal level: finitely many probe
//! times plus sup-functionals. Distances are the two-sample
//! Kolmogorov--Smirnov statistic and the order-statistics Wasserstein-1.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::quad::IntervalUnion;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empirical law needs at least 2 finite samples, got {0}")]
    TooFewSamples(usize),
    #[error("confidence level must be in (0, 1), got {0}")]
    BadLevel(f64),
}

/// Sorted Monte Carlo sample of a scalar statistic.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw {
    samples: Vec<f64>,
}

impl EmpiricalLaw {
    /// Sorts the samples; non-finite values are rejected by count.
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self, StatsError> {
        samples.retain(|x| x.is_finite());
        if samples.len() < 2 {
            return Err(StatsError::TooFewSamples(samples.len()));
        }
        samples.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { samples })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.n() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (self.n() - 1) as f64
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n() as f64).sqrt()
    }

    /// Empirical quantile at `p` in [0, 1] (midpoint convention).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.n();
        let idx = ((p * n as f64).floor() as usize).min(n - 1);
        self.samples[idx]
    }
}

/// Two-sample Kolmogorov--Smirnov statistic: the sup-norm distance between
/// the empirical CDFs, in `[0, 1]`.
pub fn ks_two_sample(a: &EmpiricalLaw, b: &EmpiricalLaw) -> f64 {
    let xs = a.samples();
    let ys = b.samples();
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut sup: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        fa = i as f64 / na;
        fb = j as f64 / nb;
        sup = sup.max((fa - fb).abs());
    }
    let _ = (fa, fb);
    sup
}

/// Wasserstein-1 distance. For equal sizes this is the mean absolute
/// difference of order statistics (exact); for unequal sizes both laws are
/// resampled at the midpoint quantiles of the finer grid.
pub fn wasserstein1(a: &EmpiricalLaw, b: &EmpiricalLaw) -> f64 {
    if a.n() == b.n() {
        a.samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.n() as f64
    } else {
        let k = a.n().max(b.n());
        (0..k)
            .map(|i| {
                let p = (i as f64 + 0.5) / k as f64;
                (a.quantile(p) - b.quantile(p)).abs()
            })
            .sum::<f64>()
            / k as f64
    }
}

/// Normal-approximation confidence interval for the mean: `(mean, halfwidth)`.
pub fn mean_ci(a: &EmpiricalLaw, level: f64) -> Result<(f64, f64), StatsError> {
    if !(0.0 < level && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let z = Normal::standard().inverse_cdf(0.5 * (1.0 + level));
    Ok((a.mean(), z * a.stderr()))
}

/// Occupation time of `set` along a discretized trajectory up to `horizon`:
/// the number of grid times with `zeta(t_i)` in the set, times the step.
/// Left points are counted, matching the Riemann sum of the indicator.
pub fn occupation_fraction(
    times: &[f64],
    zeta: &[f64],
    set: &IntervalUnion,
    horizon: f64,
) -> f64 {
    if times.len() < 2 {
        return 0.0;
    }
    let h = times[1] - times[0];
    let mut acc = 0.0;
    for i in 0..times.len() - 1 {
        if times[i] < horizon - 0.5 * h {
            if set.contains(zeta[i]) {
                acc += h;
            }
        } else {
            break;
        }
    }
    acc
}

/// Verdict of the ladder trend test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trend {
    pub pass: bool,
    /// Least-squares slope of value against log10 of the ladder parameter.
    pub slope: f64,
    pub last: f64,
}

/// Tiny absolute floor so that ladders of exactly-zero checker values (which
/// fluctuate at quadrature-noise level) still count as nonincreasing.
const TREND_ABS_FLOOR: f64 = 1e-9;

/// Passes iff the values are nonincreasing along the ladder up to the given
/// relative slack and the final value is at or below `threshold`.
pub fn convergence_trend(values: &[(f64, f64)], threshold: f64, slack: f64) -> Trend {
    convergence_trend_with_noise(values, threshold, slack, 0.0)
}

/// Trend test with an additional absolute allowance for series whose values
/// carry sampling noise (two-sample distances between already-converged laws
/// fluctuate at the `1/sqrt(n)` scale with no true trend).
pub fn convergence_trend_with_noise(
    values: &[(f64, f64)],
    threshold: f64,
    slack: f64,
    abs_slack: f64,
) -> Trend {
    let mut sorted: Vec<(f64, f64)> = values.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pass = !sorted.is_empty();
    let allowance = abs_slack.max(TREND_ABS_FLOOR);
    for w in sorted.windows(2) {
        if w[1].1 > w[0].1 * (1.0 + slack) + allowance {
            pass = false;
        }
    }
    let last = sorted.last().map(|v| v.1).unwrap_or(f64::NAN);
    if !(last <= threshold) {
        pass = false;
    }
    // slope of value against log10(T)
    let n = sorted.len() as f64;
    let slope = if sorted.len() >= 2 {
        let mx = sorted.iter().map(|v| v.0.log10()).sum::<f64>() / n;
        let my = sorted.iter().map(|v| v.1).sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, v) in &sorted {
            num += (t.log10() - mx) * (v - my);
            den += (t.log10() - mx) * (t.log10() - mx);
        }
        num / den
    } else {
        f64::NAN
    };
    Trend { pass, slope, last }
}
