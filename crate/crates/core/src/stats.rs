//! Small statistics helpers: compensated sums, sample moments and
//! ordinary least squares with t-based confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Sample mean with the standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MeanEstimate {
    /// Two-pass mean and standard error over `samples`, summed in slice order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                count,
            };
        }
        let n = count as f64;
        let mean = samples.iter().copied().collect::<KahanSum>().total() / n;
        if count == 1 {
            return Self {
                mean,
                stderr: 0.0,
                count,
            };
        }
        let ss = samples
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<KahanSum>()
            .total();
        let var = ss / (n - 1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
            count,
        }
    }
}

/// Result of a simple linear regression `y = intercept + slope * x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Half-width of the 95% confidence interval for the slope.
    pub slope_ci_half_width: f64,
    pub r2: f64,
}

/// Ordinary least squares on paired samples. Needs at least three points
/// and non-constant `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let k = x.len();
    if k < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {k}"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite regression input".into()));
    }
    let n = k as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx <= f64::EPSILON * (1.0 + mx * mx) * n {
        return Err(Error::DegenerateFit("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let dof = n - 2.0;
    let slope_stderr = (sse / dof / sxx).sqrt();
    let t975 = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        slope_ci_half_width: t975 * slope_stderr,
        r2,
    })
}
