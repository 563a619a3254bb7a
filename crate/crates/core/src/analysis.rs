//! Diagnostics: the blow-up exponent `theta` of the weighted second
//! derivative, the error density `H^2`, the one-step error profile, the
//! choice of `eta`, and convergence-rate regressions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sample_exact_into, DiffusionSpec};
use crate::pricing::PricingModel;
use crate::rng::SeedSpec;
use crate::stats::{ols, MeanEstimate};

/// Window of the theta regression in `T - t`.
pub const THETA_WINDOW: (f64, f64) = (0.5, 1e-3);
pub const THETA_GRID_POINTS: usize = 20;
/// Rate fits drop nets with fewer intervals than this.
pub const RATE_FIT_MIN_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub t: f64,
    /// `max_{a,b} E[A_aa A_bb (d^2 F / dx_a dx_b)^2]`.
    pub m: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub theta_hat: f64,
    pub ci95: (f64, f64),
    pub grid: Vec<ThetaPoint>,
    pub r2: f64,
}

impl ThetaFit {
    /// The estimate is outside `[0, 1)`, where the rate theory applies.
    pub fn assumption_violated(&self) -> bool {
        !(self.theta_hat >= 0.0 && self.theta_hat < 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2Point {
    pub u: f64,
    pub h2: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Curve {
    pub points: Vec<H2Point>,
}

impl H2Curve {
    /// `min_u (H^2(u) - margin * stderr(u))`.
    pub fn infimum_lower_bound(&self, margin: f64) -> f64 {
        self.points
            .iter()
            .map(|p| p.h2 - margin * p.stderr)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci95_slope: (f64, f64),
    pub r2: f64,
    pub points_used: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub u: f64,
    /// `sum_{l,k} E (d_k F(u, X_u) - d_k F(a, X_a))^2 sigma_kl(X_u)^2`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `int_a^u m(t) dt`.
    pub rhs: f64,
}

impl ProfilePoint {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs
    }
}

/// 20 times with `T - t` log-spaced from `T/2` down to `1e-3`.
pub fn default_theta_grid(horizon: f64) -> Vec<f64> {
    let (hi, lo) = (THETA_WINDOW.0 * horizon, THETA_WINDOW.1);
    let k = THETA_GRID_POINTS - 1;
    (0..THETA_GRID_POINTS)
        .map(|i| {
            let frac = i as f64 / k as f64;
            horizon - (hi.ln() + frac * (lo.ln() - hi.ln())).exp()
        })
        .collect()
}

fn check_setup(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    times: &[f64],
    paths: usize,
) -> Result<()> {
    pricing.check_compatible(spec)?;
    if times.is_empty() {
        return Err(Error::InvalidParameter("time grid is empty".into()));
    }
    let horizon = pricing.horizon();
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && **t < horizon)) {
        return Err(Error::InvalidParameter(format!(
            "grid time {t} outside (0, T)"
        )));
    }
    if paths < 2 {
        return Err(Error::InvalidParameter(
            "at least two paths are required".into(),
        ));
    }
    Ok(())
}

/// Per-path values of `g(x, A(x), sigma(x), Hess F(t, x))` at `X_t`.
fn hessian_samples<const K: usize>(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    t: f64,
    paths: usize,
    master_seed: u64,
    g: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> [f64; K] + Sync,
) -> Result<Vec<[f64; K]>> {
    let times = [0.0, t];
    let d = spec.dim();
    (0..paths as u64)
        .into_par_iter()
        .map_init(Vec::new, |states, i| {
            sample_exact_into(spec, &times, SeedSpec::new(master_seed, i), states)?;
            let x = &states[d..2 * d];
            let hess = pricing.hessian(t, x)?;
            Ok(g(&spec.sigma(x), &hess))
        })
        .collect()
}

fn column(samples: &[Vec<f64>], k: usize) -> Vec<f64> {
    samples.iter().map(|s| s[k]).collect()
}

/// `m(t)` with the standard error of the maximizing pair.
fn sup_pair_moment(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    t: f64,
    paths: usize,
    master_seed: u64,
) -> Result<ThetaPoint> {
    let d = spec.dim();
    let samples: Vec<Vec<f64>> = {
        let times = [0.0, t];
        (0..paths as u64)
            .into_par_iter()
            .map_init(Vec::new, |states, i| -> Result<Vec<f64>> {
                sample_exact_into(spec, &times, SeedSpec::new(master_seed, i), states)?;
                let x = &states[d..2 * d];
                let hess = pricing.hessian(t, x)?;
                let a = spec.a_matrix(x);
                let mut out = Vec::with_capacity(d * d);
                for i in 0..d {
                    for j in 0..d {
                        let h = hess[(i, j)];
                        out.push(a[(i, i)] * a[(j, j)] * h * h);
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?
    };
    let mut best = ThetaPoint {
        t,
        m: f64::NEG_INFINITY,
        stderr: f64::NAN,
    };
    for k in 0..d * d {
        let m = MeanEstimate::from_samples(&column(&samples, k));
        if m.mean > best.m {
            best = ThetaPoint {
                t,
                m: m.mean,
                stderr: m.stderr,
            };
        }
    }
    Ok(best)
}

/// Estimates `theta` from `m(t) ~ C (T - t)^{-2 theta}` by least squares of
/// `log m` on `log(T - t)`. Nonpositive estimates of `m` are dropped.
pub fn estimate_theta(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    t_grid: &[f64],
    paths: usize,
    master_seed: u64,
) -> Result<ThetaFit> {
    check_setup(spec, pricing, t_grid, paths)?;
    let horizon = pricing.horizon();
    let mut grid = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        grid.push(sup_pair_moment(spec, pricing, t, paths, master_seed)?);
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for p in &grid {
        if p.m > 0.0 && p.m.is_finite() {
            xs.push((horizon - p.t).ln());
            ys.push(p.m.ln());
        } else {
            log::warn!(
                "m(t) estimate {} at t = {} is not positive; excluded from the fit",
                p.m,
                p.t
            );
        }
    }
    let fit = ols(&xs, &ys)?;
    let theta_hat = -fit.slope / 2.0;
    let half = fit.slope_ci_half_width / 2.0;
    Ok(ThetaFit {
        theta_hat,
        ci95: (theta_hat - half, theta_hat + half),
        grid,
        r2: fit.r2,
    })
}

/// `H^2(u) = E |sigma(X_u)^T Hess F(u, X_u) sigma(X_u)|_F^2`.
pub fn estimate_h2(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    u_grid: &[f64],
    paths: usize,
    master_seed: u64,
) -> Result<H2Curve> {
    check_setup(spec, pricing, u_grid, paths)?;
    let mut points = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let samples = hessian_samples(spec, pricing, u, paths, master_seed, |sigma, hess| {
            let inner = sigma.transpose() * hess * sigma;
            [inner.iter().map(|v| v * v).sum::<f64>()]
        })?;
        let values: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let m = MeanEstimate::from_samples(&values);
        points.push(H2Point {
            u,
            h2: m.mean,
            stderr: m.stderr,
        });
    }
    Ok(H2Curve { points })
}

/// `E sum_{a,b} A_aa A_bb (d^2 F / dx_a dx_b)^2` at each `u`; agrees with
/// `H^2` for diagonal models.
pub fn estimate_pair_sum(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    u_grid: &[f64],
    paths: usize,
    master_seed: u64,
) -> Result<H2Curve> {
    check_setup(spec, pricing, u_grid, paths)?;
    let mut points = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let d = spec.dim();
        let samples = hessian_samples(spec, pricing, u, paths, master_seed, |sigma, hess| {
            let a = sigma * sigma.transpose();
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += a[(i, i)] * a[(j, j)] * hess[(i, j)] * hess[(i, j)];
                }
            }
            [acc]
        })?;
        let values: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let m = MeanEstimate::from_samples(&values);
        points.push(H2Point {
            u,
            h2: m.mean,
            stderr: m.stderr,
        });
    }
    Ok(H2Curve { points })
}

/// `eta = 0` for `theta < 1/2`, otherwise `eta = theta`, the midpoint of the
/// admissible interval `(2 theta - 1, 1)`.
pub fn choose_eta(theta: f64) -> Result<f64> {
    if theta >= 1.0 {
        return Err(Error::AssumptionViolated(format!(
            "theta = {theta} >= 1: no eta-net restores the rate"
        )));
    }
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0, 1), got {theta}"
        )));
    }
    Ok(if theta < 0.5 { 0.0 } else { theta })
}

/// Least squares of `log rms` on `log n` over points with `n >= 8`.
pub fn fit_rate(points: &[(usize, f64)]) -> Result<RateFit> {
    let used: Vec<(usize, f64)> = points
        .iter()
        .copied()
        .filter(|(n, _)| *n >= RATE_FIT_MIN_N)
        .collect();
    if used.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "rate fit needs at least 4 points with n >= {RATE_FIT_MIN_N}, got {}",
            used.len()
        )));
    }
    if let Some((n, r)) = used.iter().find(|(_, r)| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::DegenerateFit(format!(
            "rms must be positive, got {r} at n = {n}"
        )));
    }
    let xs: Vec<f64> = used.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = used.iter().map(|(_, r)| r.ln()).collect();
    let fit = ols(&xs, &ys)?;
    let half = fit.slope_ci_half_width;
    Ok(RateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        ci95_slope: (fit.slope - half, fit.slope + half),
        r2: fit.r2,
        points_used: used,
    })
}

/// Sub-intervals per grid segment for the trapezoidal `int m(t) dt`.
const PROFILE_SUBDIVISIONS: usize = 8;

/// One-step error profile on `[a, u]` for each `u` in `u_grid`.
pub fn one_step_profile(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    a: f64,
    u_grid: &[f64],
    paths: usize,
    master_seed: u64,
) -> Result<Vec<ProfilePoint>> {
    check_setup(spec, pricing, u_grid, paths)?;
    if !(a >= 0.0) || u_grid.iter().any(|u| *u < a) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= a <= min(u_grid), got a = {a}"
        )));
    }
    if u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "u_grid must be strictly ascending".into(),
        ));
    }
    let d = spec.dim();

    // int_a^u m(t) dt by the trapezoidal rule on a common sub-grid
    let mut rhs = Vec::with_capacity(u_grid.len());
    let mut acc = 0.0;
    let mut left = a;
    let mut m_left = if a > 0.0 {
        sup_pair_moment(spec, pricing, a, paths, master_seed)?.m
    } else {
        f64::NAN
    };
    for &u in u_grid {
        if u > left {
            let h = (u - left) / PROFILE_SUBDIVISIONS as f64;
            for k in 1..=PROFILE_SUBDIVISIONS {
                let t = left + k as f64 * h;
                let m_right = sup_pair_moment(spec, pricing, t, paths, master_seed)?.m;
                if m_left.is_nan() {
                    // t = 0 endpoint: m is continuous there; reuse the first interior value
                    m_left = m_right;
                }
                acc += 0.5 * h * (m_left + m_right);
                m_left = m_right;
            }
            left = u;
        }
        rhs.push(acc);
    }

    let mut out = Vec::with_capacity(u_grid.len());
    for (&u, &r) in u_grid.iter().zip(&rhs) {
        if u == a {
            out.push(ProfilePoint {
                u,
                lhs: 0.0,
                lhs_stderr: 0.0,
                rhs: r,
            });
            continue;
        }
        let times: Vec<f64> = if a > 0.0 {
            vec![0.0, a, u]
        } else {
            vec![0.0, u]
        };
        let values: Vec<f64> = (0..paths as u64)
            .into_par_iter()
            .map_init(Vec::new, |states, i| -> Result<f64> {
                sample_exact_into(spec, &times, SeedSpec::new(master_seed, i), states)?;
                let xa = &states[(times.len() - 2) * d..(times.len() - 1) * d];
                let xu = &states[(times.len() - 1) * d..];
                let ga = pricing.gradient(a, xa)?;
                let gu = pricing.gradient(u, xu)?;
                let sigma = spec.sigma(xu);
                let mut acc = 0.0;
                for k in 0..d {
                    let diff = gu[k] - ga[k];
                    for l in 0..d {
                        acc += diff * diff * sigma[(k, l)] * sigma[(k, l)];
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let m = MeanEstimate::from_samples(&values);
        out.push(ProfilePoint {
            u,
            lhs: m.mean,
            lhs_stderr: m.stderr,
            rhs: r,
        });
    }
    Ok(out)
}
