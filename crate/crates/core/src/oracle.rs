//! Independent reference values for tests: closed forms, finite-difference
//! PDE residuals and plain Monte Carlo. Deliberately simple and slow.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sample_exact_into, DiffusionSpec};
use crate::pricing::{PricingModel, MATURITY_FLOOR};
use crate::rng::SeedSpec;
use crate::stats::MeanEstimate;
use crate::timenets::TimeNet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub t: f64,
    pub x: Vec<f64>,
    /// `dF/dt + 1/2 sum_kl A_kl d^2F/dx_k dx_l`.
    pub residual: f64,
    /// Largest absolute term of the sum.
    pub scale: f64,
    pub relative: f64,
}

/// Finite-difference residual of the backward equation at `(t, x)`.
///
/// `dF/dt` is a central difference with step `h_t`. The spatial Hessian is
/// the pricing model's own when it has one, otherwise central differences
/// of the gradient with relative step `h_x` (see [`fd_hessian`]); the
/// gradient is already relatively accurate where second differences of a
/// value close to one would lose it to roundoff.
pub fn pde_residual(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    t: f64,
    x: &[f64],
    h_t: f64,
    h_x: f64,
) -> Result<ResidualReport> {
    let horizon = pricing.horizon();
    if !(h_t > 0.0 && h_x > 0.0) || t - h_t < 0.0 || t + h_t > horizon - MATURITY_FLOOR {
        return Err(Error::InvalidParameter(format!(
            "steps h_t = {h_t}, h_x = {h_x} do not fit around t = {t} in [0, {horizon})"
        )));
    }
    let d = x.len();
    let dt = (pricing.value(t + h_t, x)? - pricing.value(t - h_t, x)?) / (2.0 * h_t);
    let hess = if pricing.has_analytic_hessian() {
        pricing.hessian(t, x)?
    } else {
        fd_hessian(pricing, t, x, h_x)?
    };
    let a = spec.a_matrix(x);
    let mut residual = dt;
    let mut scale = dt.abs();
    for k in 0..d {
        for l in 0..d {
            let term = 0.5 * a[(k, l)] * hess[(k, l)];
            residual += term;
            scale = scale.max(term.abs());
        }
    }
    if !residual.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "non-finite residual at t = {t}, x = {x:?}"
        )));
    }
    Ok(ResidualReport {
        t,
        x: x.to_vec(),
        residual,
        scale,
        relative: residual.abs() / scale,
    })
}

fn fd_steps(x: &[f64], h_rel: f64) -> Vec<f64> {
    x.iter().map(|xi| h_rel * xi.abs().max(1e-3)).collect()
}

/// Central differences of `F(t, .)` with steps `h_rel * |x_i|`.
pub fn fd_gradient(pricing: &PricingModel, t: f64, x: &[f64], h_rel: f64) -> Result<Vec<f64>> {
    let steps = fd_steps(x, h_rel);
    let mut y = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        y[k] = x[k] + steps[k];
        let up = pricing.value(t, &y)?;
        y[k] = x[k] - steps[k];
        let down = pricing.value(t, &y)?;
        y[k] = x[k];
        g.push((up - down) / (2.0 * steps[k]));
    }
    Ok(g)
}

/// Central differences of the model's gradient, symmetrized.
pub fn fd_hessian(
    pricing: &PricingModel,
    t: f64,
    x: &[f64],
    h_rel: f64,
) -> Result<nalgebra::DMatrix<f64>> {
    let d = x.len();
    let steps = fd_steps(x, h_rel);
    let mut y = x.to_vec();
    let mut h = nalgebra::DMatrix::zeros(d, d);
    for k in 0..d {
        y[k] = x[k] + steps[k];
        let up = pricing.gradient(t, &y)?;
        y[k] = x[k] - steps[k];
        let down = pricing.gradient(t, &y)?;
        y[k] = x[k];
        for l in 0..d {
            h[(l, k)] = (up[l] - down[l]) / (2.0 * steps[k]);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// `E |error(T)|^2 = 2 d sum_i (t_i - t_{i-1})^2` for `f(x) = |x|^2` under
/// `d`-dimensional standard Brownian motion.
pub fn analytic_quadratic_error(net: &TimeNet, d: usize) -> f64 {
    2.0 * d as f64 * net.spacings().map(|h| h * h).sum::<f64>()
}

/// `E [(x^2 d^2 F / dx^2)(t, X_t)]^2` for the call with unit volatility on
/// `X_0 = 1`, in closed form.
pub fn call_gamma_moment(strike: f64, t: f64, horizon: f64) -> f64 {
    let c = 0.5 * horizon + strike.ln();
    strike / (2.0 * PI * (horizon * horizon - t * t).sqrt()) * (-c * c / (horizon + t)).exp()
}

/// Plain Monte Carlo of `E f(X_T)` from `x_0`.
pub fn mc_payoff_expectation(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    paths: usize,
    master_seed: u64,
) -> Result<MeanEstimate> {
    if paths < 2 {
        return Err(Error::InvalidParameter(
            "at least two paths are required".into(),
        ));
    }
    let times = [0.0, pricing.horizon()];
    let d = spec.dim();
    let mut states = Vec::new();
    let mut values = Vec::with_capacity(paths);
    for i in 0..paths as u64 {
        sample_exact_into(spec, &times, SeedSpec::new(master_seed, i), &mut states)?;
        values.push(pricing.payoff(&states[d..])?);
    }
    Ok(MeanEstimate::from_samples(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::BmQuadratic;
    use crate::timenets::equidistant_net;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_error_closed_form() {
        assert_eq!(
            analytic_quadratic_error(&equidistant_net(1.0, 1).unwrap(), 1),
            2.0
        );
        assert_eq!(
            analytic_quadratic_error(&equidistant_net(1.0, 4).unwrap(), 1),
            0.5
        );
        let net = TimeNet::new(vec![0.0, 0.75, 1.0]).unwrap();
        assert_relative_eq!(analytic_quadratic_error(&net, 2), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn gamma_moment_at_origin() {
        assert_relative_eq!(
            call_gamma_moment(1.0, 0.0, 1.0),
            (-0.25f64).exp() / (2.0 * PI),
            max_relative = 1e-15
        );
    }

    #[test]
    fn quadratic_residual_vanishes() {
        let spec = DiffusionSpec::standard_brownian(2).unwrap();
        let p = PricingModel::Quadratic(BmQuadratic::new(2, 1.0).unwrap());
        let r = pde_residual(&spec, &p, 0.5, &[0.3, -1.2], 1e-5, 1e-4).unwrap();
        assert!(r.relative < 1e-8, "{r:?}");
    }

    #[test]
    fn steps_must_fit() {
        let spec = DiffusionSpec::driftless_gbm(vec![1.0]).unwrap();
        let p = PricingModel::digital(1.0, 1.0, 1.0).unwrap();
        assert!(pde_residual(&spec, &p, 1e-6, &[1.0], 1e-5, 1e-4).is_err());
    }
}
