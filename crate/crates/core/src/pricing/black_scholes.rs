//! One-dimensional driftless lognormal pricing: closed forms for calls and
//! digitals, quadrature for fractional-power calls and custom payoffs.
//!
//! All functions price `E f(X_T)` with `X_T = x exp(-v^2/2 + v Z)`,
//! `v = s sqrt(T - t)`. Drift never enters the pricing function.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature;

/// Pricing functions are never evaluated closer to maturity than this.
pub const MATURITY_FLOOR: f64 = 1e-12;

#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Value with first and second derivative in the spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Greeks1D {
    pub value: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl Greeks1D {
    pub const ONE: Greeks1D = Greeks1D {
        value: 1.0,
        delta: 0.0,
        gamma: 0.0,
    };
}

pub(crate) fn remaining_time(t: f64, horizon: f64) -> Result<f64> {
    let remaining = horizon - t;
    if !(t >= 0.0) || !(remaining >= MATURITY_FLOOR) {
        return Err(Error::TooCloseToMaturity { t, remaining });
    }
    Ok(remaining)
}

fn check_spot(x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "spot must be positive, got {x}"
        )));
    }
    Ok(())
}

fn total_vol(t: f64, s: f64, horizon: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "volatility must be positive, got {s}"
        )));
    }
    Ok(s * remaining_time(t, horizon)?.sqrt())
}

/// `(x - K)_+`. A zero strike gives the linear payoff `F = x`.
pub fn bs_call_greeks(t: f64, x: f64, strike: f64, s: f64, horizon: f64) -> Result<Greeks1D> {
    check_spot(x)?;
    let v = total_vol(t, s, horizon)?;
    if strike == 0.0 {
        return Ok(Greeks1D {
            value: x,
            delta: 1.0,
            gamma: 0.0,
        });
    }
    if !(strike > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "strike must be >= 0, got {strike}"
        )));
    }
    let d_plus = ((x / strike).ln() + 0.5 * v * v) / v;
    let d_minus = d_plus - v;
    Ok(Greeks1D {
        value: x * norm_cdf(d_plus) - strike * norm_cdf(d_minus),
        delta: norm_cdf(d_plus),
        gamma: norm_pdf(d_plus) / (x * v),
    })
}

pub fn bs_call_value(t: f64, x: f64, strike: f64, s: f64, horizon: f64) -> Result<f64> {
    bs_call_greeks(t, x, strike, s, horizon).map(|g| g.value)
}

pub fn bs_call_gradient(t: f64, x: f64, strike: f64, s: f64, horizon: f64) -> Result<f64> {
    bs_call_greeks(t, x, strike, s, horizon).map(|g| g.delta)
}

pub fn bs_call_hessian(t: f64, x: f64, strike: f64, s: f64, horizon: f64) -> Result<f64> {
    bs_call_greeks(t, x, strike, s, horizon).map(|g| g.gamma)
}

fn check_strike(strike: f64) -> Result<()> {
    if !(strike > 0.0 && strike.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "strike must be positive, got {strike}"
        )));
    }
    Ok(())
}

/// `1{x >= K}`.
pub fn bs_digital_greeks(t: f64, x: f64, strike: f64, s: f64, horizon: f64) -> Result<Greeks1D> {
    check_spot(x)?;
    check_strike(strike)?;
    let v = total_vol(t, s, horizon)?;
    let d_minus = ((x / strike).ln() - 0.5 * v * v) / v;
    let d_plus = d_minus + v;
    let density = norm_pdf(d_minus);
    Ok(Greeks1D {
        value: norm_cdf(d_minus),
        delta: density / (x * v),
        gamma: -density * d_plus / (x * x * v * v),
    })
}

pub fn bs_digital_value(t: f64, x: f64, strike: f64, s: f64, horizon: f64) -> Result<f64> {
    bs_digital_greeks(t, x, strike, s, horizon).map(|g| g.value)
}

pub fn bs_digital_gradient(t: f64, x: f64, strike: f64, s: f64, horizon: f64) -> Result<f64> {
    bs_digital_greeks(t, x, strike, s, horizon).map(|g| g.delta)
}

pub fn bs_digital_hessian(t: f64, x: f64, strike: f64, s: f64, horizon: f64) -> Result<f64> {
    bs_digital_greeks(t, x, strike, s, horizon).map(|g| g.gamma)
}

/// `ln(e^u - 1)` for `u > 0` without overflow.
fn ln_expm1(u: f64) -> f64 {
    if u > 30.0 {
        u + (-(-u).exp()).ln_1p()
    } else {
        u.exp_m1().ln()
    }
}

/// Turns the three expectations `E g`, `E g Z`, `E g (Z^2 - 1)` into value,
/// delta and gamma. Derivatives act on the Gaussian density in the log-spot,
/// so the payoff itself is never differentiated.
fn lr_greeks(moments: [f64; 3], x: f64, v: f64) -> Greeks1D {
    let [m0, m1, m2] = moments;
    Greeks1D {
        value: m0,
        delta: m1 / (x * v),
        gamma: (m2 / (v * v) - m1 / v) / (x * x),
    }
}

/// Quadrature layout for the power payoff: the exercise boundary `kink` in
/// the Gaussian variable and the integration pieces.
struct PowerLayout {
    v: f64,
    kink: f64,
    ln_k: f64,
    alpha: f64,
    pieces: [(f64, f64, bool); 2],
}

impl PowerLayout {
    fn new(t: f64, x: f64, strike: f64, alpha: f64, s: f64, horizon: f64) -> Result<Self> {
        check_spot(x)?;
        check_strike(strike)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "power exponent must lie in (0,1), got {alpha}"
            )));
        }
        let v = total_vol(t, s, horizon)?;
        let kink = ((strike / x).ln() + 0.5 * v * v) / v;
        // the integrand is concentrated around z = alpha v
        let centre = alpha * v;
        let (lower, upper, singular) = if kink >= centre - 13.0 {
            let c = kink - centre;
            let upper = if c >= 0.0 {
                kink - c + (c * c + 90.0).sqrt()
            } else {
                centre + 13.0
            };
            (kink, upper, true)
        } else {
            (centre - 13.0, centre + 13.0, false)
        };
        // clustered nodes resolve the (z - kink)^alpha onset, plain ones the bulk
        let split = if singular {
            (lower + 1.0).min(upper)
        } else {
            lower
        };
        Ok(Self {
            v,
            kink,
            ln_k: strike.ln(),
            alpha,
            pieces: [(lower, split, true), (split, upper, false)],
        })
    }

    fn integrand(&self) -> impl Fn(f64) -> [f64; 3] + '_ {
        move |z| {
            let w = self.v * (z - self.kink);
            if w <= 0.0 {
                return [0.0; 3];
            }
            let g = (self.alpha * (self.ln_k + ln_expm1(w))).exp();
            [g, g * z, g * (z * z - 1.0)]
        }
    }
}

/// `(x - K)_+^alpha`, `alpha` in `(0, 1)`.
pub fn bs_power_greeks(
    t: f64,
    x: f64,
    strike: f64,
    alpha: f64,
    s: f64,
    horizon: f64,
) -> Result<Greeks1D> {
    let layout = PowerLayout::new(t, x, strike, alpha, s, horizon)?;
    let r =
        quadrature::piecewise_normal_integral("power payoff", &layout.pieces, layout.integrand())?;
    Ok(lr_greeks(r.values, x, layout.v))
}

/// Rule size behind [`Factor1D::hedge_greeks`].
pub const HEDGE_RULE_NODES: usize = 32;

/// As [`bs_power_greeks`] with a fixed rule of `nodes` points per piece and
/// no convergence check.
pub fn bs_power_greeks_fixed(
    t: f64,
    x: f64,
    strike: f64,
    alpha: f64,
    s: f64,
    horizon: f64,
    nodes: usize,
) -> Result<Greeks1D> {
    let layout = PowerLayout::new(t, x, strike, alpha, s, horizon)?;
    let f = layout.integrand();
    let mut acc = [0.0; 3];
    for &(lo, hi, singular) in &layout.pieces {
        let (v, _) = quadrature::truncated_normal_integral_fixed(nodes, lo, hi, singular, &f);
        for k in 0..3 {
            acc[k] += v[k];
        }
    }
    Ok(lr_greeks(acc, x, layout.v))
}

pub fn bs_power_value(
    t: f64,
    x: f64,
    strike: f64,
    alpha: f64,
    s: f64,
    horizon: f64,
) -> Result<f64> {
    bs_power_greeks(t, x, strike, alpha, s, horizon).map(|g| g.value)
}

pub fn bs_power_gradient(
    t: f64,
    x: f64,
    strike: f64,
    alpha: f64,
    s: f64,
    horizon: f64,
) -> Result<f64> {
    bs_power_greeks(t, x, strike, alpha, s, horizon).map(|g| g.delta)
}

pub fn bs_power_hessian(
    t: f64,
    x: f64,
    strike: f64,
    alpha: f64,
    s: f64,
    horizon: f64,
) -> Result<f64> {
    bs_power_greeks(t, x, strike, alpha, s, horizon).map(|g| g.gamma)
}

/// A user supplied one-dimensional payoff, priced by Gauss-Hermite
/// quadrature. Suitable for smooth payoffs only; kinks surface as
/// quadrature non-convergence.
#[derive(Clone)]
pub struct CustomPayoff(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomPayoff(..)")
    }
}

pub fn custom_greeks(
    payoff: &CustomPayoff,
    t: f64,
    x: f64,
    s: f64,
    horizon: f64,
) -> Result<Greeks1D> {
    check_spot(x)?;
    let v = total_vol(t, s, horizon)?;
    let drift = x.ln() - 0.5 * v * v;
    let r = quadrature::normal_expectation("custom payoff", |z| {
        let g = (payoff.0)((drift + v * z).exp());
        [g, g * z, g * (z * z - 1.0)]
    })?;
    Ok(lr_greeks(r.values, x, v))
}

#[derive(Debug, Clone)]
pub enum FactorKind {
    /// `f = 1`; coordinates without optionality.
    Constant,
    Call,
    Digital,
    Power {
        alpha: f64,
    },
    Custom(CustomPayoff),
}

/// One coordinate's payoff factor.
#[derive(Debug, Clone)]
pub struct Factor1D {
    pub kind: FactorKind,
    pub strike: f64,
    pub vol: f64,
    pub horizon: f64,
}

impl Factor1D {
    pub fn new(kind: FactorKind, strike: f64, vol: f64, horizon: f64) -> Result<Self> {
        let f = Self {
            kind,
            strike,
            vol,
            horizon,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn constant(vol: f64, horizon: f64) -> Self {
        Self {
            kind: FactorKind::Constant,
            strike: 0.0,
            vol,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.vol > 0.0 && self.vol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "volatility must be positive, got {}",
                self.vol
            )));
        }
        match self.kind {
            FactorKind::Constant | FactorKind::Custom(_) => Ok(()),
            FactorKind::Call => {
                if self.strike >= 0.0 && self.strike.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "strike must be >= 0, got {}",
                        self.strike
                    )))
                }
            }
            FactorKind::Digital => check_strike(self.strike),
            FactorKind::Power { alpha } => {
                check_strike(self.strike)?;
                if !(alpha > 0.0 && alpha < 0.5) {
                    return Err(Error::InvalidParameter(format!(
                        "power exponent must lie in (0, 1/2), got {alpha}"
                    )));
                }
                if alpha < 0.02 || alpha > 0.48 {
                    log::warn!("power exponent {alpha} is close to the boundary of (0, 1/2); the blow-up exponent approaches 3/4");
                }
                Ok(())
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FactorKind::Constant)
    }

    pub fn payoff(&self, x: f64) -> f64 {
        match &self.kind {
            FactorKind::Constant => 1.0,
            FactorKind::Call => (x - self.strike).max(0.0),
            FactorKind::Digital => {
                if x >= self.strike {
                    1.0
                } else {
                    0.0
                }
            }
            FactorKind::Power { alpha } => (x - self.strike).max(0.0).powf(*alpha),
            FactorKind::Custom(p) => (p.0)(x),
        }
    }

    pub fn greeks(&self, t: f64, x: f64) -> Result<Greeks1D> {
        match &self.kind {
            FactorKind::Constant => {
                remaining_time(t, self.horizon)?;
                Ok(Greeks1D::ONE)
            }
            FactorKind::Call => bs_call_greeks(t, x, self.strike, self.vol, self.horizon),
            FactorKind::Digital => bs_digital_greeks(t, x, self.strike, self.vol, self.horizon),
            FactorKind::Power { alpha } => {
                bs_power_greeks(t, x, self.strike, *alpha, self.vol, self.horizon)
            }
            FactorKind::Custom(p) => custom_greeks(p, t, x, self.vol, self.horizon),
        }
    }

    /// Greeks for rebalancing decisions. Power factors use a fixed
    /// [`HEDGE_RULE_NODES`]-point rule without the convergence check; all
    /// other kinds coincide with [`Factor1D::greeks`].
    pub fn hedge_greeks(&self, t: f64, x: f64) -> Result<Greeks1D> {
        match self.kind {
            FactorKind::Power { alpha } => bs_power_greeks_fixed(
                t,
                x,
                self.strike,
                alpha,
                self.vol,
                self.horizon,
                HEDGE_RULE_NODES,
            ),
            _ => self.greeks(t, x),
        }
    }

    /// Blow-up exponent of `E[(Q^2 d^2 F)^2]` near maturity, when known.
    pub fn theta_hint(&self) -> Option<f64> {
        match self.kind {
            FactorKind::Constant => Some(0.0),
            FactorKind::Call => Some(0.25),
            FactorKind::Power { alpha } => Some((3.0 - 2.0 * alpha) / 4.0),
            FactorKind::Digital => Some(0.75),
            FactorKind::Custom(_) => None,
        }
    }

    /// Polynomial growth exponent of the payoff.
    pub fn growth_exponent(&self) -> f64 {
        match self.kind {
            FactorKind::Constant | FactorKind::Digital => 0.0,
            FactorKind::Call => 1.0,
            FactorKind::Power { alpha } => alpha,
            FactorKind::Custom(_) => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn digital_at_the_money() {
        let g = bs_digital_greeks(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(g.value, 0.3085375387259869, max_relative = 1e-12);
        assert_relative_eq!(g.delta, 0.3520653267642995, max_relative = 1e-12);
    }

    #[test]
    fn call_gamma_matches_printed_formula() {
        // (1 / (x sqrt(T-t))) phi((ln(x/K) + (T-t)/2) / sqrt(T-t)) with s = 1
        for &(t, x, k) in &[(0.0, 1.0, 1.0), (0.3, 1.4, 0.8), (0.9, 0.7, 1.1)] {
            let tau: f64 = 1.0 - t;
            let printed = 1.0 / (x * tau.sqrt()) / (2.0 * PI).sqrt()
                * (-(((x / k).ln() + tau / 2.0) / tau.sqrt()).powi(2) / 2.0).exp();
            let g = bs_call_greeks(t, x, k, 1.0, 1.0).unwrap();
            assert_relative_eq!(g.gamma, printed, max_relative = 1e-13);
        }
        assert_relative_eq!(
            bs_call_hessian(0.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
            0.3520653267642995,
            max_relative = 1e-12
        );
    }

    #[test]
    fn call_value_and_linear_limit() {
        assert_relative_eq!(
            bs_call_value(0.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
            0.38292492254802624,
            max_relative = 1e-12
        );
        let g = bs_call_greeks(0.2, 1.7, 0.0, 1.0, 1.0).unwrap();
        assert_eq!((g.value, g.delta, g.gamma), (1.7, 1.0, 0.0));
        assert_relative_eq!(
            bs_call_value(0.0, 1.3, 1e-12, 1.0, 1.0).unwrap(),
            1.3,
            max_relative = 1e-11
        );
    }

    #[test]
    fn digital_limits() {
        assert!(bs_digital_value(0.0, 1e6, 1.0, 1.0, 1.0).unwrap() > 1.0 - 1e-12);
        assert!(bs_digital_value(0.0, 1e-6, 1.0, 1.0, 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn maturity_is_rejected() {
        assert!(matches!(
            bs_call_value(1.0, 1.0, 1.0, 1.0, 1.0),
            Err(Error::TooCloseToMaturity { .. })
        ));
        assert!(matches!(
            bs_digital_value(1.0 - 1e-13, 1.0, 1.0, 1.0, 1.0),
            Err(Error::TooCloseToMaturity { .. })
        ));
        assert!(bs_digital_value(1.0 - 1e-11, 1.0, 1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn power_small_strike_matches_lognormal_moment() {
        let v = bs_power_value(0.0, 1.0, 1e-10, 0.25, 1.0, 1.0).unwrap();
        let moment = (0.25f64 * (0.25 - 1.0) / 2.0).exp();
        assert_relative_eq!(moment, 0.9105103613800342, max_relative = 1e-12);
        assert_relative_eq!(v, moment, max_relative = 1e-6);
    }

    #[test]
    fn power_near_one_approaches_call() {
        let call = bs_call_value(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let near = bs_power_greeks(0.0, 1.0, 1.0, 0.999, 1.0, 1.0).unwrap();
        assert!((near.value - call).abs() < 1e-2, "{} vs {call}", near.value);
    }

    #[test]
    fn power_greeks_are_finite_close_to_maturity() {
        for &x in &[0.5, 0.999, 1.0, 1.001, 2.0] {
            let g = bs_power_greeks(1.0 - 1e-11, x, 1.0, 0.25, 1.0, 1.0).unwrap();
            assert!(
                g.value.is_finite() && g.delta.is_finite() && g.gamma.is_finite(),
                "{x}: {g:?}"
            );
        }
    }

    #[test]
    fn fixed_hedge_rule_tracks_converged_rule() {
        let mut worst: f64 = 0.0;
        for i in 0..60 {
            for j in 0..30 {
                let x = (-3.0 + 6.0 * i as f64 / 59.0f64).exp();
                let t = 1.0 - 10f64.powf(-(j as f64) / 2.5);
                let exact = bs_power_greeks(t, x, 1.0, 0.25, 1.0, 1.0).unwrap();
                let fast =
                    bs_power_greeks_fixed(t, x, 1.0, 0.25, 1.0, 1.0, HEDGE_RULE_NODES).unwrap();
                // absolute error against the size of the value-per-spot scale
                let scale = exact.delta.abs().max(exact.value / x).max(1e-12);
                worst = worst.max((fast.delta - exact.delta).abs() / scale);
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn custom_smooth_payoff_matches_closed_form() {
        // f(x) = x^2: E X_T^2 = x^2 exp(v^2)
        let p = CustomPayoff(Arc::new(|x| x * x));
        let g = custom_greeks(&p, 0.5, 1.3, 0.8, 1.0).unwrap();
        let v2: f64 = 0.64 * 0.5;
        assert_relative_eq!(g.value, 1.69 * v2.exp(), max_relative = 1e-10);
        assert_relative_eq!(g.delta, 2.0 * 1.3 * v2.exp(), max_relative = 1e-9);
        assert_relative_eq!(g.gamma, 2.0 * v2.exp(), max_relative = 1e-8);
    }

    #[test]
    fn custom_kinked_payoff_reports_non_convergence() {
        let p = CustomPayoff(Arc::new(|x: f64| (x - 1.0).max(0.0).sqrt()));
        assert!(matches!(
            custom_greeks(&p, 0.9, 1.0, 1.0, 1.0),
            Err(Error::QuadratureNonConvergence(_))
        ));
    }

    #[test]
    fn factor_validation() {
        assert!(Factor1D::new(FactorKind::Power { alpha: 0.6 }, 1.0, 1.0, 1.0).is_err());
        assert!(Factor1D::new(FactorKind::Digital, 0.0, 1.0, 1.0).is_err());
        assert!(Factor1D::new(FactorKind::Call, 1.0, 0.0, 1.0).is_err());
        assert!(Factor1D::new(FactorKind::Call, 0.0, 1.0, 1.0).is_ok());
    }
}
