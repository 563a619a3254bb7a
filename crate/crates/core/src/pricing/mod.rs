//! Pricing functions `F(t, x) = E[f(X_T) | X_t = x]` with spatial gradient
//! and Hessian, for a small catalogue of payoffs.
//!
//! `F` solves `dF/dt + 1/2 sum A_kl d^2F/dx_k dx_l = 0` with no drift term,
//! so every closed form here is the driftless one regardless of the drift of
//! the simulated model.

pub mod black_scholes;
mod product;
mod quadratic;
mod sum_digital;

use nalgebra::DMatrix;

pub use black_scholes::{
    bs_call_gradient, bs_call_greeks, bs_call_hessian, bs_call_value, bs_digital_gradient,
    bs_digital_greeks, bs_digital_hessian, bs_digital_value, bs_power_gradient, bs_power_greeks,
    bs_power_greeks_fixed, bs_power_hessian, bs_power_value, norm_cdf, norm_pdf, CustomPayoff,
    Factor1D, FactorKind, Greeks1D, HEDGE_RULE_NODES, MATURITY_FLOOR,
};
pub use product::{ProductPricing, MAX_PRODUCT_DIM};
pub use quadratic::BmQuadratic;
pub use sum_digital::SumDigital2D;

use crate::error::{Error, Result};
use crate::models::{Case, DiffusionSpec};

#[derive(Debug, Clone)]
pub enum PricingModel {
    Product(ProductPricing),
    SumDigital2D(SumDigital2D),
    Quadratic(BmQuadratic),
}

impl PricingModel {
    /// Single-coordinate call `(x - K)_+`.
    pub fn call(strike: f64, vol: f64, horizon: f64) -> Result<Self> {
        Self::single(FactorKind::Call, strike, vol, horizon)
    }

    pub fn digital(strike: f64, vol: f64, horizon: f64) -> Result<Self> {
        Self::single(FactorKind::Digital, strike, vol, horizon)
    }

    pub fn power(strike: f64, alpha: f64, vol: f64, horizon: f64) -> Result<Self> {
        Self::single(FactorKind::Power { alpha }, strike, vol, horizon)
    }

    fn single(kind: FactorKind, strike: f64, vol: f64, horizon: f64) -> Result<Self> {
        let factor = Factor1D::new(kind, strike, vol, horizon)?;
        Ok(Self::Product(ProductPricing::new(vec![factor])?))
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Self::Product(p) => p.horizon(),
            Self::SumDigital2D(p) => p.horizon,
            Self::Quadratic(p) => p.horizon,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Product(p) => p.dim(),
            Self::SumDigital2D(_) => 2,
            Self::Quadratic(p) => p.dim,
        }
    }

    /// Catalogue key as used in experiment configurations.
    pub fn key(&self) -> &'static str {
        match self {
            Self::Product(p) if p.dim() == 1 => match p.factors()[0].kind {
                FactorKind::Call => "call",
                FactorKind::Digital => "digital",
                FactorKind::Power { .. } => "power",
                FactorKind::Constant | FactorKind::Custom(_) => "product",
            },
            Self::Product(_) => "product",
            Self::SumDigital2D(_) => "sum_digital_2d",
            Self::Quadratic(_) => "bm_quadratic",
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Terminal payoff `f(x)`.
    pub fn payoff(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            Self::Product(p) => p.payoff(x),
            Self::SumDigital2D(p) => p.payoff(x),
            Self::Quadratic(p) => p.payoff(x),
        })
    }

    pub fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match self {
            Self::Product(p) => p.value(t, x),
            Self::SumDigital2D(p) => p.value(t, x),
            Self::Quadratic(p) => p.value(t, x),
        }
    }

    /// Writes `dF/dx_k` into `out` and returns `F`.
    pub fn value_gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<f64> {
        self.check_dim(x)?;
        if out.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: out.len(),
            });
        }
        match self {
            Self::Product(p) => p.value_gradient_into(t, x, out),
            Self::SumDigital2D(p) => p.value_gradient_into(t, x, out),
            Self::Quadratic(p) => p.value_gradient_into(t, x, out),
        }
    }

    pub fn gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.value_gradient_into(t, x, out).map(|_| ())
    }

    /// Hedge ratios for the rebalancing loop; see [`Factor1D::hedge_greeks`].
    pub fn hedge_ratio_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Self::Product(p) => {
                self.check_dim(x)?;
                p.hedge_gradient_into(t, x, out)
            }
            _ => self.gradient_into(t, x, out),
        }
    }

    pub fn gradient(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(t, x, &mut g)?;
        Ok(g)
    }

    pub fn hessian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        match self {
            Self::Product(p) => p.hessian(t, x),
            Self::SumDigital2D(p) => p.hessian(t, x),
            Self::Quadratic(p) => p.hessian(t, x),
        }
    }

    /// `true` when the Hessian is computed from closed forms or quadrature
    /// rather than by differencing values.
    pub fn has_analytic_hessian(&self) -> bool {
        !matches!(self, Self::SumDigital2D(_))
    }

    /// Known blow-up exponent `theta`, absent for custom payoffs.
    pub fn theta_hint(&self) -> Option<f64> {
        match self {
            Self::Product(p) => p.theta_hint(),
            Self::SumDigital2D(_) => Some(0.75),
            Self::Quadratic(_) => Some(0.0),
        }
    }

    /// Polynomial growth exponent `q` of the payoff.
    pub fn growth_exponent(&self) -> f64 {
        match self {
            Self::Product(p) => p.factors().iter().map(Factor1D::growth_exponent).sum(),
            Self::SumDigital2D(_) => 0.0,
            Self::Quadratic(_) => 2.0,
        }
    }

    /// Checks that this pricing function is the one induced by `spec`.
    pub fn check_compatible(&self, spec: &DiffusionSpec) -> Result<()> {
        if spec.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: spec.dim(),
            });
        }
        let want_vols = |vols: Vec<f64>| -> Result<()> {
            let got = spec.gbm_vols().ok_or_else(|| {
                Error::Incompatible(format!(
                    "{} pricing requires a GBM model (case C2)",
                    self.key()
                ))
            })?;
            if !spec.is_diagonal() {
                return Err(Error::Incompatible(format!(
                    "{} pricing factorizes only for diagonal (uncorrelated) models",
                    self.key()
                )));
            }
            for (i, (a, b)) in vols.iter().zip(got).enumerate() {
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::Incompatible(format!(
                        "coordinate {i}: pricing volatility {a} differs from model volatility {b}"
                    )));
                }
            }
            Ok(())
        };
        match self {
            Self::Product(p) => want_vols(p.factors().iter().map(|f| f.vol).collect()),
            Self::SumDigital2D(p) => want_vols(p.vols.to_vec()),
            Self::Quadratic(_) => {
                let standard = spec.case() == Case::C1
                    && spec.is_driftless()
                    && spec.is_diagonal()
                    && spec.gbm_vols().is_none()
                    && {
                        let s = spec.sigma(spec.x0());
                        (0..s.nrows()).all(|i| s[(i, i)] == 1.0)
                    };
                if standard {
                    Ok(())
                } else {
                    Err(Error::Incompatible(
                        "bm_quadratic requires standard Brownian motion (case C1, sigma = I, no drift)".into(),
                    ))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn theta_hints() {
        assert_eq!(
            PricingModel::digital(1.0, 1.0, 1.0).unwrap().theta_hint(),
            Some(0.75)
        );
        assert_eq!(
            PricingModel::call(1.0, 1.0, 1.0).unwrap().theta_hint(),
            Some(0.25)
        );
        assert_eq!(
            PricingModel::power(1.0, 0.25, 1.0, 1.0)
                .unwrap()
                .theta_hint(),
            Some(0.625)
        );
        let q = PricingModel::Quadratic(BmQuadratic::new(2, 1.0).unwrap());
        assert_eq!(q.theta_hint(), Some(0.0));
        let p = ProductPricing::example(1.0, 1.0, 0.25, 1.0, [1.0; 3], 1.0).unwrap();
        assert_eq!(PricingModel::Product(p).theta_hint(), Some(0.75));
    }

    #[test]
    fn compatibility() {
        let digital = PricingModel::digital(1.0, 0.5, 1.0).unwrap();
        assert!(digital
            .check_compatible(&DiffusionSpec::driftless_gbm(vec![0.5]).unwrap())
            .is_ok());
        assert!(digital
            .check_compatible(&DiffusionSpec::driftless_gbm(vec![0.6]).unwrap())
            .is_err());
        assert!(digital
            .check_compatible(&DiffusionSpec::standard_brownian(1).unwrap())
            .is_err());
        let q = PricingModel::Quadratic(BmQuadratic::new(1, 1.0).unwrap());
        assert!(q
            .check_compatible(&DiffusionSpec::standard_brownian(1).unwrap())
            .is_ok());
        assert!(q
            .check_compatible(&DiffusionSpec::driftless_gbm(vec![1.0]).unwrap())
            .is_err());
    }

    #[test]
    fn dimension_is_checked() {
        let digital = PricingModel::digital(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            digital.value(0.0, &[1.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn key_round_trip() {
        assert_eq!(PricingModel::call(1.0, 1.0, 1.0).unwrap().key(), "call");
        assert_eq!(
            PricingModel::power(1.0, 0.25, 1.0, 1.0).unwrap().key(),
            "power"
        );
        let g = PricingModel::digital(1.0, 1.0, 1.0)
            .unwrap()
            .gradient(0.0, &[1.0])
            .unwrap();
        assert_relative_eq!(g[0], 0.3520653267642995, max_relative = 1e-12);
    }
}
