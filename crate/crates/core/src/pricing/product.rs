use nalgebra::DMatrix;

use super::black_scholes::{Factor1D, FactorKind, Greeks1D};
use crate::error::{Error, Result};

/// Largest dimension supported by the product construction.
pub const MAX_PRODUCT_DIM: usize = 16;

/// `f(x) = prod_i f_i(x_i)` for a diagonal GBM, so that
/// `F(t, x) = prod_i F_i(t, x_i)`.
#[derive(Debug, Clone)]
pub struct ProductPricing {
    factors: Vec<Factor1D>,
}

impl ProductPricing {
    pub fn new(factors: Vec<Factor1D>) -> Result<Self> {
        if factors.is_empty() || factors.len() > MAX_PRODUCT_DIM {
            return Err(Error::InvalidParameter(format!(
                "product needs between 1 and {MAX_PRODUCT_DIM} factors, got {}",
                factors.len()
            )));
        }
        let horizon = factors[0].horizon;
        for f in &factors {
            f.validate()?;
            if f.horizon != horizon {
                return Err(Error::InvalidParameter(
                    "all factors must share one horizon".into(),
                ));
            }
        }
        Ok(Self { factors })
    }

    /// `(x_1 - K_1)_+ (x_2 - K_2)_+^alpha 1{x_3 >= K_3}`.
    pub fn example(
        k1: f64,
        k2: f64,
        alpha: f64,
        k3: f64,
        vols: [f64; 3],
        horizon: f64,
    ) -> Result<Self> {
        Self::new(vec![
            Factor1D::new(FactorKind::Call, k1, vols[0], horizon)?,
            Factor1D::new(FactorKind::Power { alpha }, k2, vols[1], horizon)?,
            Factor1D::new(FactorKind::Digital, k3, vols[2], horizon)?,
        ])
    }

    pub fn factors(&self) -> &[Factor1D] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn horizon(&self) -> f64 {
        self.factors[0].horizon
    }

    pub(crate) fn payoff(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .zip(x)
            .map(|(f, xi)| f.payoff(*xi))
            .product()
    }

    fn greeks(&self, t: f64, x: &[f64]) -> Result<[Greeks1D; MAX_PRODUCT_DIM]> {
        let mut g = [Greeks1D::ONE; MAX_PRODUCT_DIM];
        for (k, (f, xi)) in self.factors.iter().zip(x).enumerate() {
            g[k] = f.greeks(t, *xi)?;
        }
        Ok(g)
    }

    pub(crate) fn hedge_gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        let mut g = [Greeks1D::ONE; MAX_PRODUCT_DIM];
        for (k, (f, xi)) in self.factors.iter().zip(x).enumerate() {
            g[k] = f.hedge_greeks(t, *xi)?;
        }
        for (k, o) in out.iter_mut().enumerate() {
            let others: f64 = (0..d).filter(|&m| m != k).map(|m| g[m].value).product();
            *o = g[k].delta * others;
        }
        Ok(())
    }

    pub(crate) fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        let g = self.greeks(t, x)?;
        Ok(g[..self.dim()].iter().map(|g| g.value).product())
    }

    pub(crate) fn value_gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<f64> {
        let d = self.dim();
        let g = self.greeks(t, x)?;
        for (k, o) in out.iter_mut().enumerate() {
            let others: f64 = (0..d).filter(|&m| m != k).map(|m| g[m].value).product();
            *o = g[k].delta * others;
        }
        Ok(g[..d].iter().map(|g| g.value).product())
    }

    pub(crate) fn hessian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let g = self.greeks(t, x)?;
        Ok(DMatrix::from_fn(d, d, |i, j| {
            let others: f64 = (0..d)
                .filter(|&m| m != i && m != j)
                .map(|m| g[m].value)
                .product();
            if i == j {
                g[i].gamma * others
            } else {
                g[i].delta * g[j].delta * others
            }
        }))
    }

    /// A single non-constant factor keeps its own exponent; genuine products
    /// take `max(theta_1, ..., theta_d, 1/2)`.
    pub(crate) fn theta_hint(&self) -> Option<f64> {
        let active: Vec<&Factor1D> = self.factors.iter().filter(|f| !f.is_constant()).collect();
        let thetas: Option<Vec<f64>> = active.iter().map(|f| f.theta_hint()).collect();
        let thetas = thetas?;
        match thetas.len() {
            0 => Some(0.0),
            1 => Some(thetas[0]),
            _ => Some(thetas.iter().copied().fold(0.5, f64::max)),
        }
    }
}
