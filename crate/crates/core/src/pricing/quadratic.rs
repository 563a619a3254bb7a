use nalgebra::DMatrix;

use super::black_scholes::remaining_time;
use crate::error::{Error, Result};

/// `f(x) = |x|^2` under standard Brownian motion: `F(t, x) = |x|^2 + d (T - t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BmQuadratic {
    pub dim: usize,
    pub horizon: f64,
}

impl BmQuadratic {
    pub fn new(dim: usize, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self { dim, horizon })
    }

    pub(crate) fn payoff(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    pub(crate) fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        let tau = remaining_time(t, self.horizon)?;
        Ok(self.payoff(x) + self.dim as f64 * tau)
    }

    pub(crate) fn value_gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<f64> {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = 2.0 * xi;
        }
        self.value(t, x)
    }

    pub(crate) fn hessian(&self, t: f64, _x: &[f64]) -> Result<DMatrix<f64>> {
        remaining_time(t, self.horizon)?;
        Ok(DMatrix::identity(self.dim, self.dim) * 2.0)
    }
}
