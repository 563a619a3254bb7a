use nalgebra::DMatrix;

use super::black_scholes::{norm_cdf, remaining_time};
use crate::error::{Error, Result};
use crate::quadrature;

/// Gaussian mass beyond this many standard deviations is neglected.
const TAIL: f64 = 13.0;

/// `f(x) = 1{lambda_1 x_1 + lambda_2 x_2 >= K}` for two independent
/// lognormal coordinates. The value conditions on the second coordinate and
/// integrates the closed-form conditional digital with a Gauss-Legendre rule
/// below the level where the event becomes certain; derivatives are central
/// differences at a fixed rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SumDigital2D {
    pub weights: [f64; 2],
    pub strike: f64,
    pub vols: [f64; 2],
    pub horizon: f64,
    /// Relative finite-difference step.
    pub h_rel: f64,
}

impl SumDigital2D {
    pub fn new(weights: [f64; 2], strike: f64, vols: [f64; 2], horizon: f64) -> Result<Self> {
        if !(weights[0] > 0.0 && weights[1] >= 0.0) || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weights must satisfy lambda_1 > 0, lambda_2 >= 0, got {weights:?}"
            )));
        }
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "strike must be positive, got {strike}"
            )));
        }
        if vols.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "volatilities must be positive, got {vols:?}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            weights,
            strike,
            vols,
            horizon,
            h_rel: 1e-4,
        })
    }

    pub(crate) fn payoff(&self, x: &[f64]) -> f64 {
        if self.weights[0] * x[0] + self.weights[1] * x[1] >= self.strike {
            1.0
        } else {
            0.0
        }
    }

    fn check_point(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "spot must be positive, got {x:?}"
            )));
        }
        remaining_time(t, self.horizon)
    }

    /// Conditional on the second Gaussian `z`, the event is certain for
    /// `z >= z0`; below `z0` the conditional probability is a closed-form
    /// digital. Returns `z0` and that conditional probability, or its
    /// complement when `complement` is set.
    fn split(&self, tau: f64, x: &[f64], complement: bool) -> (f64, impl Fn(f64) -> [f64; 1]) {
        let v1 = self.vols[0] * tau.sqrt();
        let v2 = self.vols[1] * tau.sqrt();
        let [l1, l2] = self.weights;
        let (x1, x2, k) = (x[0], x[1], self.strike);
        let z0 = ((k / (l2 * x2)).ln() + 0.5 * v2 * v2) / v2;
        let integrand = move |z: f64| {
            let x2_t = x2 * (-0.5 * v2 * v2 + v2 * z).exp();
            let residual = (k - l2 * x2_t) / l1;
            if residual <= 0.0 {
                return [if complement { 0.0 } else { 1.0 }];
            }
            let d = ((x1 / residual).ln() - 0.5 * v1 * v1) / v1;
            [norm_cdf(if complement { -d } else { d })]
        };
        (z0, integrand)
    }

    /// Pieces in the mirrored variable `u = -z` over `[-min(z0, TAIL), TAIL]`:
    /// a unit piece clustered at `-z0` when that end lies in the window, then
    /// a plain piece over the bulk. Empty when `z0 <= -TAIL`.
    fn pieces(z0: f64) -> Vec<(f64, f64, bool)> {
        if z0 <= -TAIL {
            return Vec::new();
        }
        if z0 >= TAIL {
            return vec![(-TAIL, TAIL, false)];
        }
        let split = (-z0 + 1.0).min(TAIL);
        let mut pieces = vec![(-z0, split, true)];
        if split < TAIL {
            pieces.push((split, TAIL, false));
        }
        pieces
    }

    /// In the money the value is close to one, so the complement is
    /// integrated instead to keep differences free of cancellation.
    fn in_the_money(&self, x: &[f64]) -> bool {
        self.payoff(x) == 1.0
    }

    /// The probability of the event, or of its complement, with the node
    /// count the adaptive rule settled on.
    fn side_with_nodes(&self, tau: f64, x: &[f64], complement: bool) -> Result<(f64, usize)> {
        if self.weights[1] == 0.0 {
            return Ok((
                self.one_dimensional(tau, x, complement),
                quadrature::NODE_LEVELS[0],
            ));
        }
        let (z0, f) = self.split(tau, x, complement);
        let base = norm_cdf(if complement { z0 } else { -z0 });
        let pieces = Self::pieces(z0);
        if pieces.is_empty() {
            return Ok((base, quadrature::NODE_LEVELS[0]));
        }
        let r = quadrature::piecewise_normal_integral_with_floor(
            "weighted-sum digital",
            &pieces,
            norm_cdf(-TAIL),
            |u| f(-u),
        )?;
        // the complement has no certain region: the integral is all of it
        Ok((
            if complement {
                r.values[0]
            } else {
                base + r.values[0]
            },
            r.nodes,
        ))
    }

    fn side_fixed(&self, tau: f64, x: &[f64], complement: bool, nodes: usize) -> f64 {
        if self.weights[1] == 0.0 {
            return self.one_dimensional(tau, x, complement);
        }
        let (z0, f) = self.split(tau, x, complement);
        let g = |u: f64| f(-u);
        let pieces = Self::pieces(z0);
        let base = match (complement, pieces.is_empty()) {
            (false, _) => norm_cdf(-z0),
            (true, true) => norm_cdf(z0),
            (true, false) => 0.0,
        };
        base + pieces
            .iter()
            .map(|&(lo, hi, singular)| {
                quadrature::truncated_normal_integral_fixed(nodes, lo, hi, singular, &g).0[0]
            })
            .sum::<f64>()
    }

    fn one_dimensional(&self, tau: f64, x: &[f64], complement: bool) -> f64 {
        let v1 = self.vols[0] * tau.sqrt();
        let residual = self.strike / self.weights[0];
        let d = ((x[0] / residual).ln() - 0.5 * v1 * v1) / v1;
        norm_cdf(if complement { -d } else { d })
    }

    fn value_with_nodes(&self, t: f64, x: &[f64]) -> Result<(f64, usize)> {
        let tau = self.check_point(t, x)?;
        let complement = self.in_the_money(x);
        let (p, nodes) = self.side_with_nodes(tau, x, complement)?;
        Ok((if complement { 1.0 - p } else { p }, nodes))
    }

    pub(crate) fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.value_with_nodes(t, x).map(|(v, _)| v)
    }

    pub(crate) fn value_gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<f64> {
        let tau = self.check_point(t, x)?;
        let complement = self.in_the_money(x);
        let (p, nodes) = self.side_with_nodes(tau, x, complement)?;
        let sign = if complement { -1.0 } else { 1.0 };
        for k in 0..2 {
            let h = self.h_rel * x[k];
            let mut up = [x[0], x[1]];
            let mut down = up;
            up[k] += h;
            down[k] -= h;
            out[k] = sign
                * (self.side_fixed(tau, &up, complement, nodes)
                    - self.side_fixed(tau, &down, complement, nodes))
                / (2.0 * h);
        }
        Ok(if complement { 1.0 - p } else { p })
    }

    pub(crate) fn hessian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let tau = self.check_point(t, x)?;
        let complement = self.in_the_money(x);
        let (_, nodes) = self.side_with_nodes(tau, x, complement)?;
        let sign = if complement { -1.0 } else { 1.0 };
        let h = [self.h_rel * x[0], self.h_rel * x[1]];
        let at = |a: f64, b: f64| {
            sign * self.side_fixed(tau, &[x[0] + a * h[0], x[1] + b * h[1]], complement, nodes)
        };
        let centre = at(0.0, 0.0);
        let h11 = (at(1.0, 0.0) - 2.0 * centre + at(-1.0, 0.0)) / (h[0] * h[0]);
        let h22 = (at(0.0, 1.0) - 2.0 * centre + at(0.0, -1.0)) / (h[1] * h[1]);
        let h12 =
            (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h[0] * h[1]);
        Ok(DMatrix::from_row_slice(2, 2, &[h11, h12, h12, h22]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::{bs_digital_value, PricingModel};
    use approx::assert_relative_eq;

    #[test]
    fn reduces_to_one_dimensional_digital() {
        let p = SumDigital2D::new([1.0, 0.0], 1.2, [0.8, 1.0], 1.0).unwrap();
        let v = p.value(0.3, &[1.0, 0.7]).unwrap();
        assert!((v - bs_digital_value(0.3, 1.0, 1.2, 0.8, 1.0).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn converges_up_to_maturity() {
        let p = SumDigital2D::new([1.0, 0.5], 1.5, [1.0, 0.7], 1.0).unwrap();
        for tau in [0.9, 0.3, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-11] {
            for x1 in [0.2, 0.6, 0.99, 1.0, 1.3, 4.0] {
                for x2 in [0.1, 0.9, 1.0, 2.9, 3.0, 5.0] {
                    let v = p.value(1.0 - tau, &[x1, x2]);
                    assert!(
                        v.as_ref().is_ok_and(|v| (0.0..=1.0 + 1e-12).contains(v)),
                        "tau {tau}, x ({x1}, {x2}): {v:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn complement_side_agrees() {
        let p = SumDigital2D::new([1.0, 0.5], 1.5, [1.0, 0.7], 1.0).unwrap();
        for tau in [0.9, 0.1, 1e-3] {
            for x in [[0.2, 0.9], [1.0, 1.0], [1.4, 0.3], [3.0, 2.0]] {
                let (a, _) = p.side_with_nodes(tau, &x, false).unwrap();
                let (b, _) = p.side_with_nodes(tau, &x, true).unwrap();
                assert!((a + b - 1.0).abs() < 1e-9, "tau {tau}, x {x:?}: {a} + {b}");
            }
        }
    }

    #[test]
    fn symmetric_in_coordinates() {
        let p = SumDigital2D::new([1.0, 1.0], 2.0, [1.0, 1.0], 1.0).unwrap();
        let a = p.value(0.2, &[0.9, 1.3]).unwrap();
        let b = p.value(0.2, &[1.3, 0.9]).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn derivatives_are_consistent() {
        let p = PricingModel::SumDigital2D(
            SumDigital2D::new([1.0, 1.0], 2.0, [1.0, 1.0], 1.0).unwrap(),
        );
        let g = p.gradient(0.5, &[1.0, 1.0]).unwrap();
        assert!(g[0] > 0.0);
        assert_relative_eq!(g[0], g[1], max_relative = 1e-6);
        let h = p.hessian(0.5, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(h[(0, 1)], h[(1, 0)]);
        assert!(h.iter().all(|v| v.is_finite()));
    }
}
