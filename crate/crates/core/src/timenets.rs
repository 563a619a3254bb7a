//! Deterministic rebalancing nets on `[0, T]`.
//!
//! Besides the equidistant family this module builds the nets
//! `t_i = T (1 - (1 - i/n)^{1/(1-eta)})`, which place knots increasingly
//! densely towards maturity as `eta` grows, and evaluates the deterministic
//! quality functional
//! `S(net, theta) = sum_i int_{t_{i-1}}^{t_i} int_{t_{i-1}}^{u} (T - s)^{-2 theta} ds du`
//! in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;

/// Strictly increasing knots `0 = t_0 < ... < t_m = T`, `m >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeNet {
    knots: Vec<f64>,
}

impl TimeNet {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidNet(format!(
                "need at least two knots, got {}",
                knots.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidNet(format!(
                "first knot must be 0, got {}",
                knots[0]
            )));
        }
        let horizon = *knots.last().unwrap();
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidNet(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if let Some(w) = knots.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidNet(format!(
                "knots must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        Ok(Self { knots })
    }

    pub fn horizon(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of rebalancing intervals `m`.
    pub fn intervals(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn spacings(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.windows(2).map(|w| w[1] - w[0])
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacings().fold(0.0, f64::max)
    }

    /// Single CSV column with header `t`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t\n");
        for &t in &self.knots {
            out.push_str(&fmt_f64(t));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some("t") => {}
            other => {
                return Err(Error::InvalidNet(format!(
                    "expected header \"t\", found {other:?}"
                )))
            }
        }
        let knots = lines
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| Error::InvalidNet(format!("bad knot {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(knots)
    }
}

/// Parameters of the eta-adapted family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaNetParams {
    pub horizon: f64,
    pub n: usize,
    pub eta: f64,
}

impl EtaNetParams {
    pub fn new(horizon: f64, n: usize, eta: f64) -> Result<Self> {
        let p = Self { horizon, n, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon T must be > 0, got {}",
                self.horizon
            )));
        }
        if self.n < 1 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must be >= 0, got {}",
                self.eta
            )));
        }
        if !(self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must be < 1, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

fn knots_with_exponent(horizon: f64, n: usize, exponent: f64) -> Result<TimeNet> {
    let nf = n as f64;
    let knots: Vec<f64> = (0..=n)
        .map(|i| {
            // (n - i) / n keeps the last knot exactly at T
            let remaining = (n - i) as f64 / nf;
            let scaled = if exponent == 1.0 {
                remaining
            } else {
                remaining.powf(exponent)
            };
            horizon * (1.0 - scaled)
        })
        .collect();
    TimeNet::new(knots).map_err(|e| match e {
        Error::InvalidNet(msg) => Error::InvalidNet(format!(
            "knots are not representable in double precision for n = {n}, exponent {exponent}: {msg}"
        )),
        other => other,
    })
}

/// `t_i = T (1 - ((n - i)/n)^{1/(1-eta)})`, `i = 0..=n`.
pub fn eta_net(params: EtaNetParams) -> Result<TimeNet> {
    params.validate()?;
    knots_with_exponent(params.horizon, params.n, 1.0 / (1.0 - params.eta))
}

pub fn equidistant_net(horizon: f64, n: usize) -> Result<TimeNet> {
    EtaNetParams::new(horizon, n, 0.0)?;
    knots_with_exponent(horizon, n, 1.0)
}

/// Union of a net with an equidistant monitoring grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedGrid {
    times: Vec<f64>,
    knot_index: Vec<usize>,
    is_knot: Vec<bool>,
    intervals: usize,
}

impl RefinedGrid {
    /// The grid consisting of the net knots only.
    pub fn from_net(net: &TimeNet) -> Self {
        let m = net.intervals();
        let times = net.knots().to_vec();
        let knot_index = (0..=m).map(|j| j.clamp(1, m)).collect();
        Self {
            times,
            knot_index,
            is_knot: vec![true; m + 1],
            intervals: m,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// For each grid time, the index `i >= 1` of the active net interval
    /// `[t_{i-1}, t_i)`; the final time `T` belongs to interval `m`.
    pub fn knot_index(&self) -> &[usize] {
        &self.knot_index
    }

    pub fn is_knot(&self) -> &[bool] {
        &self.is_knot
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn net_intervals(&self) -> usize {
        self.intervals
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Merges the net with the monitoring points `j T / M`, `j = 0..=M`.
/// Monitoring points within `1e-12 T` of a knot are absorbed by the knot.
pub fn refine(net: &TimeNet, monitor_points: usize) -> Result<RefinedGrid> {
    let m = net.intervals();
    if monitor_points < m {
        return Err(Error::InvalidParameter(format!(
            "monitoring grid M = {monitor_points} is coarser than the net ({m} intervals)"
        )));
    }
    let horizon = net.horizon();
    let tol = 1e-12 * horizon;
    let knots = net.knots();
    let mf = monitor_points as f64;

    let mut times = Vec::with_capacity(monitor_points + m + 1);
    let mut knot_index = Vec::with_capacity(monitor_points + m + 1);
    let mut is_knot = Vec::with_capacity(monitor_points + m + 1);

    let mut next_knot = 0usize;
    let mut j = 0usize;
    while next_knot <= m || j <= monitor_points {
        let monitor = if j <= monitor_points {
            Some((j as f64 * horizon) / mf)
        } else {
            None
        };
        let knot = knots.get(next_knot).copied();
        match (knot, monitor) {
            (Some(k), Some(p)) if (p - k).abs() <= tol => {
                times.push(k);
                is_knot.push(true);
                next_knot += 1;
                j += 1;
            }
            (Some(k), Some(p)) if k < p => {
                times.push(k);
                is_knot.push(true);
                next_knot += 1;
            }
            (Some(_), Some(p)) | (None, Some(p)) => {
                // skip monitor points sitting on the previous knot
                if times.last().map_or(true, |&last| p - last > tol) {
                    times.push(p);
                    is_knot.push(false);
                }
                j += 1;
            }
            (Some(k), None) => {
                times.push(k);
                is_knot.push(true);
                next_knot += 1;
            }
            (None, None) => unreachable!(),
        }
    }

    // active interval: number of knots strictly before or at t, clamped
    let mut seen = 0usize;
    for &flag in &is_knot {
        if flag {
            seen += 1;
        }
        knot_index.push(seen.clamp(1, m));
    }

    Ok(RefinedGrid {
        times,
        knot_index,
        is_knot,
        intervals: m,
    })
}

/// Closed-form `S(net, theta)` with integrand `(T - s)^{-2 theta}`.
///
/// The double integral is finite for every `theta < 1` even on the last
/// interval, so the final interval is integrated up to `T` exactly.
pub fn lemma_net_functional(net: &TimeNet, theta: f64) -> Result<f64> {
    if !(theta >= 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0, 1), got {theta}"
        )));
    }
    let horizon = net.horizon();
    let p = 2.0 * theta;
    let total = net
        .knots()
        .windows(2)
        .map(|w| interval_functional(horizon - w[0], horizon - w[1], p))
        .sum::<f64>();
    Ok(total.max(0.0))
}

/// `int_a^b int_a^u (T - s)^{-p} ds du` written in terms of the remaining
/// times `c = T - a > 0` and `e = T - b >= 0`.
fn interval_functional(c: f64, e: f64, p: f64) -> f64 {
    let delta = (c - e) / c;
    let q = 2.0 - p;
    if delta < 0.25 {
        // c^{2-p} * sum_{k>=2} (-1)^k (q-2)(q-3)...(q-k+1) / k! * delta^k
        let mut coeff = 0.5; // k = 2
        let mut power = delta * delta;
        let mut acc = coeff * power;
        for k in 3..200 {
            coeff *= -(q - k as f64 + 1.0) / k as f64;
            power *= delta;
            let term = coeff * power;
            acc += term;
            if term.abs() <= 1e-18 * acc.abs() {
                break;
            }
        }
        return c.powf(q) * acc;
    }
    if (p - 1.0).abs() < 1e-12 {
        // p = 1: (b - a) ln c - [c ln c - c - (e ln e - e)]
        let elne = if e > 0.0 { e * e.ln() } else { 0.0 };
        let width = c - e;
        return width * c.ln() - (c * c.ln() - c - (elne - e));
    }
    let width = c - e;
    let one_minus_p = 1.0 - p;
    width * c.powf(one_minus_p) / one_minus_p - (c.powf(q) - e.powf(q)) / (one_minus_p * q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn knots(net: &TimeNet) -> Vec<f64> {
        net.knots().to_vec()
    }

    #[test]
    fn eta_zero_is_equidistant() {
        let net = eta_net(EtaNetParams::new(1.0, 4, 0.0).unwrap()).unwrap();
        assert_eq!(knots(&net), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn eta_half_two_intervals() {
        let net = eta_net(EtaNetParams::new(1.0, 2, 0.5).unwrap()).unwrap();
        assert_eq!(knots(&net), vec![0.0, 0.75, 1.0]);
    }

    #[test]
    fn single_interval_forces_endpoints() {
        let net = eta_net(EtaNetParams::new(2.0, 1, 0.9).unwrap()).unwrap();
        assert_eq!(knots(&net), vec![0.0, 2.0]);
    }

    #[test]
    fn equidistant_examples() {
        assert_eq!(knots(&equidistant_net(1.0, 1).unwrap()), vec![0.0, 1.0]);
        assert_eq!(
            knots(&equidistant_net(1.0, 4).unwrap()),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(
            knots(&equidistant_net(3.0, 3).unwrap()),
            vec![0.0, 1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(EtaNetParams::new(1.0, 4, 1.0).is_err());
        assert!(EtaNetParams::new(1.0, 4, -0.1).is_err());
        assert!(EtaNetParams::new(1.0, 0, 0.5).is_err());
        assert!(EtaNetParams::new(0.0, 4, 0.5).is_err());
        assert!(equidistant_net(-1.0, 4).is_err());
        let msg = EtaNetParams::new(1.0, 4, 1.0).unwrap_err().to_string();
        assert!(msg.contains("eta must be < 1"), "{msg}");
    }

    #[test]
    fn collapsing_knots_are_reported() {
        // (1/512)^10 underflows relative to 1, so t_{n-1} rounds to T
        let err = eta_net(EtaNetParams::new(1.0, 512, 0.9).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidNet(_)));
    }

    #[test]
    fn net_validation() {
        assert!(TimeNet::new(vec![0.0]).is_err());
        assert!(TimeNet::new(vec![0.1, 1.0]).is_err());
        assert!(TimeNet::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeNet::new(vec![0.0, 0.6, 0.4, 1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let net = eta_net(EtaNetParams::new(1.5, 7, 0.6).unwrap()).unwrap();
        let text = net.to_csv();
        assert!(text.starts_with("t\n"));
        assert_eq!(TimeNet::from_csv(&text).unwrap(), net);
        assert!(TimeNet::from_csv("x\n0\n1\n").is_err());
    }

    #[test]
    fn refine_examples() {
        let g = refine(&TimeNet::new(vec![0.0, 1.0]).unwrap(), 2).unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.knot_index(), &[1, 1, 1]);

        let g = refine(&TimeNet::new(vec![0.0, 0.75, 1.0]).unwrap(), 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.knot_index(), &[1, 1, 1, 2, 2]);
        assert_eq!(g.is_knot(), &[true, false, false, true, true]);

        let g = refine(&TimeNet::new(vec![0.0, 0.5, 1.0]).unwrap(), 2).unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 1.0]);

        assert!(refine(&equidistant_net(1.0, 4).unwrap(), 3).is_err());
    }

    #[test]
    fn refine_interleaves_non_aligned_knots() {
        let net = TimeNet::new(vec![0.0, 0.3, 1.0]).unwrap();
        let g = refine(&net, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.3, 0.5, 0.75, 1.0]);
        assert_eq!(g.knot_index(), &[1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn functional_trivial_values() {
        let single = TimeNet::new(vec![0.0, 1.0]).unwrap();
        assert_relative_eq!(
            lemma_net_functional(&single, 0.0).unwrap(),
            0.5,
            max_relative = 1e-14
        );
        let eq4 = equidistant_net(1.0, 4).unwrap();
        assert_relative_eq!(
            lemma_net_functional(&eq4, 0.0).unwrap(),
            0.125,
            max_relative = 1e-14
        );
        assert!(lemma_net_functional(&eq4, 1.0).is_err());
    }

    /// Composite Gauss-Legendre in the logarithm of the remaining time
    /// `r = T - s`; independent of the closed form.
    fn brute_force_functional(net: &TimeNet, theta: f64) -> f64 {
        let horizon = net.horizon();
        let p = 2.0 * theta;
        let gl = gauss_quad::GaussLegendre::new(std::num::NonZeroUsize::new(20).unwrap());
        let log_integral = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
            let (a, b) = (lo.ln(), hi.ln());
            let chunks = ((b - a) / 2.0).ceil().max(1.0) as usize;
            let h = (b - a) / chunks as f64;
            (0..chunks)
                .map(|c| {
                    let l0 = a + c as f64 * h;
                    gl.integrate(l0, l0 + h, |l| {
                        let r = l.exp();
                        f(r) * r
                    })
                })
                .sum()
        };
        // ∫_{r_u}^{c} rho^{-p} d rho
        let inner = |r_u: f64, c: f64| {
            if r_u >= c {
                0.0
            } else {
                log_integral(r_u, c, &|rho: f64| rho.powf(-p))
            }
        };
        net.knots()
            .windows(2)
            .map(|w| {
                let c = horizon - w[0];
                let lo = (horizon - w[1]).max(1e-60 * horizon);
                log_integral(lo, c, &|r: f64| inner(r, c))
            })
            .sum()
    }

    #[test]
    fn functional_matches_brute_force() {
        for &(n, eta, theta) in &[
            (4usize, 0.0, 0.0),
            (5, 0.3, 0.25),
            (6, 0.75, 0.75),
            (3, 0.5, 0.5),
            (8, 0.2, 0.9),
        ] {
            let net = eta_net(EtaNetParams::new(1.3, n, eta).unwrap()).unwrap();
            let closed = lemma_net_functional(&net, theta).unwrap();
            let brute = brute_force_functional(&net, theta);
            assert_relative_eq!(closed, brute, max_relative = 1e-6);
        }
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        for &p in &[0.0, 0.5, 1.0, 1.5, 1.9] {
            let c = 1.0;
            let e = 0.75 + 1e-9;
            let series = interval_functional(c, e, p);
            let e2 = 0.75 - 1e-9;
            let closed = interval_functional(c, e2, p);
            assert_relative_eq!(series, closed, max_relative = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn eta_nets_are_valid_and_front_loaded(n in 1usize..300, eta in 0.0f64..0.95, horizon in 0.1f64..10.0) {
            let net = match eta_net(EtaNetParams::new(horizon, n, eta).unwrap()) {
                Ok(net) => net,
                Err(Error::InvalidNet(_)) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            prop_assert_eq!(net.knots().len(), n + 1);
            prop_assert_eq!(net.knots()[0], 0.0);
            prop_assert_eq!(net.horizon(), horizon);
            let sp: Vec<f64> = net.spacings().collect();
            prop_assert!(sp[0] >= sp[n - 1]);
            if eta > 0.0 && n > 1 {
                prop_assert!(sp[0] > sp[n - 1]);
            }
        }

        #[test]
        fn eta_zero_bitwise_equidistant(n in 1usize..500, horizon in 0.1f64..10.0) {
            let a = eta_net(EtaNetParams::new(horizon, n, 0.0).unwrap()).unwrap();
            let b = equidistant_net(horizon, n).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn refinement_is_monotone(n in 1usize..40, eta in 0.0f64..0.9, k in 1usize..8) {
            let net = eta_net(EtaNetParams::new(1.0, n, eta).unwrap()).unwrap();
            let coarse = refine(&net, k * n).unwrap();
            let fine = refine(&net, 2 * k * n).unwrap();
            for t in coarse.times() {
                prop_assert!(fine.times().contains(t));
            }
            for t in net.knots() {
                prop_assert!(fine.times().contains(t));
            }
            prop_assert!(coarse.len() <= k * n + n + 1);
            prop_assert!(coarse.knot_index().windows(2).all(|w| w[0] <= w[1]));
            // knot_index agrees with the net
            for (&t, &i) in coarse.times().iter().zip(coarse.knot_index()) {
                let knots = net.knots();
                prop_assert!(knots[i - 1] <= t && (t < knots[i] || i == n));
            }
        }
    }
}
