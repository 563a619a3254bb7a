//! Monte Carlo estimation of the L² error of discretely rebalanced delta
//! hedges.
//!
//! The continuous hedge is never simulated: along a path,
//! `F(t, X_t) - F(0, X_0)` equals the continuous stochastic integral up to
//! `t`, so the error of the discrete hedge at `t` is
//!
//! `F(t, X_t) - F(0, X_0) - sum_i grad F(t_{i-1}, X_{t_{i-1}}) . (X_{t_i ^ t} - X_{t_{i-1} ^ t})`
//!
//! with `F(T, X_T)` replaced by `f(X_T)` at maturity. The identity holds for
//! any hedge ratios, so the rebalancing loop may use the cheaper
//! [`PricingModel::hedge_ratio_into`] while `F` itself is always converged.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sample_exact_into, sample_path_euler, DiffusionSpec, Exactness};
use crate::pricing::PricingModel;
use crate::rng::SeedSpec;
use crate::stats::MeanEstimate;
use crate::timenets::{equidistant_net, eta_net, refine, EtaNetParams, RefinedGrid, TimeNet};

/// Which error functionals a run estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    Terminal,
    RunningSup,
    Both,
}

impl ErrorMode {
    pub fn kinds(self) -> &'static [ErrorKind] {
        match self {
            Self::Terminal => &[ErrorKind::Terminal],
            Self::RunningSup => &[ErrorKind::RunningSup],
            Self::Both => &[ErrorKind::Terminal, ErrorKind::RunningSup],
        }
    }

    fn needs_monitoring(self) -> bool {
        !matches!(self, Self::Terminal)
    }
}

impl FromStr for ErrorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "terminal" => Ok(Self::Terminal),
            "running_sup" => Ok(Self::RunningSup),
            "both" => Ok(Self::Both),
            _ => Err(Error::InvalidParameter(format!(
                "unknown error mode {s:?} (expected terminal, running_sup or both)"
            ))),
        }
    }
}

/// The functional a single estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// `E |error(T)|^2`.
    Terminal,
    /// `E sup_t |error(t)|^2` over the monitoring grid.
    RunningSup,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Terminal => "terminal",
            Self::RunningSup => "running_sup",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Exact transition sampling (GBM and constant-coefficient Brownian specs).
    #[default]
    Exact,
    Euler,
}

/// Family of time-nets indexed by their number of intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NetFamily {
    Equidistant,
    Eta(f64),
}

impl NetFamily {
    pub fn build(self, horizon: f64, n: usize) -> Result<TimeNet> {
        match self {
            Self::Equidistant => equidistant_net(horizon, n),
            Self::Eta(eta) => eta_net(EtaNetParams::new(horizon, n, eta)?),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Equidistant => "equidistant",
            Self::Eta(_) => "eta",
        }
    }

    /// `eta` used by the family; 0 for the equidistant family.
    pub fn eta(self) -> f64 {
        match self {
            Self::Equidistant => 0.0,
            Self::Eta(eta) => eta,
        }
    }
}

impl fmt::Display for NetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Equidistant => f.write_str("equidistant"),
            Self::Eta(eta) => write!(f, "eta:{eta}"),
        }
    }
}

impl FromStr for NetFamily {
    type Err = Error;

    /// Accepts `equidistant` and `eta:<value>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "equidistant" {
            return Ok(Self::Equidistant);
        }
        if let Some(v) = s.strip_prefix("eta:") {
            let eta: f64 = v
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse eta in {s:?}")))?;
            EtaNetParams::new(1.0, 1, eta)?;
            return Ok(Self::Eta(eta));
        }
        Err(Error::InvalidParameter(format!(
            "unknown net family {s:?} (expected equidistant or eta:<value>)"
        )))
    }
}

/// One Monte Carlo hedging experiment.
#[derive(Debug, Clone)]
pub struct HedgeExperiment {
    pub spec: DiffusionSpec,
    pub pricing: PricingModel,
    pub net: TimeNet,
    pub monitor_points: usize,
    pub paths: usize,
    pub master_seed: u64,
    pub error_mode: ErrorMode,
    pub scheme: SamplingScheme,
}

impl HedgeExperiment {
    /// Experiment with the default monitoring resolution `M = 32 n`.
    pub fn new(
        spec: DiffusionSpec,
        pricing: PricingModel,
        net: TimeNet,
        paths: usize,
        master_seed: u64,
        error_mode: ErrorMode,
    ) -> Self {
        let monitor_points = DEFAULT_MONITOR_MULTIPLIER * net.intervals();
        Self {
            spec,
            pricing,
            net,
            monitor_points,
            paths,
            master_seed,
            error_mode,
            scheme: SamplingScheme::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (tp, tn) = (self.pricing.horizon(), self.net.horizon());
        if (tp - tn).abs() > 1e-12 * tn {
            return Err(Error::Incompatible(format!(
                "pricing horizon {tp} differs from net horizon {tn}"
            )));
        }
        self.pricing.check_compatible(&self.spec)?;
        if self.monitor_points < self.net.intervals() {
            return Err(Error::InvalidParameter(format!(
                "monitoring grid M = {} is coarser than the net ({} intervals)",
                self.monitor_points,
                self.net.intervals()
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidParameter(
                "path count must be positive".into(),
            ));
        }
        if self.scheme == SamplingScheme::Exact && self.spec.exactness() == Exactness::General {
            return Err(Error::ExactSamplingUnavailable);
        }
        Ok(())
    }

    /// The grid paths are sampled on: net knots only in terminal mode,
    /// knots merged with the monitoring grid otherwise.
    pub fn grid(&self) -> Result<RefinedGrid> {
        if self.error_mode.needs_monitoring() {
            refine(&self.net, self.monitor_points)
        } else {
            Ok(RefinedGrid::from_net(&self.net))
        }
    }
}

pub const DEFAULT_MONITOR_MULTIPLIER: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeErrorEstimate {
    pub mean_sq: f64,
    pub rms: f64,
    pub stderr_mean_sq: f64,
    pub paths: usize,
    pub mode: ErrorKind,
}

impl HedgeErrorEstimate {
    fn from_squares(squares: &[f64], mode: ErrorKind) -> Self {
        let m = MeanEstimate::from_samples(squares);
        Self {
            mean_sq: m.mean,
            rms: m.mean.sqrt(),
            stderr_mean_sq: m.stderr,
            paths: m.count,
            mode,
        }
    }

    /// Standard error of `rms` by the delta method.
    pub fn stderr_rms(&self) -> f64 {
        if self.rms > 0.0 {
            self.stderr_mean_sq / (2.0 * self.rms)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurvePoint {
    pub n: usize,
    pub monitor_points: usize,
    pub estimate: HedgeErrorEstimate,
    pub net_family: NetFamily,
}

/// Errors of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathError {
    pub terminal_error: f64,
    /// `max |error(t)|` over the grid, including `t = T`.
    pub sup_abs_error: f64,
}

/// Reusable per-worker buffers.
#[derive(Debug, Default)]
struct Workspace {
    states: Vec<f64>,
    gradient: Vec<f64>,
    knot_state: Vec<f64>,
}

fn path_error_with(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    grid: &RefinedGrid,
    seed: SeedSpec,
    scheme: SamplingScheme,
    monitor: bool,
    ws: &mut Workspace,
) -> Result<PathError> {
    let d = spec.dim();
    let times = grid.times();
    match scheme {
        SamplingScheme::Exact => sample_exact_into(spec, times, seed, &mut ws.states)?,
        SamplingScheme::Euler => ws.states = sample_path_euler(spec, times, seed)?.states,
    }
    let states = &ws.states;
    ws.gradient.resize(d, 0.0);
    ws.knot_state.clear();
    ws.knot_state.extend_from_slice(&states[..d]);

    let f0 = pricing.value(0.0, &states[..d])?;
    pricing.hedge_ratio_into(0.0, &states[..d], &mut ws.gradient)?;
    // gains realised up to the last rebalancing knot
    let mut banked = 0.0;
    let mut sup_abs: f64 = 0.0;
    let last = times.len() - 1;
    let is_knot = grid.is_knot();

    for j in 1..=last {
        let x = &states[j * d..(j + 1) * d];
        let open_gain: f64 = (0..d)
            .map(|k| ws.gradient[k] * (x[k] - ws.knot_state[k]))
            .sum();
        if j == last {
            let err = pricing.payoff(x)? - f0 - (banked + open_gain);
            sup_abs = sup_abs.max(err.abs());
            return Ok(PathError {
                terminal_error: err,
                sup_abs_error: sup_abs,
            });
        }
        if is_knot[j] {
            banked += open_gain;
            ws.knot_state.copy_from_slice(x);
            pricing.hedge_ratio_into(times[j], x, &mut ws.gradient)?;
            if monitor {
                let value = pricing.value(times[j], x)?;
                sup_abs = sup_abs.max((value - f0 - banked).abs());
            }
        } else if monitor {
            let value = pricing.value(times[j], x)?;
            sup_abs = sup_abs.max((value - f0 - banked - open_gain).abs());
        }
    }
    unreachable!("grid has at least two points")
}

/// Terminal and running-maximum hedging error of the path `seed`, sampled
/// exactly on `grid`, which must contain every knot of `net`.
pub fn path_error(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    net: &TimeNet,
    grid: &RefinedGrid,
    seed: SeedSpec,
) -> Result<PathError> {
    if grid.net_intervals() != net.intervals()
        || grid.is_knot().iter().filter(|k| **k).count() != net.knots().len()
    {
        return Err(Error::InvalidParameter(
            "grid does not match the net".into(),
        ));
    }
    let mut ws = Workspace::default();
    path_error_with(
        spec,
        pricing,
        grid,
        seed,
        SamplingScheme::Exact,
        true,
        &mut ws,
    )
}

/// Per-path errors for paths `0..N`, in path order.
pub fn path_errors(exp: &HedgeExperiment) -> Result<Vec<PathError>> {
    exp.validate()?;
    let grid = exp.grid()?;
    let monitor = exp.error_mode.needs_monitoring();
    (0..exp.paths as u64)
        .into_par_iter()
        .map_init(Workspace::default, |ws, i| {
            path_error_with(
                &exp.spec,
                &exp.pricing,
                &grid,
                SeedSpec::new(exp.master_seed, i),
                exp.scheme,
                monitor,
                ws,
            )
        })
        .collect()
}

/// Monte Carlo estimate of the squared error, one entry per requested mode
/// (terminal before running_sup). Aggregation runs in path order, so the
/// result does not depend on the number of worker threads.
pub fn estimate_l2_error(exp: &HedgeExperiment) -> Result<Vec<HedgeErrorEstimate>> {
    let errors = path_errors(exp)?;
    let kinds = exp.error_mode.kinds();
    Ok(kinds
        .iter()
        .map(|&kind| {
            let squares: Vec<f64> = errors
                .iter()
                .map(|e| match kind {
                    ErrorKind::Terminal => e.terminal_error * e.terminal_error,
                    ErrorKind::RunningSup => e.sup_abs_error * e.sup_abs_error,
                })
                .collect();
            HedgeErrorEstimate::from_squares(&squares, kind)
        })
        .collect())
}

/// Sweeps `n` over `n_list` with common random numbers (one master seed).
/// The monitoring grid has `monitor_multiplier * n` points.
#[allow(clippy::too_many_arguments)]
pub fn error_curve(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    family: NetFamily,
    n_list: &[usize],
    monitor_multiplier: usize,
    paths: usize,
    master_seed: u64,
    mode: ErrorMode,
) -> Result<Vec<ErrorCurvePoint>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "n_list must be strictly ascending".into(),
        ));
    }
    if monitor_multiplier == 0 {
        return Err(Error::InvalidParameter(
            "monitoring multiplier must be positive".into(),
        ));
    }
    let mut out = Vec::with_capacity(n_list.len() * mode.kinds().len());
    for &n in n_list {
        let net = family.build(pricing.horizon(), n)?;
        let mut exp =
            HedgeExperiment::new(spec.clone(), pricing.clone(), net, paths, master_seed, mode);
        exp.monitor_points = monitor_multiplier * n;
        let monitor_points = exp.monitor_points;
        for estimate in estimate_l2_error(&exp)? {
            out.push(ErrorCurvePoint {
                n,
                monitor_points,
                estimate,
                net_family: family,
            });
        }
        log::info!("{family} n = {n}: done");
    }
    Ok(out)
}
