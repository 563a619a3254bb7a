//! Monte Carlo laboratory for the L² error of discretely rebalanced delta
//! hedges on deterministic, possibly non-equidistant, time-nets.

pub mod analysis;
pub mod error;
pub mod format;
pub mod hedging;
pub mod models;
pub mod oracle;
pub mod pricing;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod timenets;

pub use error::{Error, Result};
pub use hedging::{
    error_curve, estimate_l2_error, ErrorMode, HedgeErrorEstimate, HedgeExperiment, NetFamily,
};
pub use models::{Case, DiffusionSpec};
pub use nalgebra;
pub use pricing::PricingModel;
pub use rng::SeedSpec;
pub use timenets::{equidistant_net, eta_net, refine, EtaNetParams, RefinedGrid, TimeNet};
