//! Shared fixtures for the benchmarks.

use hedgenet_core::pricing::ProductPricing;
use hedgenet_core::{DiffusionSpec, PricingModel, Result};

/// Three-factor product `call x power x digital` on a unit-vol GBM.
pub fn product_fixture() -> Result<(DiffusionSpec, PricingModel)> {
    let spec = DiffusionSpec::driftless_gbm(vec![1.0; 3])?;
    let pricing =
        PricingModel::Product(ProductPricing::example(1.0, 1.0, 0.25, 1.0, [1.0; 3], 1.0)?);
    Ok((spec, pricing))
}

pub fn digital_fixture() -> Result<(DiffusionSpec, PricingModel)> {
    Ok((
        DiffusionSpec::driftless_gbm(vec![1.0])?,
        PricingModel::digital(1.0, 1.0, 1.0)?,
    ))
}
