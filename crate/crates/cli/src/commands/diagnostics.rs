use anyhow::{Context, Result};
use hedgenet_core::analysis::{choose_eta, default_theta_grid, estimate_h2, estimate_theta};
use hedgenet_core::Error;
use serde_json::{json, Value};

use super::RunOptions;
use crate::output::{num, Cell, Csv, RunDir, SUMMARY};

/// Stderr multiples subtracted before judging `inf H^2 > 0`.
pub const H2_MARGIN: f64 = 3.0;
/// Points of the default `H^2` grid spanning `[0.1 T, 0.9 T]`.
pub const H2_GRID_POINTS: usize = 9;

/// `eta` for an estimated `theta`. Slightly negative estimates (flat `m(t)`)
/// are treated as 0; `theta >= 1` yields `None` and a warning.
pub(crate) fn eta_for_estimate(theta: f64) -> Result<Option<f64>> {
    match choose_eta(theta.max(0.0)) {
        Ok(eta) => Ok(Some(eta)),
        Err(Error::AssumptionViolated(msg)) => {
            log::warn!("{msg}");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Estimates `theta` on the default grid and reports the chosen `eta`.
pub fn cmd_theta(opts: &RunOptions) -> Result<()> {
    let (cfg, dir) = opts.load()?;
    let mut run = RunDir::create(&dir, opts.timing)?;
    let spec = cfg.build_spec()?;
    let pricing = cfg.build_pricing()?;
    pricing.check_compatible(&spec)?;
    let grid = default_theta_grid(pricing.horizon());
    let fit = estimate_theta(
        &spec,
        &pricing,
        &grid,
        cfg.engine.paths,
        cfg.engine.master_seed,
    )
    .context("estimating theta")?;
    let mut csv = Csv::new(&["t", "m_t", "stderr"]);
    for p in &fit.grid {
        csv.row(&[Cell::Num(p.t), Cell::Num(p.m), Cell::Num(p.stderr)]);
    }
    run.write("theta_fit.csv", &csv.into_string())?;
    let eta = eta_for_estimate(fit.theta_hat)?;
    println!(
        "theta_hat = {:.4} (95% CI [{:.4}, {:.4}], r2 {:.4}); eta = {}",
        fit.theta_hat,
        fit.ci95.0,
        fit.ci95.1,
        fit.r2,
        eta.map_or("none (theta >= 1)".to_string(), |e| e.to_string())
    );
    let summary = json!({
        "command": "theta",
        "payoff": pricing.key(),
        "theta_hat": num(fit.theta_hat),
        "ci": [num(fit.ci95.0), num(fit.ci95.1)],
        "r2": num(fit.r2),
        "theta_hint": pricing.theta_hint().map_or(Value::Null, num),
        "eta_chosen": eta.map_or(Value::Null, num),
        "assumption_violated": fit.theta_hat >= 1.0,
    });
    run.write_json(SUMMARY, &summary)?;
    run.finish("theta", &cfg)?;
    Ok(())
}

/// `H^2(u)` on `[0.1 T, 0.9 T]` and its infimum lower bound.
pub fn cmd_h2(opts: &RunOptions) -> Result<()> {
    let (cfg, dir) = opts.load()?;
    let mut run = RunDir::create(&dir, opts.timing)?;
    let spec = cfg.build_spec()?;
    let pricing = cfg.build_pricing()?;
    pricing.check_compatible(&spec)?;
    let horizon = pricing.horizon();
    let k = (H2_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..H2_GRID_POINTS)
        .map(|i| horizon * (0.1 + 0.8 * i as f64 / k))
        .collect();
    let curve = estimate_h2(
        &spec,
        &pricing,
        &grid,
        cfg.engine.paths,
        cfg.engine.master_seed,
    )
    .context("estimating H^2")?;
    let mut csv = Csv::new(&["u", "h2", "stderr"]);
    for p in &curve.points {
        csv.row(&[Cell::Num(p.u), Cell::Num(p.h2), Cell::Num(p.stderr)]);
    }
    run.write("h2_curve.csv", &csv.into_string())?;
    let bound = curve.infimum_lower_bound(H2_MARGIN);
    let infimum = curve
        .points
        .iter()
        .map(|p| p.h2)
        .fold(f64::INFINITY, f64::min);
    println!("inf H^2 = {infimum:.6e}; lower bound ({H2_MARGIN} stderr) = {bound:.6e}");
    let summary = json!({
        "command": "h2",
        "payoff": pricing.key(),
        "h2_infimum": num(infimum),
        "h2_lower_bound": num(bound),
        "margin": H2_MARGIN,
        "positive": bound > 0.0,
    });
    run.write_json(SUMMARY, &summary)?;
    run.finish("h2", &cfg)?;
    Ok(())
}
