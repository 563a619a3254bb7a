use std::time::Instant;

use anyhow::{Context, Result};
use hedgenet_core::analysis::{choose_eta, default_theta_grid, estimate_theta, fit_rate};
use hedgenet_core::hedging::{estimate_l2_error, HedgeErrorEstimate, HedgeExperiment, NetFamily};
use hedgenet_core::models::DiffusionSpec;
use hedgenet_core::pricing::PricingModel;
use serde_json::{json, Map, Value};

use super::RunOptions;
use crate::config::{ExperimentConfig, FamilySpec};
use crate::output::{num, Cell, Csv, RunDir, SUMMARY};

/// Paths used to estimate theta when `eta:auto` meets a payoff without hint.
pub const AUTO_THETA_PATHS: usize = 50_000;

struct ThetaSource {
    theta: f64,
    source: &'static str,
    eta: f64,
}

fn resolve_theta(
    cfg: &ExperimentConfig,
    spec: &DiffusionSpec,
    pricing: &PricingModel,
) -> Result<ThetaSource> {
    let (theta, source) = match pricing.theta_hint() {
        Some(theta) => (theta, "hint"),
        None => {
            log::info!(
                "no theta hint for {}; estimating with {AUTO_THETA_PATHS} paths",
                pricing.key()
            );
            let fit = estimate_theta(
                spec,
                pricing,
                &default_theta_grid(pricing.horizon()),
                AUTO_THETA_PATHS,
                cfg.engine.master_seed,
            )?;
            (fit.theta_hat, "estimate")
        }
    };
    let eta = choose_eta(theta.max(0.0)).context("choosing eta for eta:auto")?;
    Ok(ThetaSource { theta, source, eta })
}

struct Row {
    family: NetFamily,
    n: usize,
    monitor_points: usize,
    estimate: HedgeErrorEstimate,
    wall_ms: u64,
}

struct Sweep {
    pricing: PricingModel,
    families: Vec<NetFamily>,
    theta: Option<ThetaSource>,
    rows: Vec<Row>,
}

fn run_sweep(cfg: &ExperimentConfig, run: &RunDir) -> Result<Sweep> {
    let spec = cfg.build_spec()?;
    let pricing = cfg.build_pricing()?;
    pricing.check_compatible(&spec)?;
    let mut theta = None;
    let mut families = Vec::new();
    for f in cfg.families() {
        let family = match f {
            FamilySpec::Fixed(f) => f,
            FamilySpec::AutoEta => {
                if theta.is_none() {
                    theta = Some(resolve_theta(cfg, &spec, &pricing)?);
                }
                let t = theta.as_ref().unwrap();
                if t.eta == 0.0 {
                    NetFamily::Equidistant
                } else {
                    NetFamily::Eta(t.eta)
                }
            }
        };
        if families.contains(&family) {
            log::info!("family {family} listed twice (after resolving eta:auto); running it once");
        } else {
            families.push(family);
        }
    }
    let mut rows = Vec::new();
    for &family in &families {
        for &n in &cfg.nets.n_list {
            let started = Instant::now();
            let net = family.build(pricing.horizon(), n)?;
            let mut exp = HedgeExperiment::new(
                spec.clone(),
                pricing.clone(),
                net,
                cfg.engine.paths,
                cfg.engine.master_seed,
                cfg.engine.mode,
            );
            exp.monitor_points = cfg.engine.m_rule * n;
            let estimates =
                estimate_l2_error(&exp).with_context(|| format!("{family}, n = {n}"))?;
            let wall_ms = run.elapsed_ms(started);
            log::info!("{family} n = {n}: rms {:.6e}", estimates[0].rms);
            for estimate in estimates {
                rows.push(Row {
                    family,
                    n,
                    monitor_points: exp.monitor_points,
                    estimate,
                    wall_ms,
                });
            }
        }
    }
    Ok(Sweep {
        pricing,
        families,
        theta,
        rows,
    })
}

fn experiments_csv(cfg: &ExperimentConfig, rows: &[Row]) -> String {
    let mut csv = Csv::new(&[
        "family", "eta", "n", "M", "N", "mode", "mean_sq", "rms", "stderr", "seed", "wall_ms",
    ]);
    for r in rows {
        csv.row(&[
            Cell::Str(r.family.label()),
            Cell::Num(r.family.eta()),
            Cell::Int(r.n as u64),
            Cell::Int(r.monitor_points as u64),
            Cell::Int(r.estimate.paths as u64),
            Cell::Str(r.estimate.mode.as_str()),
            Cell::Num(r.estimate.mean_sq),
            Cell::Num(r.estimate.rms),
            Cell::Num(r.estimate.stderr_mean_sq),
            Cell::Int(cfg.engine.master_seed),
            Cell::Int(r.wall_ms),
        ]);
    }
    csv.into_string()
}

fn theta_json(theta: &Option<ThetaSource>) -> (Value, Value, Value) {
    match theta {
        Some(t) => (num(t.theta), json!(t.source), num(t.eta)),
        None => (Value::Null, Value::Null, Value::Null),
    }
}

/// Rate sweep: error curves per net family and a log-log fit of rms on n.
pub fn cmd_rate(opts: &RunOptions) -> Result<()> {
    let (cfg, dir) = opts.load()?;
    let mut run = RunDir::create(&dir, opts.timing)?;
    let sweep = run_sweep(&cfg, &run)?;
    run.write("experiments.csv", &experiments_csv(&cfg, &sweep.rows))?;

    // terminal errors drive the fit whenever they were estimated
    let kind = cfg.engine.mode.kinds()[0];
    let mut fit_csv = Csv::new(&["n", "rms", "stderr", "family", "eta"]);
    let mut families_json = Vec::new();
    let (mut slopes, mut cis) = (Map::new(), Map::new());
    for &family in &sweep.families {
        let pts: Vec<&Row> = sweep
            .rows
            .iter()
            .filter(|r| r.family == family && r.estimate.mode == kind)
            .collect();
        for r in &pts {
            fit_csv.row(&[
                Cell::Int(r.n as u64),
                Cell::Num(r.estimate.rms),
                Cell::Num(r.estimate.stderr_rms()),
                Cell::Str(family.label()),
                Cell::Num(family.eta()),
            ]);
        }
        let fit = fit_rate(
            &pts.iter()
                .map(|r| (r.n, r.estimate.rms))
                .collect::<Vec<_>>(),
        )
        .with_context(|| format!("fitting the rate for {family}"))?;
        println!(
            "{family}: slope {:.4} (95% CI [{:.4}, {:.4}], r2 {:.4}, {} points)",
            fit.slope,
            fit.ci95_slope.0,
            fit.ci95_slope.1,
            fit.r2,
            fit.points_used.len()
        );
        let key = family.to_string();
        slopes.insert(key.clone(), num(fit.slope));
        cis.insert(
            key.clone(),
            json!([num(fit.ci95_slope.0), num(fit.ci95_slope.1)]),
        );
        families_json.push(json!({
            "family": key,
            "eta": num(family.eta()),
            "slope": num(fit.slope),
            "intercept": num(fit.intercept),
            "ci": [num(fit.ci95_slope.0), num(fit.ci95_slope.1)],
            "r2": num(fit.r2),
            "points_used": fit.points_used.len(),
        }));
    }
    run.write("rate_fit.csv", &fit_csv.into_string())?;
    let (theta_hat, theta_source, eta_chosen) = theta_json(&sweep.theta);
    let summary = json!({
        "command": "rate",
        "payoff": sweep.pricing.key(),
        "mode": kind.as_str(),
        "theta_hat": theta_hat,
        "theta_source": theta_source,
        "eta_chosen": eta_chosen,
        "slope": slopes,
        "ci": cis,
        "families": families_json,
    });
    run.write_json(SUMMARY, &summary)?;
    run.finish("rate", &cfg)?;
    Ok(())
}

/// Error estimates for every family and n, without rate fitting.
pub fn cmd_simulate(opts: &RunOptions) -> Result<()> {
    let (cfg, dir) = opts.load()?;
    let mut run = RunDir::create(&dir, opts.timing)?;
    let sweep = run_sweep(&cfg, &run)?;
    run.write("experiments.csv", &experiments_csv(&cfg, &sweep.rows))?;
    for r in &sweep.rows {
        println!(
            "{} n = {:>5} {:<11} mean_sq {:.6e} +- {:.2e}  rms {:.6e}",
            r.family,
            r.n,
            r.estimate.mode.as_str(),
            r.estimate.mean_sq,
            r.estimate.stderr_mean_sq,
            r.estimate.rms
        );
    }
    let (theta_hat, theta_source, eta_chosen) = theta_json(&sweep.theta);
    let estimates: Vec<Value> = sweep
        .rows
        .iter()
        .map(|r| {
            json!({
                "family": r.family.to_string(),
                "n": r.n,
                "mode": r.estimate.mode.as_str(),
                "mean_sq": num(r.estimate.mean_sq),
                "rms": num(r.estimate.rms),
                "stderr": num(r.estimate.stderr_mean_sq),
            })
        })
        .collect();
    let summary = json!({
        "command": "simulate",
        "payoff": sweep.pricing.key(),
        "theta_hat": theta_hat,
        "theta_source": theta_source,
        "eta_chosen": eta_chosen,
        "estimates": estimates,
    });
    run.write_json(SUMMARY, &summary)?;
    run.finish("simulate", &cfg)?;
    Ok(())
}
