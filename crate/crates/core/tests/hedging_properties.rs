use hedgenet_core::hedging::path_errors;
use hedgenet_core::models::sample_path_exact;
use hedgenet_core::oracle::analytic_quadratic_error;
use hedgenet_core::pricing::BmQuadratic;
use hedgenet_core::stats::MeanEstimate;
use hedgenet_core::{
    error_curve, estimate_l2_error, DiffusionSpec, ErrorMode, HedgeErrorEstimate, HedgeExperiment,
    NetFamily, PricingModel, SeedSpec,
};

fn quadratic(d: usize) -> (DiffusionSpec, PricingModel) {
    (
        DiffusionSpec::standard_brownian(d).unwrap(),
        PricingModel::Quadratic(BmQuadratic::new(d, 1.0).unwrap()),
    )
}

fn unit_gbm(d: usize) -> DiffusionSpec {
    DiffusionSpec::driftless_gbm(vec![1.0; d]).unwrap()
}

fn estimate(
    spec: &DiffusionSpec,
    pricing: &PricingModel,
    family: NetFamily,
    n: usize,
    paths: usize,
    seed: u64,
    mode: ErrorMode,
) -> Vec<HedgeErrorEstimate> {
    let net = family.build(pricing.horizon(), n).unwrap();
    estimate_l2_error(&HedgeExperiment::new(
        spec.clone(),
        pricing.clone(),
        net,
        paths,
        seed,
        mode,
    ))
    .unwrap()
}

#[test]
fn quadratic_error_matches_closed_form() {
    for d in [1, 3] {
        let (spec, pricing) = quadratic(d);
        for family in [NetFamily::Equidistant, NetFamily::Eta(0.5)] {
            for n in [1, 4, 16] {
                let e = &estimate(&spec, &pricing, family, n, 100_000, 17, ErrorMode::Terminal)[0];
                let exact = analytic_quadratic_error(&family.build(1.0, n).unwrap(), d);
                assert!(
                    (e.mean_sq - exact).abs() <= 3.0 * e.stderr_mean_sq,
                    "d = {d}, {family}, n = {n}: {} +- {} vs {exact}",
                    e.mean_sq,
                    e.stderr_mean_sq
                );
            }
        }
    }
}

#[test]
fn single_interval_quadratic_error_at_large_sample() {
    let (spec, pricing) = quadratic(1);
    let e = &estimate(
        &spec,
        &pricing,
        NetFamily::Equidistant,
        1,
        1_000_000,
        23,
        ErrorMode::Terminal,
    )[0];
    assert!((e.mean_sq - 2.0).abs() <= 3.0 * e.stderr_mean_sq, "{e:?}");
}

#[test]
fn quadratic_error_halves_per_doubling() {
    let (spec, pricing) = quadratic(1);
    let curve = error_curve(
        &spec,
        &pricing,
        NetFamily::Equidistant,
        &[1, 2, 4, 8],
        32,
        200_000,
        5,
        ErrorMode::Terminal,
    )
    .unwrap();
    for p in &curve {
        let exact = 2.0 / p.n as f64;
        assert!(
            (p.estimate.mean_sq - exact).abs() <= 3.0 * p.estimate.stderr_mean_sq,
            "{p:?}"
        );
    }
}

#[test]
fn estimates_are_consistent() {
    let e = estimate(
        &unit_gbm(1),
        &PricingModel::digital(1.0, 1.0, 1.0).unwrap(),
        NetFamily::Eta(0.5),
        8,
        2000,
        3,
        ErrorMode::Both,
    );
    assert_eq!(e.len(), 2);
    for x in &e {
        assert!(x.mean_sq >= 0.0 && x.stderr_mean_sq.is_finite());
        assert!((x.rms * x.rms - x.mean_sq).abs() <= 1e-15 * x.mean_sq);
        assert_eq!(x.paths, 2000);
    }
}

#[test]
fn doob_comparison() {
    for (name, pricing) in [
        ("digital", PricingModel::digital(1.0, 1.0, 1.0).unwrap()),
        ("call", PricingModel::call(1.0, 1.0, 1.0).unwrap()),
    ] {
        for n in [4, 64] {
            let e = estimate(
                &unit_gbm(1),
                &pricing,
                NetFamily::Equidistant,
                n,
                20_000,
                31,
                ErrorMode::Both,
            );
            let (term, sup) = (&e[0], &e[1]);
            let noise = term.stderr_mean_sq / term.mean_sq + sup.stderr_mean_sq / sup.mean_sq;
            assert!(sup.mean_sq >= term.mean_sq, "{name} n = {n}");
            assert!(
                sup.mean_sq <= 4.0 * term.mean_sq * (1.0 + 5.0 * noise),
                "{name} n = {n}: {sup:?} vs {term:?}"
            );
        }
    }
}

#[test]
fn monitoring_resolution_is_stable() {
    let spec = unit_gbm(1);
    let pricing = PricingModel::digital(1.0, 1.0, 1.0).unwrap();
    let net = NetFamily::Eta(0.75).build(1.0, 8).unwrap();
    let sup = |m: usize| {
        let mut exp = HedgeExperiment::new(
            spec.clone(),
            pricing.clone(),
            net.clone(),
            20_000,
            9,
            ErrorMode::RunningSup,
        );
        exp.monitor_points = m;
        estimate_l2_error(&exp).unwrap().remove(0)
    };
    let (a, b) = (sup(16 * 8), sup(32 * 8));
    let combined = (a.stderr_mean_sq.powi(2) + b.stderr_mean_sq.powi(2)).sqrt();
    assert!(
        (a.mean_sq - b.mean_sq).abs() <= 3.0 * combined,
        "{a:?} vs {b:?}"
    );
}

#[test]
fn adapted_nets_separate_from_equidistant_for_the_digital() {
    let spec = unit_gbm(1);
    let pricing = PricingModel::digital(1.0, 1.0, 1.0).unwrap();
    let ns = [32, 64, 128, 256];
    let curve = |family| {
        error_curve(
            &spec,
            &pricing,
            family,
            &ns,
            32,
            40_000,
            13,
            ErrorMode::Terminal,
        )
        .unwrap()
    };
    let (eq, eta) = (curve(NetFamily::Equidistant), curve(NetFamily::Eta(0.75)));
    let ratios: Vec<f64> = eq
        .iter()
        .zip(&eta)
        .map(|(a, b)| b.estimate.rms / a.estimate.rms)
        .collect();
    assert!(ratios.iter().all(|r| *r <= 1.0), "{ratios:?}");
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn path_errors_do_not_depend_on_worker_count() {
    let spec = unit_gbm(3);
    let pricing = PricingModel::Product(
        hedgenet_core::pricing::ProductPricing::example(1.0, 1.0, 0.25, 1.0, [1.0; 3], 1.0)
            .unwrap(),
    );
    let net = NetFamily::Eta(0.75).build(1.0, 16).unwrap();
    let exp = HedgeExperiment::new(spec, pricing, net, 300, 77, ErrorMode::Both);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| (path_errors(&exp).unwrap(), estimate_l2_error(&exp).unwrap()))
    };
    let reference = run(1);
    for threads in [4, 16] {
        let other = run(threads);
        assert_eq!(
            reference
                .0
                .iter()
                .map(|p| (p.terminal_error.to_bits(), p.sup_abs_error.to_bits()))
                .collect::<Vec<_>>(),
            other
                .0
                .iter()
                .map(|p| (p.terminal_error.to_bits(), p.sup_abs_error.to_bits()))
                .collect::<Vec<_>>()
        );
        assert_eq!(reference.1, other.1);
    }
}

#[test]
fn driftless_gbm_is_a_martingale() {
    let spec = DiffusionSpec::driftless_gbm(vec![0.5, 1.5]).unwrap();
    for k in 0..2 {
        let terminal: Vec<f64> = (0..100_000u64)
            .map(|i| {
                sample_path_exact(&spec, &[0.0, 1.0], SeedSpec::new(8, i))
                    .unwrap()
                    .terminal()[k]
            })
            .collect();
        let m = MeanEstimate::from_samples(&terminal);
        assert!(
            (m.mean - 1.0).abs() <= 3.0 * m.stderr,
            "coordinate {k}: {m:?}"
        );
    }
}
