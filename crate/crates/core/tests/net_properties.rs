use hedgenet_core::timenets::{eta_net, lemma_net_functional, refine, EtaNetParams, TimeNet};
use hedgenet_core::{Error, NetFamily};
use proptest::prelude::*;

fn check_net(net: &TimeNet, horizon: f64, n: usize) {
    let k = net.knots();
    assert_eq!(k.len(), n + 1);
    assert_eq!(k[0], 0.0);
    assert_eq!(k[n], horizon);
    assert!(k.windows(2).all(|w| w[1] > w[0]), "{k:?}");
}

proptest! {
    #[test]
    fn eta_nets_are_valid(horizon in 0.1f64..10.0, n in 1usize..300, eta in 0.0f64..0.95) {
        let net = match eta_net(EtaNetParams::new(horizon, n, eta).unwrap()) {
            Ok(net) => net,
            Err(Error::InvalidNet(_)) => {
                // refused only when the exact last spacing is below double resolution
                prop_assert!(horizon * (n as f64).powf(-1.0 / (1.0 - eta)) < 1e-14 * horizon);
                return Ok(());
            }
            Err(e) => panic!("{e}"),
        };
        check_net(&net, horizon, n);
        if n >= 2 {
            let s: Vec<f64> = net.spacings().collect();
            let (first, last) = (s[0], s[n - 1]);
            prop_assert!(first >= last * (1.0 - 1e-12));
            if eta == 0.0 {
                prop_assert!((first - last).abs() <= 1e-12 * horizon);
            } else {
                prop_assert!(first > last);
            }
            // spacings shrink monotonically towards T
            prop_assert!(s.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn refined_grids_contain_the_net(n in 1usize..64, eta in 0.0f64..0.75, mult in 1usize..40) {
        let net = eta_net(EtaNetParams::new(1.0, n, eta).unwrap()).unwrap();
        let grid = refine(&net, mult * n).unwrap();
        let times = grid.times();
        prop_assert_eq!(times[0], 0.0);
        prop_assert_eq!(*times.last().unwrap(), 1.0);
        prop_assert!(times.windows(2).all(|w| w[1] > w[0]));
        let knots: Vec<f64> = times.iter().zip(grid.is_knot()).filter(|(_, k)| **k).map(|(t, _)| *t).collect();
        prop_assert_eq!(&knots[..], net.knots());
        let idx = grid.knot_index();
        prop_assert!(idx.windows(2).all(|w| w[1] >= w[0]));
        for (t, i) in times.iter().zip(idx) {
            prop_assert!(*i >= 1 && *i <= n);
            let k = net.knots();
            prop_assert!(k[i - 1] <= *t && (*t < k[*i] || (*i == n && *t == k[n])));
        }
    }

    #[test]
    fn csv_round_trip(n in 1usize..100, eta in 0.0f64..0.75) {
        let net = eta_net(EtaNetParams::new(2.5, n, eta).unwrap()).unwrap();
        prop_assert_eq!(TimeNet::from_csv(&net.to_csv()).unwrap(), net);
    }
}

#[test]
fn family_builder_matches_the_formula() {
    let a = NetFamily::Eta(0.75).build(1.0, 16).unwrap();
    let b = eta_net(EtaNetParams::new(1.0, 16, 0.75).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        NetFamily::Equidistant.build(1.0, 16).unwrap(),
        eta_net(EtaNetParams::new(1.0, 16, 0.0).unwrap()).unwrap()
    );
}

#[test]
fn lemma_functional_is_bounded_only_on_adapted_nets() {
    let scaled = |family: NetFamily, n: usize| {
        n as f64 * lemma_net_functional(&family.build(1.0, n).unwrap(), 0.75).unwrap()
    };
    let base = scaled(NetFamily::Eta(0.75), 8);
    let mut n = 8;
    while n <= 4096 {
        assert!(scaled(NetFamily::Eta(0.75), n) <= 2.0 * base, "n = {n}");
        n *= 2;
    }
    assert!(scaled(NetFamily::Equidistant, 4096) > 4.0 * scaled(NetFamily::Equidistant, 8));
}
