//! Property tests over randomly drawn samples, parameters and seeds.

use proptest::prelude::*;

use bundle_choice::dgp::{Design, ModelParams, simulate_cross, simulate_panel};
use bundle_choice::kernels::KernelSpec;
use bundle_choice::lad::{LadConfig, lad_criterion, nw_ccp};
use bundle_choice::mlp::Mlp;
use bundle_choice::mrc::{Step1Bandwidths, criterion_beta};
use bundle_choice::ms_panel::{PanelBandwidths, beta_terms, criterion_beta_panel, criterion_gamma_panel, numerical_bootstrap_weights};
use bundle_choice::optimizer::{DeConfig, de_minimize};
use bundle_choice::signsum::SignSum;
use bundle_choice::stats::{multiplicities, resample_indices, rng_from_seed};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Fisher-Yates permutation of `0..n` driven by the crate RNG.
fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    v
}

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 32, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn kernels_are_even(u in -8.0f64..8.0, order in prop::sample::select(vec![2u32, 4, 6])) {
        let k = KernelSpec::new(order).unwrap();
        prop_assert_eq!(k.eval(u), k.eval(-u));
    }

    #[test]
    fn sign_sums_ignore_positive_scale(
        terms in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -3.0f64..3.0), 1..80),
        b0 in -4.0f64..4.0,
        b1 in -4.0f64..4.0,
        c in 1e-3f64..1e3,
    ) {
        let mut s = SignSum::new(2);
        for (k, (x, y, w)) in terms.iter().enumerate() {
            s.push(&[*x, *y], *w, k);
        }
        prop_assert_eq!(s.value(&[b0, b1]), s.value(&[c * b0, c * b1]));
    }

    #[test]
    fn mrc_criterion_permutation_invariant(seed in 0u64..1000, n in 10usize..40, b in -3.0f64..3.0) {
        let s = simulate_cross(Design::new(1).unwrap(), n, seed).unwrap();
        let h = Step1Bandwidths::from_sample(&s, 1.0).unwrap();
        let perm = s.select(&permutation(n, seed + 1));
        let a = criterion_beta(&s, &[b], &h, KernelSpec::SIXTH).unwrap();
        let p = criterion_beta(&perm, &[b], &h, KernelSpec::SIXTH).unwrap();
        prop_assert!(rel_close(a, p, 1e-10), "{} vs {}", a, p);
    }

    #[test]
    fn lad_criterion_permutation_invariant(seed in 0u64..1000, n in 20usize..50, t in -2.0f64..2.0) {
        let s = simulate_cross(Design::new(1).unwrap(), n, seed).unwrap();
        let ccp = nw_ccp(&s, &LadConfig::default()).unwrap().p;
        let order = permutation(n, seed + 7);
        let permuted_ccp: Vec<[f64; 4]> = order.iter().map(|&i| ccp[i]).collect();
        let theta = ModelParams { beta_free: vec![t], gamma_free: vec![-t], rho1: vec![1.0], rho2: vec![t], rho_b: None };
        let a = lad_criterion(&s, &ccp, &theta).unwrap();
        let p = lad_criterion(&s.select(&order), &permuted_ccp, &theta).unwrap();
        prop_assert!(rel_close(a, p, 1e-10), "{} vs {}", a, p);
    }

    #[test]
    fn ms_criteria_permutation_invariant(seed in 0u64..1000, n in 10usize..60, b in -3.0f64..3.0) {
        let p = simulate_panel(Design::new(3).unwrap(), n, seed).unwrap();
        let h = PanelBandwidths::from_panel(&p, 2.0).unwrap();
        let q = p.select(&permutation(n, seed + 3));
        let k = KernelSpec::SECOND;
        prop_assert!(rel_close(criterion_beta_panel(&p, &[b], &h, k).unwrap(), criterion_beta_panel(&q, &[b], &h, k).unwrap(), 1e-10));
        prop_assert!(rel_close(criterion_gamma_panel(&p, &[b], &h, k).unwrap(), criterion_gamma_panel(&q, &[b], &h, k).unwrap(), 1e-10));
    }

    #[test]
    fn stayers_do_not_move_ms_criterion(seed in 0u64..1000, n in 20usize..80, b in -3.0f64..3.0) {
        let p = simulate_panel(Design::new(3).unwrap(), n, seed).unwrap();
        let h = PanelBandwidths::from_panel(&p, 2.0).unwrap();
        let movers: Vec<usize> = (0..n).filter(|&i| !p.is_stayer(i)).collect();
        let stayers: Vec<usize> = (0..n).filter(|&i| p.is_stayer(i)).collect();
        let k = KernelSpec::SECOND;
        prop_assert!(beta_terms(&p.select(&stayers), &h, k).unwrap().is_empty());
        let all = criterion_beta_panel(&p, &[b], &h, k).unwrap();
        let only_movers = if movers.is_empty() { 0.0 } else { criterion_beta_panel(&p.select(&movers), &[b], &h, k).unwrap() };
        prop_assert!(rel_close(all, only_movers, 1e-10));
    }

    #[test]
    fn de_stays_in_box_with_monotone_trace(seed in 0u64..10_000, lo in -5.0f64..0.0, width in 0.5f64..6.0) {
        let hi = lo + width;
        let config = DeConfig { pop_size: 12, max_iter: 40, ..DeConfig::cube(3, lo, hi, seed) };
        let r = de_minimize(|x| x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>(), &config).unwrap();
        prop_assert!(r.argmin.iter().all(|v| (lo..=hi).contains(v)));
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*r.trace.last().unwrap(), r.value);
    }

    #[test]
    fn nw_ccp_rows_are_simplex_points(seed in 0u64..1000, n in 30usize..120) {
        let s = simulate_cross(Design::new(2).unwrap(), n, seed).unwrap();
        for row in nw_ccp(&s, &LadConfig::default()).unwrap().p {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mlp_outputs_are_simplex_points(
        seed in 0u64..1000,
        x in prop::collection::vec(-50.0f64..50.0, 4),
        groups in 1usize..3,
    ) {
        let net = Mlp::new(4, &[3, 3], groups, seed).unwrap();
        let p = net.forward(&x).unwrap();
        prop_assert_eq!(p.len(), groups);
        for g in p {
            prop_assert!(g.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_weights_sum_to_n(seed in 0u64..1000, n in 5usize..300, scale in 1.0f64..50.0) {
        let draw = resample_indices(&mut rng_from_seed(seed), n);
        let w = numerical_bootstrap_weights(&multiplicities(&draw, n), scale / n as f64);
        prop_assert!((w.iter().sum::<f64>() - n as f64).abs() < 1e-8 * n as f64);
    }

    #[test]
    fn simulation_is_seed_deterministic(seed in 0u64..u64::MAX, id in 1u8..=2) {
        let d = Design::new(id).unwrap();
        prop_assert_eq!(simulate_cross(d, 30, seed).unwrap(), simulate_cross(d, 30, seed).unwrap());
        let d3 = Design::new(3).unwrap();
        prop_assert_eq!(simulate_panel(d3, 30, seed).unwrap(), simulate_panel(d3, 30, seed).unwrap());
    }
}
