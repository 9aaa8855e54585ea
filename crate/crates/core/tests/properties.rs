use std::collections::BTreeSet;

use proptest::prelude::*;

use ising_scan::adaptive::{fit_beta_pseudolikelihood, pseudo_score};
use ising_scan::classes::{build_rectangle_class, build_scan_grid, gamma_distance, RectangleGridParams};
use ising_scan::detectors::{bonferroni_combine, high_temp_scan_test, lattice_scan_test, naive_scan_statistics, scan_statistics};
use ising_scan::mean_field::{gaussian_max_cutoff, sharp_constant, solve_m};
use ising_scan::model::build_complete;
use ising_scan::risk::{wilson_interval, Z95};
use ising_scan::{SignalSpec, SpinConfiguration};

fn support(n: u32, max_len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::btree_set(0..n, 1..=max_len).prop_map(|s: BTreeSet<u32>| s.into_iter().collect())
}

fn spins(n: usize) -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), n)
}

proptest! {
    #[test]
    fn gamma_is_a_bounded_symmetric_distance(a in support(40, 12), b in support(40, 12)) {
        let ab = gamma_distance(&a, &b).unwrap();
        let ba = gamma_distance(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=std::f64::consts::SQRT_2).contains(&ab));
        prop_assert_eq!(gamma_distance(&a, &a).unwrap(), 0.0);
        if a.len() == b.len() && a != b {
            prop_assert!(ab > 0.0);
        }
    }

    #[test]
    fn summed_area_matches_direct_sums(
        (side, dim, s) in (3usize..9, 1usize..4, 1usize..20),
        seed in any::<u64>(),
    ) {
        let n = side.pow(dim as u32);
        prop_assume!(s <= n);
        let k = ising_scan::classes::cube_side(s, dim);
        prop_assume!(k <= side);
        let class = build_rectangle_class(n, dim, s).unwrap().materialize().unwrap();
        let mut r = ising_scan::rng::from_seed(seed);
        let x = SpinConfiguration::new(ising_scan::samplers::initial_spins(n, ising_scan::samplers::InitialState::UniformRandom, &mut r)).unwrap();
        let fast = scan_statistics(&x, &class, None).unwrap();
        let slow = naive_scan_statistics(&x, &class, None).unwrap();
        for (f, s) in fast.per_candidate.iter().zip(&slow.per_candidate) {
            prop_assert!((f - s).abs() < 1e-12);
        }
        prop_assert_eq!(fast.argmax, slow.argmax);
    }

    #[test]
    fn raising_a_spin_never_turns_a_rejection_into_acceptance(x in spins(144), site in 0usize..144, delta in 0.05f64..1.0) {
        let class = build_scan_grid(&RectangleGridParams::new(144, 2, 9, 0.5).unwrap()).unwrap();
        let before = SpinConfiguration::new(x.clone()).unwrap();
        let mut raised = x;
        raised[site] = 1;
        let after = SpinConfiguration::new(raised).unwrap();
        let (b, a) = (scan_statistics(&before, &class, None).unwrap(), scan_statistics(&after, &class, None).unwrap());
        prop_assert!(a.z_max >= b.z_max);
        prop_assert!(!high_temp_scan_test(&before, &class, delta).unwrap().reject || high_temp_scan_test(&after, &class, delta).unwrap().reject);
        let centering = vec![0.3; 144];
        let lb = lattice_scan_test(&before, &class, 1.7, delta, Some(&centering)).unwrap();
        let la = lattice_scan_test(&after, &class, 1.7, delta, Some(&centering)).unwrap();
        prop_assert!(!lb.reject || la.reject);
    }

    #[test]
    fn pseudo_score_is_nonincreasing(
        fields in prop::collection::vec(-2.0f64..2.0, 1..50),
        signs in prop::collection::vec(prop::bool::ANY, 50),
        b1 in 0.0f64..5.0,
        gap in 0.0f64..5.0,
    ) {
        let x: Vec<f64> = fields.iter().zip(&signs).map(|(_, &s)| if s { 1.0 } else { -1.0 }).collect();
        prop_assert!(pseudo_score(&fields, &x, b1 + gap) <= pseudo_score(&fields, &x, b1) + 1e-12);
    }

    #[test]
    fn cutoff_grows_with_delta_and_class_size(d in 0.01f64..2.0, dd in 0.0f64..1.0, l in 0.0f64..20.0, dl in 0.0f64..5.0, scale in 0.01f64..5.0) {
        let base = gaussian_max_cutoff(d, scale, l);
        prop_assert!(gaussian_max_cutoff(d + dd, scale, l) >= base);
        prop_assert!(gaussian_max_cutoff(d, scale, l + dl) >= base);
    }

    #[test]
    fn complete_graph_estimate_ignores_site_order(x in spins(60), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let graph = build_complete(60).unwrap();
        let mut shuffled = x.clone();
        shuffled.shuffle(&mut ising_scan::rng::from_seed(perm_seed));
        let a = fit_beta_pseudolikelihood(&SpinConfiguration::new(x).unwrap(), &graph, &[]);
        let b = fit_beta_pseudolikelihood(&SpinConfiguration::new(shuffled).unwrap(), &graph, &[]);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a.beta_hat - b.beta_hat).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn magnetization_is_a_fixed_point(beta in 0.0f64..8.0) {
        let sol = solve_m(beta).unwrap();
        prop_assert!((sol.m - (beta * sol.m).tanh()).abs() <= 1e-12);
        prop_assert!(sharp_constant(beta).unwrap() >= std::f64::consts::SQRT_2 - 1e-12);
    }

    #[test]
    fn negative_fields_are_rejected(v in prop::collection::vec(-1.0f64..1.0, 1..20)) {
        let ok = SignalSpec::from_vector(&v).is_ok();
        prop_assert_eq!(ok, v.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn wilson_interval_brackets_the_rate(trials in 1usize..2000, frac in 0.0f64..=1.0) {
        let hits = ((trials as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(hits, trials, Z95);
        let p = hits as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn bonferroni_rejects_iff_either_rejects(x in spins(64), delta in 0.05f64..1.0) {
        let c = SpinConfiguration::new(x).unwrap();
        let class = build_scan_grid(&RectangleGridParams::new(64, 2, 4, 0.5).unwrap()).unwrap();
        let d1 = high_temp_scan_test(&c, &class, delta).unwrap();
        let d2 = lattice_scan_test(&c, &class, 0.8, delta, None).unwrap();
        prop_assert_eq!(bonferroni_combine(&d1, &d2).reject, d1.reject || d2.reject);
    }
}
