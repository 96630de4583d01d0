use proptest::prelude::*;

use entrolim::bounds::{lp_bound, lp_bound_asymptotic, lp_constant};
use entrolim::distributions::{Exponent, GeneralizedGaussian};
use entrolim::processes::DisturbanceModel;
use entrolim::simulator::{causality_audit, random_causal_controller, run_loop};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gg_norm_matches_bound_at_own_exponent(p in 1.0f64..8.0, mu in 0.1f64..5.0) {
        let gg = GeneralizedGaussian::new(Exponent::Finite(p), mu).unwrap();
        let b = lp_bound(gg.entropy_bits(), Exponent::Finite(p));
        prop_assert!((b / gg.lp_norm().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_decreases_towards_two(p in 1.0f64..50.0, step in 0.1f64..10.0) {
        let a = lp_constant(Exponent::Finite(p));
        let b = lp_constant(Exponent::Finite(p + step));
        prop_assert!(b < a);
        prop_assert!(b > lp_constant(Exponent::Infinity));
    }

    #[test]
    fn ar1_bound_is_innovation_scale(a in -0.95f64..0.95, var in 0.1f64..4.0) {
        let m = DisturbanceModel::gauss_arma(vec![a], vec![], var).unwrap();
        let b = lp_bound_asymptotic(&m, Exponent::Finite(2.0)).unwrap().bound;
        prop_assert!((b - var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn random_controllers_are_causal_and_close_the_loop(seed in any::<u64>(), memory in 1usize..12, cap in 0.5f64..8.0) {
        let c = random_causal_controller(seed, memory, cap).unwrap();
        prop_assert!(causality_audit(&c, 64, 16, seed).unwrap().passed);
        let m = DisturbanceModel::gauss_arma(vec![0.5], vec![], 1.0).unwrap();
        let t = run_loop(&m, &c, 256, seed).unwrap();
        prop_assert!(t.satisfies_loop_identity());
    }
}
