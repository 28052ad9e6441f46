use crlearn::summary::learned_basic;
use crlearn::{
    cr_objective, fit_default, CressieReadConfig, DataMatrix, MomentModel, SolverConfig,
};
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 6..14).prop_filter("spread", |v| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo > 0.5
    })
}

fn cr_choice() -> impl Strategy<Value = CressieReadConfig> {
    prop_oneof![
        Just(CressieReadConfig::default()),
        Just(CressieReadConfig::general(1.0).unwrap()),
        Just(CressieReadConfig::exponential_tilting()),
        Just(CressieReadConfig::empirical_likelihood()),
    ]
}

fn fit(y: &[f64], cr: &CressieReadConfig) -> crlearn::ContrastSolution {
    fit_default(
        &DataMatrix::column(y).unwrap(),
        &MomentModel::mean_variance(),
        cr,
        &SolverConfig::default(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fitted_probabilities_lie_on_the_simplex(y in sample(), cr in cr_choice()) {
        let sol = fit(&y, &cr);
        prop_assert!(sol.pi.iter().all(|p| *p >= 0.0));
        prop_assert!((sol.pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(sol.residual < 1e-6);
    }

    #[test]
    fn fit_is_permutation_invariant(y in sample(), cr in cr_choice(), shift in 1usize..5) {
        let a = fit(&y, &cr);
        let mut rotated = y.clone();
        rotated.rotate_left(shift % y.len());
        let b = fit(&rotated, &cr);
        for (x, z) in a.beta.iter().zip(&b.beta) {
            prop_assert!((x - z).abs() < 1e-6);
        }
        let n = y.len();
        for i in 0..n {
            let j = (i + n - shift % n) % n;
            prop_assert!((b.pi[j] - a.pi[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn learned_statistic_log_ratio_is_antisymmetric(
        y in prop::collection::vec(-3.0f64..3.0, 8),
        z in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let cr = CressieReadConfig::default();
        let (a, b) = (fit(&y, &cr), fit(&z, &cr));
        let ab = learned_basic(&a, &b).unwrap();
        let ba = learned_basic(&b, &a).unwrap();
        prop_assert!((ab.log_ratio_term + ba.log_ratio_term).abs() < 1e-9);
        prop_assert!((ab.distance_term - ba.distance_term).abs() < 1e-12);
        prop_assert!(ab.distance_term >= 0.0);
        prop_assert!(learned_basic(&a, &a).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn objective_is_minimized_at_uniform(
        w in prop::collection::vec(0.05f64..1.0, 2..10),
        gamma in prop_oneof![-3.0f64..-1.05, -0.95f64..-0.05, 0.05f64..3.0],
    ) {
        let s: f64 = w.iter().sum();
        let pi: Vec<f64> = w.iter().map(|x| x / s).collect();
        let cr = CressieReadConfig::general(gamma).unwrap();
        let v = cr_objective(&pi, &cr).unwrap();
        let u = cr_objective(&vec![1.0 / pi.len() as f64; pi.len()], &cr).unwrap();
        prop_assert!(u.abs() < 1e-12);
        prop_assert!(v >= -1e-12);
    }
}
