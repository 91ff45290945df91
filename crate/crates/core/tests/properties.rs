use perpetual::experiments::{ladder_call, two_proportion_z, wilson_interval, LadderCall};
use perpetual::scale::{DiffusionSpec, Domain, ScaleSpeed, Tri};
use perpetual::simulate::{
    build_time_change, simulate_1d, simulate_multiallele, Mark, SimConfig,
};
use perpetual::CoefficientExpr;
use proptest::prelude::*;

fn tri() -> impl Strategy<Value = Tri> {
    prop_oneof![Just(Tri::True), Just(Tri::False), Just(Tri::Unknown)]
}

fn simplex(l: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, l).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tri_de_morgan(a in tri(), b in tri()) {
        prop_assert_eq!(a.and(b).not(), a.not().or(b.not()));
        prop_assert_eq!(a.and(b), b.and(a));
        prop_assert_eq!(a.not().not(), a);
    }

    #[test]
    fn affine_expressions_evaluate(c in -50.0f64..50.0, d in -50.0f64..50.0, y in 0.001f64..100.0) {
        let e = CoefficientExpr::parse(&format!("{c:?}*y + {d:?}")).unwrap();
        let v = e.eval(y).unwrap();
        prop_assert!((v - (c * y + d)).abs() <= 1e-12 * (1.0 + (c * y).abs() + d.abs()));
        let again = CoefficientExpr::parse(&e.pretty()).unwrap();
        prop_assert_eq!(again.eval(y).unwrap(), v);
    }

    #[test]
    fn scale_is_increasing(b in -1.0f64..1.0, y1 in 0.05f64..5.0, dy in 0.01f64..5.0) {
        let spec = DiffusionSpec::new(
            CoefficientExpr::constant(1.0),
            CoefficientExpr::constant(b),
            Domain::half_line(0.0),
            1.0,
        ).unwrap();
        let ss = ScaleSpeed::build(&spec).unwrap();
        prop_assert!(ss.s(y1).unwrap() < ss.s(y1 + dy).unwrap());
        prop_assert!(ss.m_density(y1).unwrap() > 0.0);
    }

    #[test]
    fn z_statistic_is_antisymmetric(x1 in 0usize..200, x2 in 0usize..200) {
        let (n1, n2) = (200, 200);
        prop_assert!((two_proportion_z(x1, n1, x2, n2) + two_proportion_z(x2, n2, x1, n1)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(x1, n1);
        let p = x1 as f64 / n1 as f64;
        prop_assert!(lo <= p && p <= hi && 0.0 <= lo && hi <= 1.0);
    }

    #[test]
    fn ladder_call_is_scale_free(i0 in 0.01f64..10.0, r1 in 1.0f64..3.0, r2 in 1.0f64..3.0, k in 0.001f64..1000.0) {
        let marks = |s: f64| -> Vec<Mark> {
            [i0, i0 * r1, i0 * r1 * r2]
                .iter()
                .map(|v| Mark { level: 0.0, time: 0.0, integrals: vec![v * s] })
                .collect()
        };
        let call = ladder_call(&marks(1.0), 0);
        prop_assert_eq!(call, ladder_call(&marks(k), 0));
        prop_assert_ne!(call, LadderCall::Unreached);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn multiallele_stays_on_the_simplex(x0 in simplex(4), seed in any::<u64>()) {
        let cfg = SimConfig { seed, t_budget: 0.5, dt: 1e-3, ..SimConfig::default() };
        let t = simulate_multiallele(4, &x0, &cfg, 0).unwrap();
        prop_assert!(t.max_simplex_error <= 1e-12);
        for s in &t.states {
            prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn running_integrals_never_decrease(x0 in 0.1f64..3.0, seed in any::<u64>()) {
        let cfg = SimConfig { seed, t_budget: 5.0, ..SimConfig::default() };
        let f = CoefficientExpr::parse("1/y").unwrap();
        let t = simulate_1d(&DiffusionSpec::branching_immigration(0.25), x0, &cfg, &[f], 0).unwrap();
        prop_assert!(t.integrals.windows(2).all(|w| w[1][0] >= w[0][0]));
        prop_assert!(t.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn time_change_is_monotone(seed in any::<u64>()) {
        let cfg = SimConfig { seed, absorption_eps: 1e-8, t_budget: 50.0, ..SimConfig::default() };
        let t = simulate_1d(&DiffusionSpec::logistic(-1.0, 0.1), 1.0, &cfg, &[], 0).unwrap();
        let tc = build_time_change(&t, &CoefficientExpr::parse("y").unwrap()).unwrap();
        prop_assert!(tc.a.windows(2).all(|w| w[1] > w[0]));
        let grid: Vec<f64> = (0..50).map(|k| tc.t_max() * k as f64 / 49.0).collect();
        prop_assert!(grid.windows(2).all(|w| tc.tau(w[1]) >= tc.tau(w[0])));
    }
}
