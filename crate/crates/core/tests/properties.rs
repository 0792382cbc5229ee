use proptest::prelude::*;

use adafix::analysis::{check_opc, detect_escape_in_distances, Annulus};
use adafix::harness::record::parse_csv;
use adafix::harness::{run_experiment, ExperimentConfig};
use adafix::optimizers::{adam_step, amsgrad_step};
use adafix::{
    GradientSource, HyperParams, NoisyObjective, Objective, OptimizerKind, OptimizerState, ParamVector, Rng,
};

fn vec_strategy(max_dim: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, 1..=max_dim)
}

fn nonzero(v: &[f64]) -> bool {
    v.iter().any(|x| x.abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn norm2_is_absolutely_homogeneous(v in vec_strategy(8, 1e3), a in -1e3f64..1e3) {
        let p = ParamVector::new(v).unwrap();
        let lhs = p.scale(a).unwrap().norm2();
        let rhs = a.abs() * p.norm2();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn zero_noise_source_matches_base(v in vec_strategy(4, 5.0), seed in any::<u64>()) {
        let x_star = ParamVector::zeros(v.len());
        let base = Objective::opc_quadratic(2.0, x_star).unwrap();
        let mut noisy = NoisyObjective::new(base.clone(), 0.0, Rng::new(seed)).unwrap();
        let x = ParamVector::new(v).unwrap();
        prop_assert_eq!(noisy.gradient(&x).unwrap(), base.grad(&x).unwrap());
        prop_assert_eq!(noisy.value(&x).unwrap().to_bits(), base.eval(&x).unwrap().to_bits());
    }

    #[test]
    fn opc_quadratic_condition_holds_everywhere(
        v in vec_strategy(5, 10.0).prop_filter("x != x*", |v| nonzero(v)),
        c in 0.1f64..10.0,
    ) {
        let x_star = ParamVector::filled(v.len(), 0.25);
        let f = Objective::opc_quadratic(c, x_star.clone()).unwrap();
        let x = ParamVector::new(v).unwrap();
        let diff = x_star.sub(&x).unwrap();
        let inner = -f.grad(&x).unwrap().dot(&diff).unwrap();
        let d2 = diff.dot(&diff).unwrap();
        prop_assume!(d2 > 1e-12);
        prop_assert!(inner > (c - 1e-9) * d2);
        prop_assert!(f.grad(&x_star).unwrap().norm2() < 1e-9);
    }

    #[test]
    fn check_opc_separates_at_c(c in 0.5f64..5.0, seed in any::<u64>()) {
        let x_star = ParamVector::zeros(3);
        let f = Objective::opc_quadratic(c, x_star.clone()).unwrap();
        let region = Annulus::new(0.1, 3.0).unwrap();
        let mut rng = Rng::new(seed);
        prop_assert!(check_opc(&f, &x_star, c * 0.99, region, 50, &mut rng).unwrap().holds);
        prop_assert!(!check_opc(&f, &x_star, c * 1.01, region, 50, &mut rng).unwrap().holds);
    }

    #[test]
    fn escape_report_unchanged_by_appending(
        d in prop::collection::vec(0.0f64..4.0, 1..50),
        tail in prop::collection::vec(0.0f64..4.0, 0..20),
    ) {
        let radius = 1.5;
        let a = detect_escape_in_distances(&d, radius).unwrap();
        prop_assume!(a.escaped);
        let mut longer = d.clone();
        longer.extend(tail);
        let b = detect_escape_in_distances(&longer, radius).unwrap();
        prop_assert!(b.escaped);
        prop_assert_eq!(a.first_escape_step, b.first_escape_step);
        prop_assert!(b.min_distance <= a.min_distance);
    }

    #[test]
    fn adam_step_is_antiparallel_to_gradient_for_uniform_v(
        g in vec_strategy(6, 10.0).prop_filter("g != 0", |v| nonzero(v)),
        scale in 0.1f64..10.0,
    ) {
        // With beta1 = 0 and every |g_i| equal, v_hat is constant so the step
        // is a positive multiple of -g.
        let dim = g.len();
        let g = ParamVector::new(g.iter().map(|x| x.signum() * scale).collect()).unwrap();
        let h = HyperParams { beta1: 0.0, ..HyperParams::with_eta(0.1) };
        let x = ParamVector::zeros(dim);
        let r = adam_step(&x, &g, &OptimizerState::for_params(dim, &h), &h).unwrap();
        let step = r.x_next.sub(&x).unwrap();
        let cos = -step.dot(&g).unwrap() / (step.norm2() * g.norm2());
        prop_assert!(cos > 1.0 - 1e-12, "cos = {cos}");
    }

    #[test]
    fn second_moments_stay_nonnegative_and_amsgrad_max_grows(
        grads in prop::collection::vec(vec_strategy(3, 100.0).prop_map(|mut v| { v.resize(3, 0.0); v }), 1..40),
    ) {
        let h = HyperParams::with_eta(0.01);
        let mut x = ParamVector::zeros(3);
        let mut s = OptimizerState::for_params(3, &h);
        let mut prev_max = ParamVector::zeros(3);
        for g in grads {
            let g = ParamVector::new(g).unwrap();
            let r = amsgrad_step(&x, &g, &s, &h).unwrap();
            prop_assert!(r.state.v.iter().all(|&v| v >= 0.0));
            let cur = r.state.v_hat_max.clone();
            prop_assert!(cur.iter().zip(prev_max.iter()).all(|(c, p)| c >= p));
            prev_max = cur;
            x = r.x_next;
            s = r.state;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn csv_floats_round_trip_bit_exactly(seed in any::<u64>(), sigma in 0.0f64..0.5) {
        let cfg = ExperimentConfig {
            optimizer: OptimizerKind::AdaFix,
            noise_sigma: sigma,
            seed,
            steps: 50,
            ..ExperimentConfig::default()
        };
        let record = run_experiment(&cfg).unwrap();
        let table = parse_csv(record.to_csv_string().unwrap().as_bytes()).unwrap();
        let fcol = table.column("f").unwrap();
        let xcol = table.column("x0").unwrap();
        prop_assert_eq!(table.rows.len(), record.rows.len());
        for (row, cells) in record.rows.iter().zip(&table.rows) {
            prop_assert_eq!(cells[fcol].unwrap().to_bits(), row.f.to_bits());
            prop_assert_eq!(cells[xcol].unwrap().to_bits(), row.x[0].to_bits());
        }
    }
}
