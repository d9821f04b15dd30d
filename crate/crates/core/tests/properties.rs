use levy_pide::bessel::kernel_eval;
use levy_pide::grid::{Axis, GridField};
use levy_pide::levy::LevyMeasure;
use levy_pide::operator::{OperatorConfig, OperatorPlan};
use levy_pide::pricing::{bs_closed_form, from_log_moneyness, merton_series_oracle, to_log_moneyness, MarketSpec};
use levy_pide::shift::{resolve_xi_fixed_point, ShiftMode, ShiftModel, TradingStrategy};
use levy_pide::solver::{time_mesh, OptionType};
use proptest::prelude::*;

fn option_type() -> impl Strategy<Value = OptionType> {
    prop_oneof![Just(OptionType::Call), Just(OptionType::Put)]
}

fn market() -> impl Strategy<Value = MarketSpec> {
    (
        50.0..150.0f64,
        50.0..150.0f64,
        0.1..3.0f64,
        0.0..0.1f64,
        0.05..0.6f64,
        option_type(),
    )
        .prop_map(|(s, k, t, r, v, o)| MarketSpec::new(s, k, t, r, v, o).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn log_moneyness_round_trips(s in 1e-3..1e4f64, k in 1e-3..1e4f64) {
        let back = from_log_moneyness(to_log_moneyness(s, k), k);
        prop_assert!((back - s).abs() <= 1e-12 * s);
    }

    #[test]
    fn series_without_jumps_is_black_scholes(m in market(), mean in -0.3..0.3f64, std in 0.01..0.5f64) {
        let series = merton_series_oracle(&m, 0.0, mean, std, 60).unwrap();
        let bs = bs_closed_form(&m).unwrap();
        prop_assert!((series - bs).abs() <= 1e-12 * bs.max(1.0));
    }

    #[test]
    fn series_satisfies_parity(m in market(), lambda in 0.0..2.0f64, mean in -0.3..0.3f64, std in 0.01..0.5f64) {
        let call = MarketSpec::new(m.spot, m.strike, m.maturity, m.rate, m.sigma, OptionType::Call).unwrap();
        let put = MarketSpec { option_type: OptionType::Put, ..call };
        let c = merton_series_oracle(&call, lambda, mean, std, 60).unwrap();
        let p = merton_series_oracle(&put, lambda, mean, std, 60).unwrap();
        let fwd = m.spot - m.strike * (-m.rate * m.maturity).exp();
        prop_assert!((c - p - fwd).abs() < 1e-8 * m.spot);
    }

    #[test]
    fn fixed_point_shift_solves_its_equation(
        x in -2.0..2.0f64, z in -0.8..0.8f64, rho in 0.0..0.05f64, amp in 0.1..1.0f64,
    ) {
        let model = ShiftModel::new(TradingStrategy::sin(amp, 1.0, 0.0).unwrap(), rho, ShiftMode::FixedPoint).unwrap();
        let xi = resolve_xi_fixed_point(&model, 0.0, x, z).unwrap();
        prop_assert!(model.residual(0.0, x, z, xi).abs() < 1e-10);
        if rho == 0.0 {
            prop_assert_eq!(xi.to_bits(), z.to_bits());
        }
    }

    #[test]
    fn bessel_kernel_is_even_and_positive(order in 0.3..2.5f64, x in 0.05..4.0f64) {
        let a = kernel_eval(order, 1, &[x]).unwrap();
        let b = kernel_eval(order, 1, &[-x]).unwrap();
        prop_assert!(a > 0.0 && a == b);
        let far = kernel_eval(order, 1, &[x + 0.5]).unwrap();
        prop_assert!(far < a);
    }

    #[test]
    fn time_mesh_is_increasing(t in 0.05..5.0f64, steps in 2usize..400, graded in any::<bool>()) {
        let mesh = time_mesh(t, t / steps as f64, graded, 0.05).unwrap();
        prop_assert_eq!(mesh[0], 0.0);
        prop_assert_eq!(*mesh.last().unwrap(), t);
        prop_assert!(mesh.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn kou_density_is_nonnegative(p in 0.05..0.95f64, up in 1.5..30.0f64, down in 0.5..30.0f64, z in -3.0..3.0f64) {
        let m = LevyMeasure::kou(1.0, p, up, down).unwrap();
        prop_assert!(m.density_1d(z) >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jump_operator_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -1.0..1.0f64, w in 0.5..3.0f64) {
        let ax = Axis::centred(0.0, 6.0, 256).unwrap();
        let m = LevyMeasure::merton(0.5, &[-0.1], 0.2).unwrap();
        let plan = OperatorPlan::new(&m, &ShiftModel::identity(), ax, &OperatorConfig::default()).unwrap();
        let pad = plan.required_padding();
        let u = GridField::from_fn_1d(ax, pad, |x| (-(x - c) * (x - c)).exp()).unwrap();
        let v = GridField::from_fn_1d(ax, pad, |x| (w * x).sin() * (-0.5 * x * x).exp()).unwrap();
        let uv: Vec<f64> = u.values().iter().zip(v.values()).map(|(p, q)| a * p + b * q).collect();
        let mut s = u.clone();
        s.values_mut().copy_from_slice(&uv);
        let fu = plan.apply_f(&u, &plan.gradients(&u).unwrap()).unwrap().core();
        let fv = plan.apply_f(&v, &plan.gradients(&v).unwrap()).unwrap().core();
        let fs = plan.apply_f(&s, &plan.gradients(&s).unwrap()).unwrap().core();
        let scale = 1.0 + a.abs() + b.abs();
        for i in 0..fs.len() {
            prop_assert!((fs[i] - a * fu[i] - b * fv[i]).abs() < 1e-12 * scale);
        }
    }
}
