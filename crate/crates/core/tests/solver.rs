use levy_pide::grid::{Axis, GridField};
use levy_pide::levy::{LevyMeasure, Measure2d};
use levy_pide::operator::compensated_symbol;
use levy_pide::pricing::{bs_closed_form, merton_series_oracle, reference_market, MarketSpec};
use levy_pide::shift::{ShiftMode, ShiftModel, TradingStrategy};
use levy_pide::solver::{
    heat_semigroup, solve, CauchyProblem, OptionType, ProblemMeasure, Scheme, SchemeConfig, Solver,
};
use levy_pide::spectral::Spectral;
use num_complex::Complex64;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gaussian(s2: f64) -> impl Fn(f64) -> f64 {
    move |x| (-x * x / (2.0 * s2)).exp()
}

/// `e^{τ(-σ²k²/2 + ψ(k))}` applied on the periodic core, with `ψ` from
/// quadrature of the compensated symbol.
fn exact_jump_diffusion(ax: Axis, u0: &[f64], sigma: f64, measure: &LevyMeasure, tau: f64) -> Vec<f64> {
    let sp = Spectral::new(&[ax]).unwrap();
    sp.apply_multiplier(u0, |k| {
        let psi = if measure.is_null() {
            Complex64::new(0.0, 0.0)
        } else {
            compensated_symbol(measure, k[0], 1e-13).unwrap()
        };
        (tau * (Complex64::new(-0.5 * sigma * sigma * k[0] * k[0], 0.0) + psi)).exp()
    })
    .unwrap()
}

fn merton() -> LevyMeasure {
    LevyMeasure::merton(0.5, &[-0.1], 0.2).unwrap()
}

fn pricing(market: &MarketSpec, option_type: OptionType, measure: LevyMeasure, shift: ShiftModel) -> CauchyProblem {
    let ax = Axis::centred(market.log_moneyness(), 3.5, 1024).unwrap();
    CauchyProblem::pricing(
        ax,
        market.strike,
        market.rate,
        market.sigma,
        market.maturity,
        option_type,
        measure,
        shift,
    )
    .unwrap()
}

fn market(option_type: OptionType) -> MarketSpec {
    let m = reference_market();
    MarketSpec::new(m.spot, m.strike, m.maturity, m.rate, m.sigma, option_type).unwrap()
}

#[test]
fn mild_scheme_is_exact_for_heat() {
    let ax = Axis::centred(0.0, 8.0, 256).unwrap();
    let (sigma, t, s2) = (0.4, 0.5, 0.25);
    let u0 = GridField::from_fn_1d(ax, 0, gaussian(s2)).unwrap();
    let p = CauchyProblem::smooth(u0, sigma, ProblemMeasure::Line(LevyMeasure::zero(1).unwrap()), t).unwrap();
    let out = solve(&p, &SchemeConfig::new(Scheme::MildEtd2, t / 7.0).unwrap()).unwrap();
    let v = s2 + sigma * sigma * t;
    let exact: Vec<f64> = (0..ax.len)
        .map(|i| (s2 / v).sqrt() * gaussian(v)(ax.coord(i as isize)))
        .collect();
    assert!(max_diff(&out.terminal.core(), &exact) < 1e-12);
}

#[test]
fn heat_semigroup_composes() {
    let ax = Axis::centred(0.0, 8.0, 256).unwrap();
    let u = GridField::from_fn_1d(ax, 16, gaussian(0.3)).unwrap();
    let a = heat_semigroup(&heat_semigroup(&u, 0.3, 0.2).unwrap(), 0.3, 0.3).unwrap();
    let b = heat_semigroup(&u, 0.3, 0.5).unwrap();
    assert!(max_diff(a.values(), b.values()) < 1e-13);
}

#[test]
fn schemes_match_spectral_reference_with_jumps() {
    let ax = Axis::centred(0.0, 8.0, 512).unwrap();
    let (sigma, t) = (0.3, 0.5);
    let m = merton();
    let u0 = GridField::from_fn_1d(ax, 0, gaussian(0.2)).unwrap();
    let exact = exact_jump_diffusion(ax, &u0.core(), sigma, &m, t);
    for scheme in [Scheme::ImexBdf2, Scheme::MildEtd2] {
        let mut errs = Vec::new();
        for steps in [50.0, 100.0] {
            let p = CauchyProblem::smooth(u0.clone(), sigma, ProblemMeasure::Line(m.clone()), t).unwrap();
            let out = solve(&p, &SchemeConfig::new(scheme, t / steps).unwrap()).unwrap();
            errs.push(max_diff(&out.terminal.core(), &exact));
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(errs[1] < 1e-4, "{scheme:?}: {errs:?}");
        assert!(order > 1.7 && order < 2.4, "{scheme:?}: order {order}");
    }
}

#[test]
fn imex_local_error_is_third_order() {
    let ax = Axis::centred(0.0, 8.0, 512).unwrap();
    let (sigma, t0) = (0.3, 0.2);
    let m = merton();
    let u0 = GridField::from_fn_1d(ax, 0, gaussian(0.2)).unwrap();
    let p = CauchyProblem::smooth(u0.clone(), sigma, ProblemMeasure::Line(m.clone()), 1.0).unwrap();
    let at = |tau: f64| GridField::from_core(&[ax], 0, &exact_jump_diffusion(ax, &u0.core(), sigma, &m, tau)).unwrap();
    let mut errs = Vec::new();
    for dt in [0.04, 0.02] {
        let solver = Solver::new(&p, &SchemeConfig::new(Scheme::ImexBdf2, dt).unwrap()).unwrap();
        let state = solver.state_with_history(t0, &at(t0), &at(t0 - dt), dt).unwrap();
        let next = solver.step_imex(&state, dt).unwrap();
        errs.push(max_diff(&next.u.core(), &at(t0 + dt).core()));
    }
    let order = (errs[0] / errs[1]).log2();
    assert!(order > 2.6 && order < 3.5, "local order {order} from {errs:?}");
}

#[test]
fn zero_data_stays_zero() {
    let ax = Axis::centred(0.0, 4.0, 128).unwrap();
    let u0 = GridField::zeros(&[ax], 0).unwrap();
    let p = CauchyProblem::smooth(u0, 0.2, ProblemMeasure::Line(merton()), 1.0).unwrap();
    for scheme in [Scheme::ImexBdf2, Scheme::MildEtd2] {
        let out = solve(&p, &SchemeConfig::new(scheme, 0.05).unwrap()).unwrap();
        assert!(out.terminal.core().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn no_jumps_reproduces_black_scholes() {
    for t in [OptionType::Call, OptionType::Put] {
        let mk = market(t);
        let p = pricing(&mk, t, LevyMeasure::zero(1).unwrap(), ShiftModel::identity());
        let out = solve(&p, &SchemeConfig::new(Scheme::ImexBdf2, mk.maturity / 50.0).unwrap()).unwrap();
        let v = out.price_at(mk.rate, mk.maturity, mk.log_moneyness()).unwrap();
        let bs = bs_closed_form(&mk).unwrap();
        assert!((v - bs).abs() < 1e-8 * bs, "{v} vs {bs}");
    }
}

#[test]
fn put_call_parity_with_jumps() {
    let mut prices = Vec::new();
    for t in [OptionType::Call, OptionType::Put] {
        let mk = market(t);
        let p = pricing(&mk, t, merton(), ShiftModel::identity());
        let out = solve(&p, &SchemeConfig::new(Scheme::ImexBdf2, mk.maturity / 200.0).unwrap()).unwrap();
        prices.push(out.price_at(mk.rate, mk.maturity, mk.log_moneyness()).unwrap());
    }
    let mk = reference_market();
    let forward = mk.spot - mk.strike * (-mk.rate * mk.maturity).exp();
    assert!((prices[0] - prices[1] - forward).abs() < 1e-4, "{prices:?}");
    let put = merton_series_oracle(&market(OptionType::Put), 0.5, -0.1, 0.2, 60).unwrap();
    assert!((prices[1] - put).abs() < 1e-3 * put);
}

#[test]
fn call_field_is_nonnegative() {
    let mk = market(OptionType::Call);
    let p = pricing(&mk, OptionType::Call, merton(), ShiftModel::identity());
    let out = solve(&p, &SchemeConfig::new(Scheme::ImexBdf2, mk.maturity / 100.0).unwrap()).unwrap();
    let u = out.terminal.core();
    let scale = u.iter().cloned().fold(0.0, f64::max);
    assert!(u.iter().all(|&v| v > -1e-8 * scale));
}

#[test]
fn price_is_continuous_in_impact() {
    let mk = market(OptionType::Call);
    let scheme = SchemeConfig::new(Scheme::ImexBdf2, mk.maturity / 50.0).unwrap();
    let price = |rho: f64| {
        let s = ShiftModel::new(TradingStrategy::sin(0.5, 1.0, 0.3).unwrap(), rho, ShiftMode::FixedPoint).unwrap();
        let p = pricing(&mk, OptionType::Call, merton(), s);
        solve(&p, &scheme)
            .unwrap()
            .price_at(mk.rate, mk.maturity, mk.log_moneyness())
            .unwrap()
    };
    let base = price(0.0);
    let d1 = (price(2e-3) - base).abs();
    let d2 = (price(1e-3) - base).abs();
    assert!(d1 < 1e-2 && d2 < d1, "{d1} {d2}");
    let ratio = d1 / d2;
    assert!(ratio > 1.5 && ratio < 2.5, "ratio {ratio}");
}

#[test]
fn duhamel_identity_holds_for_reference_solution() {
    // u(T) = S(T)u₀ + ∫₀ᵀ S(T-s) f(u(s)) ds with S the heat semigroup.
    let ax = Axis::centred(0.0, 8.0, 256).unwrap();
    let (sigma, t) = (0.3, 0.4);
    let m = merton();
    let u0 = GridField::from_fn_1d(ax, 0, gaussian(0.2)).unwrap();
    let lhs = exact_jump_diffusion(ax, &u0.core(), sigma, &m, t);
    let sp = Spectral::new(&[ax]).unwrap();
    let f_of = |v: &[f64]| {
        sp.apply_multiplier(v, |k| compensated_symbol(&m, k[0], 1e-13).unwrap())
            .unwrap()
    };
    let heat = |v: &[f64], s: f64| exact_jump_diffusion(ax, v, sigma, &LevyMeasure::zero(1).unwrap(), s);
    let nodes = 40;
    let mut rhs = heat(&u0.core(), t);
    for j in 0..=nodes {
        let s = t * j as f64 / nodes as f64;
        let w = if j == 0 || j == nodes {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        } * t
            / (3.0 * nodes as f64);
        let us = exact_jump_diffusion(ax, &u0.core(), sigma, &m, s);
        let term = heat(&f_of(&us), t - s);
        for (r, v) in rhs.iter_mut().zip(term) {
            *r += w * v;
        }
    }
    assert!(max_diff(&lhs, &rhs) < 1e-7);
}

#[test]
fn plane_heat_matches_gaussian() {
    let ax = Axis::centred(0.0, 8.0, 64).unwrap();
    let (sigma, t, s2) = (0.5, 0.3, 0.4);
    let u0 = GridField::from_fn_2d(ax, ax, 0, |x, y| gaussian(s2)(x) * gaussian(s2)(y)).unwrap();
    let zero = Measure2d::axis_product(LevyMeasure::zero(1).unwrap(), LevyMeasure::zero(1).unwrap()).unwrap();
    let p = CauchyProblem::smooth(u0, sigma, ProblemMeasure::Plane(zero), t).unwrap();
    let out = solve(&p, &SchemeConfig::new(Scheme::MildEtd2, t / 5.0).unwrap())
        .unwrap()
        .terminal;
    let v = s2 + sigma * sigma * t;
    let g = |x: f64| (s2 / v).sqrt() * gaussian(v)(x);
    let exact: Vec<f64> = (0..64)
        .flat_map(|i| (0..64).map(move |j| (i, j)))
        .map(|(i, j)| g(ax.coord(i)) * g(ax.coord(j)))
        .collect();
    assert!(max_diff(&out.core(), &exact) < 1e-12);
}

#[test]
fn plane_solution_respects_coordinate_swap() {
    let ax = Axis::centred(0.0, 6.0, 64).unwrap();
    let u0 = GridField::from_fn_2d(ax, ax, 16, |x, y| (-(x * x + y * y) - 0.3 * x * y).exp()).unwrap();
    let plane = Measure2d::axis_product(merton(), merton()).unwrap();
    let p = CauchyProblem::smooth(u0, 0.3, ProblemMeasure::Plane(plane), 0.2).unwrap();
    let u = solve(&p, &SchemeConfig::new(Scheme::ImexBdf2, 0.01).unwrap())
        .unwrap()
        .terminal
        .core();
    let n = 64;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((u[i * n + j] - u[j * n + i]).abs());
        }
    }
    assert!(worst < 1e-12, "asymmetry {worst}");
}

#[test]
fn plane_separable_solve_matches_product() {
    let ax = Axis::centred(0.0, 8.0, 64).unwrap();
    let (sigma, t) = (0.3, 0.2);
    let (m1, m2) = (merton(), LevyMeasure::kou(1.0, 0.4, 10.0, 5.0).unwrap());
    let a = gaussian(0.3);
    let b = |y: f64| (-(y - 0.5) * (y - 0.5)).exp();
    let scheme = SchemeConfig::new(Scheme::MildEtd2, t / 100.0).unwrap();
    let u0 = GridField::from_fn_2d(ax, ax, 32, |x, y| a(x) * b(y)).unwrap();
    let plane = Measure2d::axis_product(m1.clone(), m2.clone()).unwrap();
    let u = solve(
        &CauchyProblem::smooth(u0, sigma, ProblemMeasure::Plane(plane), t).unwrap(),
        &scheme,
    )
    .unwrap()
    .terminal
    .core();
    let line = |f: &dyn Fn(f64) -> f64, m: LevyMeasure| {
        let g = GridField::from_fn_1d(ax, 32, f).unwrap();
        solve(
            &CauchyProblem::smooth(g, sigma, ProblemMeasure::Line(m), t).unwrap(),
            &scheme,
        )
        .unwrap()
        .terminal
        .core()
    };
    let (v1, v2) = (line(&a, m1), line(&b, m2));
    let n = 64;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((u[i * n + j] - v1[i] * v2[j]).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}
