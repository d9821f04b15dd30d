//! Large-trader shift functions.
//!
//! The jump displacement `ξ(τ, x, z)` solves `e^ξ = e^z + ρ(ψ(τ, x+ξ) - ψ(τ, x))`
//! and in price variables `H(τ, S, z)` solves
//! `H = ρS(φ(t, S+H) - φ(t, S)) + S(e^z - 1)`, with `S e^ξ = S + H`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bessel::RatioProbe;
use crate::error::{PideError, Result};
use crate::levy::LevyMeasure;

/// Floor on the exponential argument of the fixed-point map.
pub const LOG_FLOOR: f64 = 1e-12;

/// Consecutive non-decreasing residuals tolerated before falling back to
/// bisection.
const STALL_LIMIT: usize = 5;

type StrategyFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum StrategyKind {
    Zero,
    Linear {
        slope: f64,
        intercept: f64,
    },
    Sin {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// `amplitude · tanh((x - centre) / width)`.
    TanhRamp {
        amplitude: f64,
        centre: f64,
        width: f64,
    },
    /// Piecewise-linear interpolation of `(x, ψ)` nodes, constant outside.
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    /// `ψ(τ, x)` from an arbitrary callable.
    Custom(StrategyFn),
}

impl fmt::Debug for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Linear { slope, intercept } => write!(f, "Linear({slope}, {intercept})"),
            Self::Sin {
                amplitude,
                frequency,
                phase,
            } => write!(f, "Sin({amplitude}, {frequency}, {phase})"),
            Self::TanhRamp {
                amplitude,
                centre,
                width,
            } => write!(f, "TanhRamp({amplitude}, {centre}, {width})"),
            Self::Table { xs, .. } => write!(f, "Table({} nodes)", xs.len()),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Transformed trading strategy `ψ(τ, x)` with Hölder data estimated from a
/// deterministic point cloud.
#[derive(Debug, Clone)]
pub struct TradingStrategy {
    kind: StrategyKind,
    holder_exponent: f64,
    holder_constant: f64,
}

/// Sample points used to estimate Hölder constants.
pub fn holder_cloud() -> Vec<f64> {
    (0..=240).map(|i| -12.0 + 0.1 * i as f64).collect()
}

/// `max |f(x₁) - f(x₂)| / |x₁ - x₂|^ω` over all pairs of `points`.
pub fn estimate_holder_constant(f: impl Fn(f64) -> f64, omega: f64, points: &[f64]) -> f64 {
    let vals: Vec<f64> = points.iter().map(|&x| f(x)).collect();
    let mut best: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = (points[i] - points[j]).abs();
            if d > 0.0 {
                best = best.max((vals[i] - vals[j]).abs() / d.powf(omega));
            }
        }
    }
    best
}

impl TradingStrategy {
    fn build(kind: StrategyKind, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega <= 1.0) {
            return Err(PideError::domain(format!(
                "Hölder exponent must lie in (0, 1], got {omega}"
            )));
        }
        let mut s = Self {
            kind,
            holder_exponent: omega,
            holder_constant: 0.0,
        };
        let cloud = holder_cloud();
        s.holder_constant = estimate_holder_constant(|x| s.psi(0.0, x), omega, &cloud);
        Ok(s)
    }

    pub fn zero() -> Self {
        Self {
            kind: StrategyKind::Zero,
            holder_exponent: 1.0,
            holder_constant: 0.0,
        }
    }

    pub fn linear(slope: f64, intercept: f64) -> Result<Self> {
        Self::build(StrategyKind::Linear { slope, intercept }, 1.0)
    }

    pub fn sin(amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        Self::build(
            StrategyKind::Sin {
                amplitude,
                frequency,
                phase,
            },
            1.0,
        )
    }

    pub fn tanh_ramp(amplitude: f64, centre: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(PideError::domain("tanh ramp width must be positive"));
        }
        Self::build(
            StrategyKind::TanhRamp {
                amplitude,
                centre,
                width,
            },
            1.0,
        )
    }

    pub fn table(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(PideError::domain(
                "strategy table needs at least two (x, psi) pairs of equal length",
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PideError::domain(
                "strategy table abscissae must be strictly increasing",
            ));
        }
        Self::build(StrategyKind::Table { xs, ys }, 1.0)
    }

    pub fn custom<F>(f: F, holder_exponent: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(StrategyKind::Custom(Arc::new(f)), holder_exponent)
    }

    pub fn kind(&self) -> &StrategyKind {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, StrategyKind::Zero)
    }

    /// Built-in strategies do not depend on `τ`.
    pub fn is_time_independent(&self) -> bool {
        !matches!(self.kind, StrategyKind::Custom(_))
    }

    pub fn holder_exponent(&self) -> f64 {
        self.holder_exponent
    }

    pub fn holder_constant(&self) -> f64 {
        self.holder_constant
    }

    pub fn psi(&self, tau: f64, x: f64) -> f64 {
        match &self.kind {
            StrategyKind::Zero => 0.0,
            StrategyKind::Linear { slope, intercept } => slope * x + intercept,
            StrategyKind::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * x + phase).sin(),
            StrategyKind::TanhRamp {
                amplitude,
                centre,
                width,
            } => amplitude * ((x - centre) / width).tanh(),
            StrategyKind::Table { xs, ys } => table_eval(xs, ys, x),
            StrategyKind::Custom(f) => f(tau, x),
        }
    }

    /// `∂ₓψ`, analytic for built-ins and a central difference otherwise.
    pub fn dpsi_dx(&self, tau: f64, x: f64) -> f64 {
        match &self.kind {
            StrategyKind::Zero => 0.0,
            StrategyKind::Linear { slope, .. } => *slope,
            StrategyKind::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * frequency * (frequency * x + phase).cos(),
            StrategyKind::TanhRamp {
                amplitude,
                centre,
                width,
            } => {
                let c = ((x - centre) / width).cosh();
                amplitude / (width * c * c)
            }
            StrategyKind::Table { .. } | StrategyKind::Custom(_) => {
                let h = 1e-5 * (1.0 + x.abs());
                (self.psi(tau, x + h) - self.psi(tau, x - h)) / (2.0 * h)
            }
        }
    }

    /// Checks the sampled Hölder ratio against `L·(1 + margin)` on `points`.
    pub fn verify_holder(&self, tau: f64, points: &[f64], margin: f64) -> bool {
        let l = estimate_holder_constant(|x| self.psi(tau, x), self.holder_exponent, points);
        l <= self.holder_constant * (1.0 + margin) + 1e-15
    }
}

fn table_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftMode {
    FixedPoint,
    FirstOrder,
}

#[derive(Debug, Clone)]
pub struct ShiftModel {
    pub strategy: TradingStrategy,
    pub rho: f64,
    pub mode: ShiftMode,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

/// How a fixed-point solve finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Initial,
    Iteration,
    Bisection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiSolve {
    pub xi: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub method: SolveMethod,
}

impl ShiftModel {
    pub fn new(strategy: TradingStrategy, rho: f64, mode: ShiftMode) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(PideError::domain(format!(
                "impact parameter must be nonnegative, got {rho}"
            )));
        }
        Ok(Self {
            strategy,
            rho,
            mode,
            fp_tol: 1e-13,
            fp_max_iter: 200,
        })
    }

    /// `ρ = 0`: the shift is the jump itself.
    pub fn identity() -> Self {
        Self {
            strategy: TradingStrategy::zero(),
            rho: 0.0,
            mode: ShiftMode::FixedPoint,
            fp_tol: 1e-13,
            fp_max_iter: 200,
        }
    }

    pub fn with_tolerance(mut self, fp_tol: f64, fp_max_iter: usize) -> Self {
        self.fp_tol = fp_tol;
        self.fp_max_iter = fp_max_iter;
        self
    }

    /// True when `ξ ≡ z` holds exactly for every `(τ, x, z)`.
    pub fn is_identity(&self) -> bool {
        self.rho == 0.0 || self.strategy.is_zero()
    }

    /// `ξ` in the configured mode.
    pub fn resolve(&self, tau: f64, x: f64, z: f64) -> Result<f64> {
        match self.mode {
            ShiftMode::FixedPoint => resolve_xi_fixed_point(self, tau, x, z),
            ShiftMode::FirstOrder => Ok(resolve_xi_first_order(self, tau, x, z)),
        }
    }

    /// `e^ξ - e^z - ρ(ψ(x+ξ) - ψ(x))`.
    pub fn residual(&self, tau: f64, x: f64, z: f64, xi: f64) -> f64 {
        let s = &self.strategy;
        xi.exp() - z.exp() - self.rho * (s.psi(tau, x + xi) - s.psi(tau, x))
    }
}

/// Fixed-point solve of the shift equation; see [`resolve_xi_detailed`].
pub fn resolve_xi_fixed_point(model: &ShiftModel, tau: f64, x: f64, z: f64) -> Result<f64> {
    resolve_xi_detailed(model, tau, x, z).map(|s| s.xi)
}

/// Iterates `ξ_{k+1} = ln(max(e^z + ρ(ψ(x+ξ_k) - ψ(x)), floor))` from
/// `ξ₀ = z`, falling back to bisection when the residual stalls or the
/// iteration budget runs out.
pub fn resolve_xi_detailed(model: &ShiftModel, tau: f64, x: f64, z: f64) -> Result<XiSolve> {
    let s = &model.strategy;
    let ez = z.exp();
    let psi_x = s.psi(tau, x);
    let res = |xi: f64| xi.exp() - ez - model.rho * (s.psi(tau, x + xi) - psi_x);
    let mut xi = z;
    let mut r = res(xi).abs();
    let mut residuals = vec![r];
    if r < model.fp_tol {
        return Ok(XiSolve {
            xi,
            iterations: 0,
            residuals,
            method: SolveMethod::Initial,
        });
    }
    let mut stalls = 0;
    let mut best = (xi, r);
    for k in 1..=model.fp_max_iter {
        let arg = ez + model.rho * (s.psi(tau, x + xi) - psi_x);
        if !(arg > LOG_FLOOR) {
            return Err(PideError::NoSolution {
                reason: format!("exponential argument {arg:e} fell below the floor at (x, z) = ({x}, {z})"),
                residual: r,
            });
        }
        xi = arg.ln();
        let rn = res(xi).abs();
        residuals.push(rn);
        if rn < model.fp_tol {
            return Ok(XiSolve {
                xi,
                iterations: k,
                residuals,
                method: SolveMethod::Iteration,
            });
        }
        if rn >= r {
            stalls += 1;
        } else {
            stalls = 0;
        }
        if rn < best.1 {
            best = (xi, rn);
        }
        r = rn;
        if stalls >= STALL_LIMIT {
            return bisect_fallback(model, &res, best.0, residuals);
        }
    }
    // Slow convergence (map slope near one) ends up here as well.
    bisect_fallback(model, &res, best.0, residuals).map_err(|_| PideError::ToleranceNotMet {
        estimate: best.0,
        error: best.1,
        requested: model.fp_tol,
    })
}

fn bisect_fallback(model: &ShiftModel, res: &dyn Fn(f64) -> f64, centre: f64, residuals: Vec<f64>) -> Result<XiSolve> {
    let last = *residuals.last().unwrap_or(&f64::NAN);
    let Some((mut a, mut b)) = bracket(res, centre, 1.0, 64) else {
        return Err(PideError::NoSolution {
            reason: "fixed-point iteration is not contractive and no bracketing interval was found".into(),
            residual: last,
        });
    };
    let mut fa = res(a);
    let mut iterations = 0;
    while iterations < 200 {
        let m = 0.5 * (a + b);
        let fm = res(m);
        iterations += 1;
        if fm.abs() < model.fp_tol || m == a || m == b {
            let mut residuals = residuals;
            residuals.push(fm.abs());
            return Ok(XiSolve {
                xi: m,
                iterations,
                residuals,
                method: SolveMethod::Bisection,
            });
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Err(PideError::ToleranceNotMet {
        estimate: 0.5 * (a + b),
        error: res(0.5 * (a + b)).abs(),
        requested: model.fp_tol,
    })
}

/// Sign-change bracket of `res` nearest to `centre` within `±width`.
fn bracket(res: &dyn Fn(f64) -> f64, centre: f64, width: f64, cells: usize) -> Option<(f64, f64)> {
    let h = width / cells as f64;
    let f0 = res(centre);
    for k in 1..=cells {
        for sign in [1.0, -1.0] {
            let a = centre + sign * (k - 1) as f64 * h;
            let b = centre + sign * k as f64 * h;
            let fa = if k == 1 { f0 } else { res(a) };
            let fb = res(b);
            if (fa <= 0.0) != (fb <= 0.0) {
                return Some(if a < b { (a, b) } else { (b, a) });
            }
        }
    }
    None
}

/// `ξ ≈ z + ρ e^{-z}(ψ(τ, x+z) - ψ(τ, x))`.
pub fn resolve_xi_first_order(model: &ShiftModel, tau: f64, x: f64, z: f64) -> f64 {
    if model.rho == 0.0 {
        return z;
    }
    let s = &model.strategy;
    z + model.rho * (-z).exp() * (s.psi(tau, x + z) - s.psi(tau, x))
}

/// Every root of the shift equation in `[z - span, z + span]` found by a
/// sign-change scan on `cells` sub-intervals followed by bisection. More
/// than one root signals non-uniqueness.
pub fn scan_xi_roots(model: &ShiftModel, tau: f64, x: f64, z: f64, span: f64, cells: usize) -> Vec<f64> {
    let res = |xi: f64| model.residual(tau, x, z, xi);
    let h = 2.0 * span / cells as f64;
    let mut roots = Vec::new();
    let mut a = z - span;
    let mut fa = res(a);
    for k in 1..=cells {
        let b = z - span + k as f64 * h;
        let fb = res(b);
        if fa == 0.0 {
            roots.push(a);
        } else if (fa < 0.0) != (fb < 0.0) && fb != 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..100 {
                let m = 0.5 * (lo + hi);
                let fm = res(m);
                if (fm < 0.0) == (flo < 0.0) {
                    lo = m;
                    flo = fm;
                } else {
                    hi = m;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Solves `H = ρS(φ(S+H) - φ(S)) + S(e^z - 1)` with `φ(S) = ψ(τ, ln(S/K))`
/// by fixed-point iteration from `H₀ = S(e^z - 1)`.
#[allow(non_snake_case)]
pub fn resolve_H(model: &ShiftModel, tau: f64, s: f64, z: f64, strike: f64) -> Result<f64> {
    if !(s > 0.0 && strike > 0.0) {
        return Err(PideError::domain("spot and strike must be positive"));
    }
    let st = &model.strategy;
    let phi = |price: f64| st.psi(tau, (price / strike).ln());
    let base = s * z.exp_m1();
    let phi_s = phi(s);
    let res = |h: f64| h - model.rho * s * (phi(s + h) - phi_s) - base;
    let mut h = base;
    let mut r = res(h).abs();
    let tol = model.fp_tol * s.max(1.0);
    if r < tol {
        return Ok(h);
    }
    let mut stalls = 0;
    for _ in 0..model.fp_max_iter {
        if !(s + h > LOG_FLOOR * s) {
            return Err(PideError::NoSolution {
                reason: format!("shifted price S + H = {} is not positive", s + h),
                residual: r,
            });
        }
        h = model.rho * s * (phi(s + h) - phi_s) + base;
        let rn = res(h).abs();
        if rn < tol {
            return Ok(h);
        }
        stalls = if rn >= r { stalls + 1 } else { 0 };
        r = rn;
        if stalls >= STALL_LIMIT {
            return Err(PideError::NoSolution {
                reason: "H iteration is not contractive".into(),
                residual: r,
            });
        }
    }
    Err(PideError::ToleranceNotMet {
        estimate: h,
        error: r,
        requested: tol,
    })
}

/// `e^ξ - 1 - ξ` without cancellation for small `ξ`.
pub fn exp_compensator(xi: f64) -> f64 {
    if xi.abs() < 1e-3 {
        // Taylor series to ξ⁵.
        let x2 = xi * xi;
        x2 * (0.5 + xi * (1.0 / 6.0 + xi * (1.0 / 24.0 + xi / 120.0)))
    } else {
        xi.exp_m1() - xi
    }
}

/// `δ(τ, x) = ∫ (e^ξ - 1 - ξ) ν(dz)` by adaptive quadrature, resolving `ξ`
/// at every node.
pub fn compute_delta(model: &ShiftModel, measure: &LevyMeasure, tau: f64, x: f64, tol: f64) -> Result<f64> {
    if measure.dim() != 1 {
        return Err(PideError::Unsupported("the shift drift is one-dimensional".into()));
    }
    if measure.is_null() {
        return Ok(0.0);
    }
    if !measure.has_exponential_moment() {
        return Err(PideError::domain(
            "∫(e^ξ - 1 - ξ) ν(dz) diverges: need μ > 0, or μ = 0 with D > 1 (η₊ > 1 for Kou)",
        ));
    }
    let radius = measure.tail_radius(true, 1e-13);
    if model.is_identity() {
        return measure.integrate_1d(exp_compensator, 2.0, radius, tol);
    }
    let failure = std::sync::Mutex::new(None);
    let v = measure.integrate_1d(
        |z| match model.resolve(tau, x, z) {
            Ok(xi) => exp_compensator(xi),
            Err(e) => {
                failure.lock().expect("poisoned").get_or_insert(e);
                0.0
            }
        },
        2.0,
        radius,
        tol,
    )?;
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(v)
}

/// `δ(τ, ·)` at many abscissae, in parallel.
pub fn delta_profile(model: &ShiftModel, measure: &LevyMeasure, tau: f64, xs: &[f64], tol: f64) -> Result<Vec<f64>> {
    if model.is_identity() {
        let d = compute_delta(model, measure, tau, 0.0, tol)?;
        return Ok(vec![d; xs.len()]);
    }
    xs.par_iter()
        .map(|&x| compute_delta(model, measure, tau, x, tol))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub probe: RatioProbe,
    /// Largest ratio at `|z| > 1` does not exceed the largest at `|z| ≤ 1`.
    pub large_z_below_small: bool,
}

/// Ratios `max_x |ξ(τ,x,z)| / (|z|^ω (1 + e^{|z|}))` for each `z` sample.
pub fn growth_bound_probe(model: &ShiftModel, tau: f64, z_samples: &[f64], x_samples: &[f64]) -> Result<GrowthReport> {
    let omega = model.strategy.holder_exponent();
    let mut params = Vec::new();
    let mut ratios = Vec::new();
    for &z in z_samples {
        if z == 0.0 {
            continue;
        }
        let mut worst: f64 = 0.0;
        for &x in x_samples {
            worst = worst.max(model.resolve(tau, x, z)?.abs());
        }
        params.push(z);
        ratios.push(worst / (z.abs().powf(omega) * (1.0 + z.abs().exp())));
    }
    let small = params
        .iter()
        .zip(&ratios)
        .filter(|(z, _)| z.abs() <= 1.0)
        .fold(0.0_f64, |m, (_, r)| m.max(*r));
    let large = params
        .iter()
        .zip(&ratios)
        .filter(|(z, _)| z.abs() > 1.0)
        .fold(0.0_f64, |m, (_, r)| m.max(*r));
    Ok(GrowthReport {
        probe: RatioProbe::from_ratios(params, ratios),
        large_z_below_small: large <= small,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_model(rho: f64) -> ShiftModel {
        ShiftModel::new(TradingStrategy::sin(1.0, 1.0, 0.0).unwrap(), rho, ShiftMode::FixedPoint).unwrap()
    }

    #[test]
    fn zero_rho_returns_z_exactly() {
        let m = ShiftModel::new(TradingStrategy::sin(1.0, 1.0, 0.0).unwrap(), 0.0, ShiftMode::FixedPoint).unwrap();
        for &z in &[-2.3, -1e-9, 0.0, 0.4, 3.0] {
            let s = resolve_xi_detailed(&m, 0.0, 0.7, z).unwrap();
            assert_eq!(s.xi, z);
            assert!(s.iterations <= 1);
            assert_eq!(resolve_xi_first_order(&m, 0.0, 0.7, z), z);
        }
    }

    #[test]
    fn constant_strategy_returns_z() {
        let m = ShiftModel::new(TradingStrategy::linear(0.0, 3.0).unwrap(), 0.5, ShiftMode::FixedPoint).unwrap();
        assert_eq!(m.resolve(0.0, 1.0, 0.25).unwrap(), 0.25);
    }

    #[test]
    fn fixed_point_matches_bisection_oracle() {
        let m = sin_model(0.01);
        let (x, z) = (0.0, 0.1);
        let xi = resolve_xi_fixed_point(&m, 0.0, x, z).unwrap();
        let f = |v: f64| v.exp() - z.exp() - 0.01 * ((x + v).sin() - x.sin());
        let (mut a, mut b) = (z - 1.0, z + 1.0);
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if (f(c) < 0.0) == (f(a) < 0.0) {
                a = c
            } else {
                b = c
            }
        }
        assert!((xi - 0.5 * (a + b)).abs() < 1e-12);
        let s = resolve_xi_detailed(&m, 0.0, x, z).unwrap();
        assert!(s.residuals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn first_order_error_quadratic_in_rho() {
        let diff = |rho: f64| {
            let m = sin_model(rho);
            (resolve_xi_fixed_point(&m, 0.0, 0.3, 0.2).unwrap() - resolve_xi_first_order(&m, 0.0, 0.3, 0.2)).abs()
        };
        let f = diff(0.02) / diff(0.01);
        assert!((3.0..=5.0).contains(&f), "{f}");
    }

    #[test]
    fn h_consistent_with_xi() {
        let strat = TradingStrategy::custom(|_t, x| crate::special::norm_cdf(x / 0.3 + 0.15), 1.0).unwrap();
        let m = ShiftModel::new(strat, 0.01, ShiftMode::FixedPoint).unwrap();
        let (s, k, z) = (100.0, 90.0, 0.05);
        let h = resolve_H(&m, 0.0, s, z, k).unwrap();
        let xi = resolve_xi_fixed_point(&m, 0.0, (s / k).ln(), z).unwrap();
        assert!((h - s * xi.exp_m1()).abs() < 10.0 * m.fp_tol * s);
        let zero = ShiftModel::identity();
        assert_eq!(resolve_H(&zero, 0.0, s, z, k).unwrap(), s * z.exp_m1());
        assert_eq!(resolve_H(&zero, 0.0, s, 0.0, k).unwrap(), 0.0);
    }

    #[test]
    fn delta_closed_forms() {
        let id = ShiftModel::identity();
        let mert = LevyMeasure::merton(1.0, &[0.0], 0.2).unwrap();
        let d = compute_delta(&id, &mert, 0.0, 0.0, 1e-10).unwrap();
        assert!((d - (0.02f64.exp() - 1.0)).abs() < 1e-10);
        let kou = LevyMeasure::kou(1.0, 0.5, 3.0, 3.0).unwrap();
        let d = compute_delta(&id, &kou, 0.0, 0.0, 1e-10).unwrap();
        assert!((d - 0.125).abs() < 1e-9, "{d}");
        assert_eq!(
            compute_delta(&id, &LevyMeasure::zero(1).unwrap(), 0.0, 0.0, 1e-8).unwrap(),
            0.0
        );
        let heavy = LevyMeasure::exponential_tail(1.0, 0.5, 0.5, 1).unwrap();
        assert!(matches!(
            compute_delta(&id, &heavy, 0.0, 0.0, 1e-8),
            Err(PideError::ParameterDomain(_))
        ));
    }

    #[test]
    fn root_scan_and_stall() {
        let m = sin_model(0.01);
        let roots = scan_xi_roots(&m, 0.0, 0.0, 0.1, 1.0, 200);
        assert_eq!(roots.len(), 1);
        // Steep strategy: the iteration map is expanding.
        let steep = ShiftModel::new(
            TradingStrategy::sin(1.0, 40.0, 0.0).unwrap(),
            0.2,
            ShiftMode::FixedPoint,
        )
        .unwrap();
        let roots = scan_xi_roots(&steep, 0.0, 0.0, 0.1, 1.0, 4000);
        assert!(roots.len() > 1);
        if let Ok(s) = resolve_xi_detailed(&steep, 0.0, 0.0, 0.1) {
            assert!(steep.residual(0.0, 0.0, 0.1, s.xi).abs() < 1e-10);
        }
    }

    #[test]
    fn holder_estimates() {
        let s = TradingStrategy::sin(2.0, 0.5, 0.0).unwrap();
        assert!((s.holder_constant() - 1.0).abs() < 1e-3);
        assert!(s.verify_holder(0.0, &[-1.0, -0.3, 0.2, 0.9, 4.0], 0.1));
        let t = TradingStrategy::table(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.0]).unwrap();
        assert!((t.holder_constant() - 2.0).abs() < 1e-12);
        assert_eq!(t.psi(0.0, 0.5), 1.0);
    }

    #[test]
    fn growth_probe_passes_for_lipschitz() {
        // Small ρ keeps e^z + ρΔψ positive down to z = -5.
        let m = sin_model(0.002);
        let zs: Vec<f64> = (0..=20)
            .map(|i| 10f64.powf(-2.0 + 0.1 * i as f64))
            .chain([5.0, -5.0])
            .collect();
        let xs: Vec<f64> = (0..21).map(|i| -2.0 + 0.2 * i as f64).collect();
        let r = growth_bound_probe(&m, 0.0, &zs, &xs).unwrap();
        assert!(r.probe.pass && r.large_z_below_small);
    }
}
