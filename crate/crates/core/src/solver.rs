//! Time integration of the transformed Cauchy problems
//!
//! ```text
//! ∂u/∂τ = (σ²/2) Δu + f(u) + g(τ, x, u, ∇u),
//! ```
//!
//! on a periodic core grid. The diffusion (and any constant drift) is a
//! Fourier multiplier `A(k)` treated exactly or implicitly; the jump
//! operator and `g` are explicit. Two schemes are available:
//!
//! * `ImexBdf2`: variable-step BDF2 with extrapolated explicit terms and an
//!   implicit-Euler first step,
//! * `MildEtd2`: second-order exponential time differencing (Cox–Matthews)
//!   of the Duhamel integral.
//!
//! Payoff problems are solved for `U = u - u^BS`, which starts at zero and
//! decays at both ends of the grid; the non-smooth, growing part lives in
//! the closed form.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use crate::bessel::xgamma_norm_with;
use crate::error::{PideError, Result};
use crate::grid::{l2_norm, Axis, GridField};
use crate::levy::{LevyMeasure, Measure2d};
use crate::operator::{GradientMode, OperatorConfig, OperatorPlan};
use crate::shift::ShiftModel;
use crate::special::{norm_cdf, norm_pdf};
use crate::spectral::Spectral;

/// `sup |ρ ∂ₓψ|` must stay below `1 - FEEDBACK_MARGIN` in feedback mode.
pub const FEEDBACK_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionType {
    Call,
    Put,
}

/// Black–Scholes solution in the variables `τ = T - t`, `x = ln(S/K)`,
/// `u = e^{rτ} V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlackScholesClosedForm {
    pub strike: f64,
    pub r: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub option_type: OptionType,
}

impl BlackScholesClosedForm {
    pub fn new(strike: f64, r: f64, sigma: f64, horizon: f64, option_type: OptionType) -> Result<Self> {
        if !(strike > 0.0) || !(sigma > 0.0) || !(horizon > 0.0) || !r.is_finite() {
            return Err(PideError::domain("closed form needs K > 0, σ > 0, T > 0 and finite r"));
        }
        Ok(Self {
            strike,
            r,
            sigma,
            horizon,
            option_type,
        })
    }

    /// `Φ(K e^x)`.
    pub fn payoff(&self, x: f64) -> f64 {
        match self.option_type {
            OptionType::Call => self.strike * x.exp_m1().max(0.0),
            OptionType::Put => self.strike * (-x.exp_m1()).max(0.0),
        }
    }

    fn d12(&self, tau: f64, x: f64) -> (f64, f64) {
        let s = self.sigma * tau.sqrt();
        let d1 = (x + (self.r + 0.5 * self.sigma * self.sigma) * tau) / s;
        (d1, d1 - s)
    }

    pub fn value(&self, tau: f64, x: f64) -> f64 {
        if tau <= 0.0 {
            return self.payoff(x);
        }
        let (d1, d2) = self.d12(tau, x);
        let e = self.strike * (x + self.r * tau).exp();
        match self.option_type {
            OptionType::Call => e * norm_cdf(d1) - self.strike * norm_cdf(d2),
            OptionType::Put => self.strike * norm_cdf(-d2) - e * norm_cdf(-d1),
        }
    }

    pub fn dx(&self, tau: f64, x: f64) -> f64 {
        let e = self.strike * (x + self.r * tau).exp();
        if tau <= 0.0 {
            let step = if x > 0.0 {
                1.0
            } else if x < 0.0 {
                0.0
            } else {
                0.5
            };
            return match self.option_type {
                OptionType::Call => e * step,
                OptionType::Put => -e * (1.0 - step),
            };
        }
        let (d1, _) = self.d12(tau, x);
        match self.option_type {
            OptionType::Call => e * norm_cdf(d1),
            OptionType::Put => -e * norm_cdf(-d1),
        }
    }

    /// Second derivative; at `τ = 0` the Dirac mass at the kink is omitted.
    pub fn dxx(&self, tau: f64, x: f64) -> f64 {
        if tau <= 0.0 {
            return self.dx(0.0, x);
        }
        let (d1, _) = self.d12(tau, x);
        let s = self.sigma * tau.sqrt();
        self.dx(tau, x) + self.strike * (x + self.r * tau).exp() * norm_pdf(d1) / s
    }

    /// `∂u/∂τ` from the equation `u_τ = (σ²/2) u_xx + (r - σ²/2) u_x`.
    pub fn dtau(&self, tau: f64, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        0.5 * s2 * self.dxx(tau, x) + (self.r - 0.5 * s2) * self.dx(tau, x)
    }

    /// `V(0, S₀) = e^{-rT} u(T, ln(S₀/K))`.
    pub fn price(&self, s0: f64) -> f64 {
        (-self.r * self.horizon).exp() * self.value(self.horizon, (s0 / self.strike).ln())
    }
}

/// Sign `s` of `δ` in the drift `(r - σ²/2 + s δ) ∂ₓu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftSign {
    /// `r - σ²/2 - δ`: the jump compensator `∫(e^ξ - 1) ν` is subtracted.
    Minus,
    Plus,
}

impl DriftSign {
    pub fn sign(self) -> f64 {
        match self {
            DriftSign::Minus => -1.0,
            DriftSign::Plus => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionMode {
    Constant,
    /// `σ² / (2 (1 - ρ ∂ₓψ)²)`, frozen at the start of each step
    /// (experimental, IMEX only).
    Feedback,
}

pub type NonlinearFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Nonlinearity {
    /// `(r - σ²/2 + s δ(τ, x)) ∂ₓu` (one-dimensional pricing form).
    Drift,
    Zero,
    /// Constant transport `b · ∇u`.
    Linear(Vec<f64>),
    /// `g(τ, x, u, ∇u)`, evaluated pointwise and explicitly.
    Custom(NonlinearFn),
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Nonlinearity::Drift => write!(f, "Drift"),
            Nonlinearity::Zero => write!(f, "Zero"),
            Nonlinearity::Linear(b) => write!(f, "Linear({b:?})"),
            Nonlinearity::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ProblemMeasure {
    Line(LevyMeasure),
    Plane(Measure2d),
}

impl ProblemMeasure {
    pub fn dim(&self) -> usize {
        match self {
            ProblemMeasure::Line(_) => 1,
            ProblemMeasure::Plane(_) => 2,
        }
    }

    pub fn is_null(&self) -> bool {
        match self {
            ProblemMeasure::Line(m) => m.is_null(),
            ProblemMeasure::Plane(m) => m.is_null(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum InitialData {
    Field(GridField),
    Payoff(OptionType),
}

#[derive(Debug, Clone)]
pub struct CauchyProblem {
    pub axes: Vec<Axis>,
    pub sigma: f64,
    pub r: f64,
    pub strike: f64,
    pub measure: ProblemMeasure,
    pub shift: ShiftModel,
    pub nonlinearity: Nonlinearity,
    pub initial: InitialData,
    pub horizon: f64,
    pub diffusion_mode: DiffusionMode,
    pub drift_sign: DriftSign,
}

impl CauchyProblem {
    /// Option-pricing problem in `x = ln(S/K)` on `axis`.
    #[allow(clippy::too_many_arguments)]
    pub fn pricing(
        axis: Axis,
        strike: f64,
        r: f64,
        sigma: f64,
        horizon: f64,
        option_type: OptionType,
        measure: LevyMeasure,
        shift: ShiftModel,
    ) -> Result<Self> {
        let p = Self {
            axes: vec![axis],
            sigma,
            r,
            strike,
            measure: ProblemMeasure::Line(measure),
            shift,
            nonlinearity: Nonlinearity::Drift,
            initial: InitialData::Payoff(option_type),
            horizon,
            diffusion_mode: DiffusionMode::Constant,
            drift_sign: DriftSign::Minus,
        };
        p.validate()?;
        Ok(p)
    }

    /// `u_τ = (σ²/2) Δu + f(u)` from smooth data on the field's grid.
    pub fn smooth(initial: GridField, sigma: f64, measure: ProblemMeasure, horizon: f64) -> Result<Self> {
        let p = Self {
            axes: initial.axes().to_vec(),
            sigma,
            r: 0.0,
            strike: 1.0,
            measure,
            shift: ShiftModel::identity(),
            nonlinearity: Nonlinearity::Zero,
            initial: InitialData::Field(initial),
            horizon,
            diffusion_mode: DiffusionMode::Constant,
            drift_sign: DriftSign::Minus,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_nonlinearity(mut self, g: Nonlinearity) -> Result<Self> {
        self.nonlinearity = g;
        self.validate()?;
        Ok(self)
    }

    pub fn with_drift_sign(mut self, s: DriftSign) -> Self {
        self.drift_sign = s;
        self
    }

    pub fn with_diffusion_mode(mut self, mode: DiffusionMode) -> Result<Self> {
        self.diffusion_mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn closed_form(&self) -> Option<BlackScholesClosedForm> {
        match self.initial {
            InitialData::Payoff(t) => {
                BlackScholesClosedForm::new(self.strike, self.r, self.sigma, self.horizon, t).ok()
            }
            InitialData::Field(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.horizon > 0.0) {
            return Err(PideError::domain("σ and T must be positive"));
        }
        let n = self.dim();
        if !(1..=2).contains(&n) || self.measure.dim() != n {
            return Err(PideError::domain("grid and measure dimensions must agree (1 or 2)"));
        }
        if n == 2 && !self.shift.is_identity() {
            return Err(PideError::Unsupported(
                "only the identity shift is available in two dimensions".into(),
            ));
        }
        if let InitialData::Field(u) = &self.initial {
            if u.axes() != self.axes.as_slice() {
                return Err(PideError::GridMismatch(
                    "initial field grid differs from the problem grid".into(),
                ));
            }
        }
        match &self.nonlinearity {
            Nonlinearity::Drift if n != 1 => {
                return Err(PideError::Unsupported(
                    "the drift nonlinearity is one-dimensional".into(),
                ));
            }
            Nonlinearity::Linear(b) if b.len() != n => {
                return Err(PideError::domain("transport vector length must equal the dimension"));
            }
            _ => {}
        }
        if matches!(self.initial, InitialData::Payoff(_)) && !matches!(self.nonlinearity, Nonlinearity::Drift) {
            return Err(PideError::Unsupported(
                "payoff problems use the drift nonlinearity".into(),
            ));
        }
        if self.diffusion_mode == DiffusionMode::Feedback {
            if n != 1 || !matches!(self.nonlinearity, Nonlinearity::Drift) {
                return Err(PideError::Unsupported(
                    "feedback diffusion is one-dimensional pricing only".into(),
                ));
            }
            let ax = self.axes[0];
            for i in 0..ax.len {
                let v = self.shift.rho * self.shift.strategy.dpsi_dx(0.0, ax.coord(i as isize));
                if !(v.abs() <= 1.0 - FEEDBACK_MARGIN) {
                    return Err(PideError::domain(format!(
                        "|ρ ∂ₓψ| = {} exceeds 1 - {FEEDBACK_MARGIN} at x = {}",
                        v.abs(),
                        ax.coord(i as isize)
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImexBdf2,
    MildEtd2,
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Spatial order of the gradient used by the explicit terms.
    pub gradient: GradientMode,
    /// Fraction of the horizon covered by the graded startup mesh.
    pub startup_fraction: f64,
    pub graded_startup: bool,
    /// IMEX setup check `dt · L ≤ c` with `L` the explicit-part estimate.
    pub stability_constant: f64,
    /// Order `γ` of the monitored `‖U(τ)‖_{X^γ}`; `None` disables it.
    pub checkpoint_gamma: Option<f64>,
    pub checkpoint_count: usize,
    pub keep_checkpoint_fields: bool,
    /// Largest admissible ratio of the last to the first monitored norm.
    pub xgamma_growth_limit: f64,
    /// Run the other scheme as well and report the terminal discrepancy.
    pub cross_check: bool,
    pub operator: OperatorConfig,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::ImexBdf2,
            dt: 1e-3,
            gradient: GradientMode::Spectral,
            startup_fraction: 0.05,
            graded_startup: true,
            stability_constant: 1.0,
            checkpoint_gamma: None,
            checkpoint_count: 10,
            keep_checkpoint_fields: false,
            xgamma_growth_limit: 1e3,
            cross_check: false,
            operator: OperatorConfig::default(),
        }
    }
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(PideError::domain("dt must be positive"));
        }
        Ok(Self {
            scheme,
            dt,
            ..Self::default()
        })
    }
}

/// `ceil(span / dt)`, ignoring a rounding excess just above an integer.
fn steps_for(span: f64, dt: f64) -> usize {
    let q = span / dt;
    let r = q.round();
    let n = if (q - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        q.ceil()
    };
    n.max(1.0) as usize
}

/// Time nodes on `[0, T]`: `τ_j = aT (j/J)²` on the startup fraction `a`
/// (with `J` chosen so the last graded step is about `dt`), then uniform.
pub fn time_mesh(horizon: f64, dt: f64, graded: bool, fraction: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(PideError::domain("horizon and dt must be positive"));
    }
    if !graded || !(fraction > 0.0 && fraction < 1.0) {
        let n = steps_for(horizon, dt);
        let mut mesh: Vec<f64> = (0..=n).map(|j| horizon * j as f64 / n as f64).collect();
        mesh[n] = horizon;
        return Ok(mesh);
    }
    let t0 = fraction * horizon;
    let jg = steps_for(2.0 * t0, dt).max(2);
    let mut mesh: Vec<f64> = (0..=jg).map(|j| t0 * (j as f64 / jg as f64).powi(2)).collect();
    let nu = steps_for(horizon - t0, dt);
    for j in 1..=nu {
        mesh.push(t0 + (horizon - t0) * j as f64 / nu as f64);
    }
    *mesh.last_mut().unwrap() = horizon;
    Ok(mesh)
}

/// `e^{(σ²/2) Δ dt}` as an exact Fourier multiplier on the padded grid,
/// treated as periodic.
pub fn heat_semigroup(u: &GridField, sigma: f64, dt: f64) -> Result<GridField> {
    if !(dt >= 0.0) {
        return Err(PideError::domain("dt must be non-negative"));
    }
    if dt == 0.0 {
        return Ok(u.clone());
    }
    let axes: Vec<Axis> = (0..u.dim())
        .map(|d| Axis::new(u.full_coord(d, 0), u.axis(d).spacing, u.full_len(d)))
        .collect::<Result<_>>()?;
    let sp = Spectral::new(&axes)?;
    let c = 0.5 * sigma * sigma * dt;
    let out = sp.apply_multiplier(u.values(), |k| {
        let k2: f64 = k.iter().map(|v| v * v).sum();
        Complex64::new((-c * k2).exp(), 0.0)
    })?;
    let mut v = u.clone();
    v.values_mut().copy_from_slice(&out);
    Ok(v)
}

#[derive(Debug, Clone)]
struct History {
    u_prev: Vec<f64>,
    f_prev: Vec<f64>,
    dt_prev: f64,
}

/// Solver state at one time node; `u` is the evolved field (`U` for payoff
/// problems).
#[derive(Debug, Clone)]
pub struct SolverState {
    pub tau: f64,
    pub step: usize,
    pub u: GridField,
    history: Option<History>,
}

impl SolverState {
    pub fn has_history(&self) -> bool {
        self.history.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub tau: f64,
    pub xgamma_norm: Option<f64>,
    pub field: Option<GridField>,
}

#[derive(Debug, Clone)]
pub struct CrossCheck {
    pub other: Scheme,
    /// `‖u_this - u_other‖_{L²}` at `τ = T`.
    pub l2_discrepancy: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    /// `u` at `τ = T` (including `u^BS` for payoff problems).
    pub terminal: GridField,
    /// `U = u - u^BS` at `τ = T` for payoff problems.
    pub shifted: Option<GridField>,
    pub checkpoints: Vec<Checkpoint>,
    pub steps: usize,
    pub mesh_len: usize,
    pub cross_check: Option<CrossCheck>,
}

impl SolveOutput {
    /// `(max over checkpoints, last / first)` of the monitored norm.
    pub fn xgamma_summary(&self) -> Option<(f64, f64)> {
        let norms: Vec<f64> = self.checkpoints.iter().filter_map(|c| c.xgamma_norm).collect();
        let first = *norms.first()?;
        let last = *norms.last()?;
        let sup = norms.iter().cloned().fold(0.0, f64::max);
        Some((sup, last / first))
    }

    /// `e^{-rT} u(T, x₀)`.
    pub fn price_at(&self, r: f64, horizon: f64, x0: f64) -> Result<f64> {
        Ok((-r * horizon).exp() * self.terminal.interpolate_1d(x0)?)
    }
}

type SourceCache = Mutex<Vec<(f64, Arc<Vec<f64>>)>>;

/// Prepared operators for one problem and scheme.
pub struct Solver {
    problem: CauchyProblem,
    scheme: SchemeConfig,
    plan: OperatorPlan,
    spectral: Spectral,
    linear: Vec<Complex64>,
    padding: usize,
    closed: Option<BlackScholesClosedForm>,
    compensated: bool,
    extra_delta: f64,
    sources: SourceCache,
    deltas: Mutex<Option<(f64, Arc<Vec<f64>>)>>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("scheme", &self.scheme.scheme)
            .field("plan", &self.plan)
            .field("padding", &self.padding)
            .finish()
    }
}

fn nyquist(ax: &Axis) -> Option<f64> {
    ax.len
        .is_multiple_of(2)
        .then(|| (ax.len / 2) as f64 * 2.0 * std::f64::consts::PI / ax.period())
}

fn phi_functions(z: Complex64) -> (Complex64, Complex64, Complex64) {
    let e = z.exp();
    if z.norm() < 1e-2 {
        let z2 = z * z;
        let z3 = z2 * z;
        let z4 = z3 * z;
        let p1 = 1.0 + z / 2.0 + z2 / 6.0 + z3 / 24.0 + z4 / 120.0;
        let p2 = 0.5 + z / 6.0 + z2 / 24.0 + z3 / 120.0 + z4 / 720.0;
        (e, p1, p2)
    } else {
        let p1 = (e - 1.0) / z;
        (e, p1, (e - 1.0 - z) / (z * z))
    }
}

/// Thomas algorithm with implicit zero values beyond both ends.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

impl Solver {
    pub fn new(problem: &CauchyProblem, scheme: &SchemeConfig) -> Result<Self> {
        problem.validate()?;
        if !(scheme.dt > 0.0) {
            return Err(PideError::domain("dt must be positive"));
        }
        if problem.diffusion_mode == DiffusionMode::Feedback && scheme.scheme == Scheme::MildEtd2 {
            return Err(PideError::Unsupported(
                "feedback diffusion is available with the IMEX scheme only".into(),
            ));
        }
        let mut ocfg = scheme.operator.clone();
        ocfg.gradient = scheme.gradient;
        let plan = match &problem.measure {
            ProblemMeasure::Line(m) => OperatorPlan::new(m, &problem.shift, problem.axes[0], &ocfg)?,
            ProblemMeasure::Plane(m) => OperatorPlan::new_2d(m, [problem.axes[0], problem.axes[1]], &ocfg)?,
        };
        let padding = if plan.uses_lattice() {
            plan.required_padding()
        } else {
            let a = plan.shift_table(problem.horizon)?.max_abs;
            let b = plan.shift_table(0.0)?.max_abs;
            plan.required_padding_for_shift(a.max(b))
        };
        let compensated = matches!(problem.nonlinearity, Nonlinearity::Drift);
        let extra_delta = if compensated {
            1.0 + problem.drift_sign.sign()
        } else {
            0.0
        };
        let spectral = Spectral::new(&problem.axes)?;

        let s2 = problem.sigma * problem.sigma;
        let corr = plan.sigma2_correction();
        let mut drift = vec![0.0; problem.dim()];
        match &problem.nonlinearity {
            Nonlinearity::Drift => drift[0] = problem.r - 0.5 * s2 - if compensated { 0.5 * corr[0][0] } else { 0.0 },
            Nonlinearity::Linear(b) => drift.copy_from_slice(b),
            _ => {}
        }
        let nyq: Vec<Option<f64>> = problem.axes.iter().map(nyquist).collect();
        let mut linear = vec![Complex64::new(0.0, 0.0); spectral.len()];
        spectral.for_each_mode(&mut linear, |k, v| {
            let n = k.len();
            let mut re = 0.0;
            let mut im = 0.0;
            for a in 0..n {
                re -= 0.5 * s2 * k[a] * k[a];
                for b in 0..n {
                    re -= 0.5 * corr[a][b] * k[a] * k[b];
                }
                let at_nyq = nyq[a].is_some_and(|q| (k[a].abs() - q).abs() < 1e-9 * q);
                if !at_nyq {
                    im += drift[a] * k[a];
                }
            }
            *v = Complex64::new(re, im);
        });

        let s = Self {
            closed: problem.closed_form(),
            problem: problem.clone(),
            scheme: scheme.clone(),
            plan,
            spectral,
            linear,
            padding,
            compensated,
            extra_delta,
            sources: Mutex::new(Vec::new()),
            deltas: Mutex::new(None),
        };
        if scheme.scheme == Scheme::ImexBdf2 {
            let l = s.explicit_lipschitz()?;
            if scheme.dt * l > scheme.stability_constant {
                return Err(PideError::domain(format!(
                    "IMEX stability bound violated: dt·L = {} > {} (L = {l}); reduce dt below {}",
                    scheme.dt * l,
                    scheme.stability_constant,
                    scheme.stability_constant / l
                )));
            }
        }
        Ok(s)
    }

    pub fn plan(&self) -> &OperatorPlan {
        &self.plan
    }

    pub fn problem(&self) -> &CauchyProblem {
        &self.problem
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    /// Explicit-part Lipschitz estimate used by the IMEX stability check.
    pub fn explicit_lipschitz(&self) -> Result<f64> {
        let mut l = self.plan.explicit_lipschitz()?;
        if self.extra_delta != 0.0 {
            let d = self.delta(0.0)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            l += self.extra_delta * d * std::f64::consts::PI / self.problem.axes[0].spacing;
        }
        Ok(l)
    }

    fn delta(&self, tau: f64) -> Result<Arc<Vec<f64>>> {
        let mut g = self.deltas.lock().expect("delta cache poisoned");
        if let Some((t, d)) = g.as_ref() {
            if *t == tau || self.plan.uses_lattice() || self.problem.shift.strategy.is_time_independent() {
                return Ok(Arc::clone(d));
            }
        }
        let d = Arc::new(self.plan.delta_profile(tau)?);
        *g = Some((tau, Arc::clone(&d)));
        Ok(d)
    }

    fn feedback_coefficient(&self, tau: f64) -> Result<Vec<f64>> {
        let ax = self.problem.axes[0];
        let s2 = self.problem.sigma * self.problem.sigma;
        (0..ax.len)
            .map(|i| {
                let x = ax.coord(i as isize);
                let v = self.problem.shift.rho * self.problem.shift.strategy.dpsi_dx(tau, x);
                if !(v.abs() <= 1.0 - FEEDBACK_MARGIN) {
                    return Err(PideError::domain(format!(
                        "|ρ ∂ₓψ| = {} exceeds the feedback margin at τ = {tau}",
                        v.abs()
                    )));
                }
                Ok(s2 / (2.0 * (1.0 - v) * (1.0 - v)))
            })
            .collect()
    }

    /// Source `h(τ) = f̃(u^BS(τ))` (plus sign and feedback corrections);
    /// `None` when the problem has no closed-form shift or `h ≡ 0`.
    pub fn source(&self, tau: f64) -> Result<Option<Arc<Vec<f64>>>> {
        let Some(bs) = self.closed else {
            return Ok(None);
        };
        let feedback = self.problem.diffusion_mode == DiffusionMode::Feedback;
        if self.plan.is_null() && !feedback {
            return Ok(None);
        }
        {
            let g = self.sources.lock().expect("source cache poisoned");
            if let Some((_, h)) = g.iter().find(|(t, _)| *t == tau) {
                return Ok(Some(Arc::clone(h)));
            }
        }
        let u = move |x: f64| bs.value(tau, x);
        let du = move |x: f64| bs.dx(tau, x);
        let d2u = move |x: f64| bs.dxx(tau, x);
        let mut h = self.plan.apply_f_tilde_fn(tau, &u, &du, &d2u)?;
        let ax = self.problem.axes[0];
        if self.extra_delta != 0.0 {
            let d = self.delta(tau)?;
            for (i, v) in h.iter_mut().enumerate() {
                *v += self.extra_delta * d[i] * du(ax.coord(i as isize));
            }
        }
        if feedback {
            let a = self.feedback_coefficient(tau)?;
            let s2 = self.problem.sigma * self.problem.sigma;
            for (i, v) in h.iter_mut().enumerate() {
                *v += (a[i] - 0.5 * s2) * d2u(ax.coord(i as isize));
            }
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(PideError::StartupGrading(format!(
                "source is not finite at τ = {tau:e}"
            )));
        }
        let h = Arc::new(h);
        let mut g = self.sources.lock().expect("source cache poisoned");
        if g.len() >= 3 {
            g.remove(0);
        }
        g.push((tau, Arc::clone(&h)));
        Ok(Some(h))
    }

    /// Explicit terms `F(τ, U)`: jumps (without the small-jump diffusion,
    /// which is implicit) and `g`.
    pub fn explicit(&self, tau: f64, u: &GridField) -> Result<Vec<f64>> {
        let grad = self.plan.gradients(u)?;
        let mut f = self.plan.jump_part(u, &grad, tau, self.compensated)?;
        if self.extra_delta != 0.0 {
            let d = self.delta(tau)?;
            for (i, v) in f.iter_mut().enumerate() {
                *v += self.extra_delta * d[i] * grad[0][i];
            }
        }
        if let Nonlinearity::Custom(g) = &self.problem.nonlinearity {
            let core = u.core();
            let n = u.dim();
            let ax = u.axes().to_vec();
            let n1 = if n == 2 { ax[1].len } else { 1 };
            let mut x = vec![0.0; n];
            let mut gr = vec![0.0; n];
            for (j, v) in f.iter_mut().enumerate() {
                x[0] = ax[0].coord((j / n1) as isize);
                if n == 2 {
                    x[1] = ax[1].coord((j % n1) as isize);
                }
                for d in 0..n {
                    gr[d] = grad[d][j];
                }
                *v += g(tau, &x, core[j], &gr);
            }
        }
        Ok(f)
    }

    /// Initial state: `U(0) = 0` for payoff problems, the given field
    /// otherwise.
    pub fn initial_state(&self) -> Result<SolverState> {
        let u = match &self.problem.initial {
            InitialData::Payoff(_) => GridField::zeros(&self.problem.axes, self.padding)?,
            InitialData::Field(f) => GridField::from_core(&self.problem.axes, self.padding, &f.core())?,
        };
        Ok(SolverState {
            tau: 0.0,
            step: 0,
            u,
            history: None,
        })
    }

    /// State at `τ` with a previous level `u_prev` at `τ - dt_prev`, so the
    /// next IMEX step is a full BDF2 step.
    pub fn state_with_history(&self, tau: f64, u: &GridField, u_prev: &GridField, dt_prev: f64) -> Result<SolverState> {
        let u = GridField::from_core(&self.problem.axes, self.padding, &u.core())?;
        let up = GridField::from_core(&self.problem.axes, self.padding, &u_prev.core())?;
        let f_prev = self.explicit(tau - dt_prev, &up)?;
        Ok(SolverState {
            tau,
            step: 1,
            u,
            history: Some(History {
                u_prev: up.core(),
                f_prev,
                dt_prev,
            }),
        })
    }

    fn finish(&self, state: &SolverState, core: Vec<f64>, tau: f64, history: Option<History>) -> Result<SolverState> {
        if core.iter().any(|v| !v.is_finite()) {
            return Err(PideError::BlowUp {
                step: state.step + 1,
                tau,
            });
        }
        let u = GridField::from_core(&self.problem.axes, self.padding, &core)?.with_time(tau);
        Ok(SolverState {
            tau,
            step: state.step + 1,
            u,
            history,
        })
    }

    fn implicit_solve(&self, c0: f64, k: f64, rhs: &[f64], tau_n: f64) -> Result<Vec<f64>> {
        if self.problem.diffusion_mode == DiffusionMode::Feedback {
            let a = self.feedback_coefficient(tau_n)?;
            let ax = self.problem.axes[0];
            let h = ax.spacing;
            let corr = 0.5 * self.plan.sigma2_correction()[0][0];
            let b = self.problem.r - 0.5 * self.problem.sigma * self.problem.sigma - corr;
            let n = ax.len;
            let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                let d2 = (a[i] + corr) / (h * h);
                let d1 = b / (2.0 * h);
                lo[i] = -k * (d2 - d1);
                di[i] = c0 + k * 2.0 * d2;
                up[i] = -k * (d2 + d1);
            }
            return Ok(solve_tridiagonal(&lo, &di, &up, rhs));
        }
        let mut spec = self.spectral.forward(rhs)?;
        for (v, a) in spec.iter_mut().zip(&self.linear) {
            *v /= c0 - k * a;
        }
        self.spectral.inverse(spec)
    }

    /// One IMEX step of size `dt` (BDF2, or implicit Euler without history).
    pub fn step_imex(&self, state: &SolverState, dt: f64) -> Result<SolverState> {
        state.u.check_finite().map_err(|_| PideError::BlowUp {
            step: state.step,
            tau: state.tau,
        })?;
        let tn = state.tau;
        let t1 = tn + dt;
        let fnow = self.explicit(tn, &state.u)?;
        let src = self.source(t1)?;
        let un = state.u.core();
        let mut rhs = vec![0.0; un.len()];
        let c0 = match &state.history {
            None => {
                for i in 0..rhs.len() {
                    rhs[i] = un[i] + dt * fnow[i];
                }
                1.0
            }
            Some(h) => {
                let w = dt / h.dt_prev;
                for i in 0..rhs.len() {
                    rhs[i] = (1.0 + w) * un[i] - w * w / (1.0 + w) * h.u_prev[i]
                        + dt * ((1.0 + w) * fnow[i] - w * h.f_prev[i]);
                }
                (1.0 + 2.0 * w) / (1.0 + w)
            }
        };
        if let Some(s) = src {
            for (r, v) in rhs.iter_mut().zip(s.iter()) {
                *r += dt * v;
            }
        }
        let core = self.implicit_solve(c0, dt, &rhs, tn)?;
        let hist = History {
            u_prev: un,
            f_prev: fnow,
            dt_prev: dt,
        };
        self.finish(state, core, t1, Some(hist))
    }

    fn nonlinear_total(&self, tau: f64, u: &GridField, src_tau: f64) -> Result<Vec<f64>> {
        let mut n = self.explicit(tau, u)?;
        if let Some(s) = self.source(src_tau)? {
            for (a, b) in n.iter_mut().zip(s.iter()) {
                *a += b;
            }
        }
        Ok(n)
    }

    /// One exponential-integrator step of size `dt`. At `τ = 0` the source
    /// is sampled at `τ = dt` (the payoff source is not evaluated).
    pub fn step_mild(&self, state: &SolverState, dt: f64) -> Result<SolverState> {
        if self.problem.diffusion_mode == DiffusionMode::Feedback {
            return Err(PideError::Unsupported(
                "feedback diffusion is available with the IMEX scheme only".into(),
            ));
        }
        state.u.check_finite().map_err(|_| PideError::BlowUp {
            step: state.step,
            tau: state.tau,
        })?;
        let tn = state.tau;
        let t1 = tn + dt;
        let src_n = if tn <= 0.0 && self.closed.is_some() { t1 } else { tn };
        let nn = self.nonlinear_total(tn, &state.u, src_n)?;
        let un = self.spectral.forward(&state.u.core())?;
        let nh = self.spectral.forward(&nn)?;
        let mut e = Vec::with_capacity(un.len());
        let mut p2 = Vec::with_capacity(un.len());
        let mut a_hat = Vec::with_capacity(un.len());
        for ((u, n), a) in un.iter().zip(&nh).zip(&self.linear) {
            let (ez, f1, f2) = phi_functions(a * dt);
            a_hat.push(ez * u + dt * f1 * n);
            e.push(ez);
            p2.push(f2);
        }
        let a_core = self.spectral.inverse(a_hat.clone())?;
        let a_field = GridField::from_core(&self.problem.axes, self.padding, &a_core)?;
        let na = self.nonlinear_total(t1, &a_field, t1)?;
        let nah = self.spectral.forward(&na)?;
        let out: Vec<Complex64> = a_hat
            .iter()
            .zip(&p2)
            .zip(nah.iter().zip(&nh))
            .map(|((a, f2), (x, y))| a + dt * f2 * (x - y))
            .collect();
        let core = self.spectral.inverse(out)?;
        self.finish(state, core, t1, None)
    }

    pub fn step(&self, state: &SolverState, dt: f64) -> Result<SolverState> {
        match self.scheme.scheme {
            Scheme::ImexBdf2 => self.step_imex(state, dt),
            Scheme::MildEtd2 => self.step_mild(state, dt),
        }
    }

    pub fn mesh(&self) -> Result<Vec<f64>> {
        time_mesh(
            self.problem.horizon,
            self.scheme.dt,
            self.scheme.graded_startup && self.closed.is_some(),
            self.scheme.startup_fraction,
        )
    }

    fn checkpoint(&self, state: &SolverState) -> Result<Checkpoint> {
        let xgamma_norm = match self.scheme.checkpoint_gamma {
            Some(g) => Some(xgamma_norm_with(&self.spectral, &state.u.core(), g)?),
            None => None,
        };
        Ok(Checkpoint {
            tau: state.tau,
            xgamma_norm,
            field: self.scheme.keep_checkpoint_fields.then(|| state.u.clone()),
        })
    }

    /// Evolved field at `τ = T` and the monitored checkpoints
    /// (`τ ≈ kT/m`, `k = 1..m`, first mesh node at or after each).
    pub fn evolve(&self) -> Result<(SolverState, Vec<Checkpoint>)> {
        let mesh = self.mesh()?;
        let mut state = self.initial_state()?;
        let m = self.scheme.checkpoint_count;
        let mut next = 1usize;
        let mut cps = Vec::new();
        for w in mesh.windows(2) {
            state = self.step(&state, w[1] - w[0])?;
            if m > 0 && next <= m {
                let target = self.problem.horizon * next as f64 / m as f64;
                if state.tau >= target * (1.0 - 1e-12) {
                    cps.push(self.checkpoint(&state)?);
                    while next <= m && self.problem.horizon * next as f64 / m as f64 <= state.tau * (1.0 + 1e-12) {
                        next += 1;
                    }
                }
            }
        }
        Ok((state, cps))
    }

    /// `u = U + u^BS` (padding filled from the closed form) or the evolved
    /// field itself.
    pub fn reconstruct(&self, state: &SolverState) -> Result<GridField> {
        match self.closed {
            None => Ok(state.u.clone()),
            Some(bs) => {
                let ax = self.problem.axes[0];
                let mut u = GridField::from_fn_1d(ax, self.padding, |x| bs.value(state.tau, x))?.with_time(state.tau);
                let p = self.padding;
                let shifted = state.u.core();
                for (i, v) in shifted.iter().enumerate() {
                    u.values_mut()[p + i] += v;
                }
                Ok(u)
            }
        }
    }

    pub fn run(&self) -> Result<SolveOutput> {
        let (state, checkpoints) = self.evolve()?;
        if let Some((sup, ratio)) = {
            let o = SolveOutput {
                terminal: state.u.clone(),
                shifted: None,
                checkpoints: checkpoints.clone(),
                steps: 0,
                mesh_len: 0,
                cross_check: None,
            };
            o.xgamma_summary()
        } {
            if !sup.is_finite() {
                return Err(PideError::BlowUp {
                    step: state.step,
                    tau: state.tau,
                });
            }
            let _ = ratio;
        }
        let terminal = self.reconstruct(&state)?;
        let cross_check = if self.scheme.cross_check {
            let mut other = self.scheme.clone();
            other.scheme = match self.scheme.scheme {
                Scheme::ImexBdf2 => Scheme::MildEtd2,
                Scheme::MildEtd2 => Scheme::ImexBdf2,
            };
            other.cross_check = false;
            other.checkpoint_gamma = None;
            let s2 = Solver::new(&self.problem, &other)?;
            let (st2, _) = s2.evolve()?;
            let d: Vec<f64> = state.u.core().iter().zip(st2.u.core()).map(|(a, b)| a - b).collect();
            Some(CrossCheck {
                other: other.scheme,
                l2_discrepancy: l2_norm(&d, state.u.cell_volume()),
            })
        } else {
            None
        };
        Ok(SolveOutput {
            shifted: self.closed.map(|_| state.u.clone()),
            terminal,
            checkpoints,
            steps: state.step,
            mesh_len: self.mesh()?.len(),
            cross_check,
        })
    }
}

pub fn solve(problem: &CauchyProblem, scheme: &SchemeConfig) -> Result<SolveOutput> {
    Solver::new(problem, scheme)?.run()
}

/// Payoff problem solved for `U = u - u^BS` with `U(0) = 0`.
pub fn solve_shifted(problem: &CauchyProblem, scheme: &SchemeConfig) -> Result<SolveOutput> {
    if !matches!(problem.initial, InitialData::Payoff(_)) {
        return Err(PideError::domain("solve_shifted needs payoff initial data"));
    }
    solve(problem, scheme)
}

/// Tensor-grid solve of a two-dimensional problem with smooth data.
pub fn multid_solve(problem: &CauchyProblem, scheme: &SchemeConfig) -> Result<GridField> {
    if problem.dim() != 2 {
        return Err(PideError::domain("multid_solve needs a two-dimensional problem"));
    }
    if !problem.shift.is_identity() {
        return Err(PideError::Unsupported(
            "only the identity shift is available in two dimensions".into(),
        ));
    }
    Ok(solve(problem, scheme)?.terminal)
}

pub fn step_imex(problem: &CauchyProblem, scheme: &SchemeConfig, state: &SolverState) -> Result<SolverState> {
    Solver::new(problem, scheme)?.step_imex(state, scheme.dt)
}

pub fn step_mild(problem: &CauchyProblem, scheme: &SchemeConfig, state: &SolverState) -> Result<SolverState> {
    Solver::new(problem, scheme)?.step_mild(state, scheme.dt)
}

#[derive(Debug, Clone)]
pub struct DecayProbe {
    pub taus: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    /// Proven exponent `-(2γ - 1)(1/2 - 1/(2p))`.
    pub bound: f64,
    pub max_over_min: f64,
    pub pass: bool,
}

/// Slack allowed below the proven decay exponent.
pub const DECAY_SLACK: f64 = 0.1;

/// Least-squares slope of `log ‖h(τ)‖_{L²}` against `log τ` on 13
/// log-spaced samples in `[10⁻⁴ T, 10⁻¹ T]`. `None` when `h ≡ 0`.
pub fn singular_source_decay_probe(problem: &CauchyProblem, gamma: f64, p: f64) -> Result<Option<DecayProbe>> {
    if p != 2.0 {
        return Err(PideError::Unsupported(
            "the decay probe is implemented for p = 2".into(),
        ));
    }
    if !(0.5..1.0).contains(&gamma) {
        return Err(PideError::domain("γ must lie in [1/2, 1)"));
    }
    if problem.closed_form().is_none() {
        return Err(PideError::domain("the decay probe needs a payoff problem"));
    }
    if problem.measure.is_null() {
        return Ok(None);
    }
    let scheme = SchemeConfig {
        dt: problem.horizon,
        stability_constant: f64::INFINITY,
        ..SchemeConfig::default()
    };
    let solver = Solver::new(problem, &scheme)?;
    let m = 13;
    let taus: Vec<f64> = (0..m)
        .map(|j| problem.horizon * 10f64.powf(-4.0 + 3.0 * j as f64 / (m - 1) as f64))
        .collect();
    let vol = problem.axes[0].spacing;
    let mut norms = Vec::with_capacity(m);
    for &t in &taus {
        let h = solver.source(t)?.expect("non-null measure has a source");
        norms.push(l2_norm(&h, vol));
    }
    let lx: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m as f64;
    let my = ly.iter().sum::<f64>() / m as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let bound = -(2.0 * gamma - 1.0) * (0.5 - 0.5 / p);
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Some(DecayProbe {
        pass: slope.is_finite() && slope >= bound - DECAY_SLACK,
        taus,
        norms,
        slope,
        bound,
        max_over_min: max / min,
    }))
}
