//! `levy-pide` command-line driver.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::bessel::{kernel_eval, modulus_of_continuity_probe, q_estimate_probe, BesselKernel, SPREAD_LIMIT};
use crate::error::{PideError, Result};
use crate::grid::{Axis, GridField};
use crate::levy::LevyMeasure;
use crate::operator::{
    bound_probe_family, compensated_symbol, f_bound_probe, q_probe_shifts, OperatorConfig, OperatorPlan,
};
use crate::pricing::config::{MeasureSpec, RunConfig};
use crate::pricing::output::{config_digest, CsvTable, GridEcho, RunManifest, SchemeEcho};
use crate::pricing::{bs_closed_form, merton_series_oracle, reference_merton};
use crate::shift::{resolve_xi_detailed, resolve_xi_first_order, ShiftModel};
use crate::solver::{singular_source_decay_probe, DriftSign, Scheme, Solver};

/// Configuration used when `--config` is not given.
pub const DEFAULT_CONFIG: &str = r#"[market]
spot = 100.0
strike = 100.0
maturity_years = 1.0
rate_per_annum = 0.05
sigma = 0.2
option = "call"

[measure]
family = "merton"
intensity_per_annum = 0.5
jump_mean = -0.1
jump_std = 0.2

[grid]
points = 1024

[scheme]
kind = "imex_bdf2"
steps = 200
xgamma = 0.6
"#;

/// Largest accepted relative drift of a probe ratio under grid halving.
pub const PROBE_DRIFT_LIMIT: f64 = 0.2;
/// Accepted relative error between measured and quadrature symbols.
pub const SYMBOL_TOL: f64 = 1e-6;
/// Accepted `‖f̃(e^x)‖_∞ / K` on the padded grid.
pub const ANNIHILATION_TOL: f64 = 1e-6;
/// Accepted deviation of a Bessel kernel mass from one.
pub const MASS_TOL: f64 = 1e-6;
/// Observed-order window of the convergence study.
pub const ORDER_WINDOW: (f64, f64) = (1.7, 2.3);

#[derive(Debug, Parser)]
#[command(name = "levy-pide", version, about = "Lévy-jump PIDE option pricer and diagnostics")]
pub struct Cli {
    /// Run configuration (TOML). The built-in Merton reference is used if omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files and the manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for operator evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Assert that the run draws no random numbers.
    #[arg(long, global = true)]
    pub seedless: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price the configured option and compare with the closed form or series.
    Price,
    /// Run a diagnostic suite.
    Diagnose {
        #[command(subcommand)]
        which: Diagnostic,
    },
    /// Repeat the pricing run with grid spacing and time step halved.
    ConvergenceStudy {
        #[arg(long, default_value_t = 3)]
        halvings: u32,
    },
    /// Compare fixed-point and first-order jump shifts on a probe grid.
    XiProbe,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Diagnostic {
    Bessel,
    Operator,
    Decay,
}

/// Tables and verdict of one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub tables: Vec<CsvTable>,
    pub passed: bool,
    pub grid: Option<GridEcho>,
    pub scheme: Option<SchemeEcho>,
}

impl Outcome {
    fn new(tables: Vec<CsvTable>, passed: bool) -> Self {
        Self {
            tables,
            passed,
            grid: None,
            scheme: None,
        }
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::ImexBdf2 => "imex_bdf2",
        Scheme::MildEtd2 => "mild_etd2",
    }
}

/// Reference value for the configured run: the Black–Scholes formula
/// without jumps, the Merton series for Gaussian jumps; only for the
/// identity shift and the compensated drift.
pub fn oracle_price(cfg: &RunConfig) -> Result<Option<f64>> {
    if !cfg.shift_model()?.is_identity() || cfg.scheme.drift_sign != DriftSign::Minus {
        return Ok(None);
    }
    match cfg.measure {
        MeasureSpec::None => Ok(Some(bs_closed_form(&cfg.market)?)),
        MeasureSpec::Merton {
            lambda,
            jump_mean,
            jump_std,
        } => Ok(Some(merton_series_oracle(
            &cfg.market,
            lambda,
            jump_mean,
            jump_std,
            cfg.oracle.terms,
        )?)),
        _ => Ok(None),
    }
}

/// Solves the configured problem and returns `(V(0, S₀), solver, output)`.
pub fn price_once(cfg: &RunConfig) -> Result<(f64, Solver, crate::solver::SolveOutput)> {
    let problem = cfg.problem()?;
    let solver = Solver::new(&problem, &cfg.scheme_config()?)?;
    let out = solver.run()?;
    let v = out.price_at(cfg.market.rate, cfg.market.maturity, cfg.market.log_moneyness())?;
    Ok((v, solver, out))
}

fn echoes(cfg: &RunConfig, solver: &Solver) -> (GridEcho, SchemeEcho) {
    let ax = solver.problem().axes[0];
    (
        GridEcho {
            points: ax.len,
            half_width: 0.5 * ax.period(),
            centre: cfg.market.log_moneyness(),
            padding: solver.padding(),
        },
        SchemeEcho {
            kind: scheme_name(cfg.scheme.kind).into(),
            steps: cfg.scheme.steps,
            dt: cfg.market.maturity / cfg.scheme.steps as f64,
            gradient: format!("{:?}", cfg.scheme.gradient).to_lowercase(),
            drift_sign: format!("{:?}", cfg.scheme.drift_sign).to_lowercase(),
        },
    )
}

pub fn cmd_price(cfg: &RunConfig) -> Result<Outcome> {
    let (v, solver, out) = price_once(cfg)?;
    let oracle = oracle_price(cfg)?;
    let rel = oracle.map(|o| (v - o).abs() / o.abs());
    let m = &cfg.market;
    let mut price = CsvTable::new("price", &["S0", "K", "T", "price_pide", "price_oracle", "rel_err"]);
    price.push(vec![
        m.spot.into(),
        m.strike.into(),
        m.maturity.into(),
        v.into(),
        oracle.into(),
        rel.into(),
    ]);
    let mut passed = rel.is_none_or(|e| e <= cfg.oracle.tolerance);
    let mut tables = vec![price];

    if !out.checkpoints.is_empty() {
        let mut cp = CsvTable::new("checkpoints", &["tau", "xgamma_norm"]);
        for c in &out.checkpoints {
            cp.push(vec![c.tau.into(), c.xgamma_norm.into()]);
        }
        tables.push(cp);
        if let Some((sup, ratio)) = out.xgamma_summary() {
            passed &= sup.is_finite() && ratio < solver_growth_limit(cfg)?;
        }
        if cfg.scheme.dump_checkpoints {
            let mut f = CsvTable::new("checkpoint_fields", &["tau", "x", "U"]);
            for c in &out.checkpoints {
                if let Some(u) = &c.field {
                    let ax = u.axis(0);
                    for (i, val) in u.core().iter().enumerate() {
                        f.push(vec![c.tau.into(), ax.coord(i as isize).into(), (*val).into()]);
                    }
                }
            }
            tables.push(f);
        }
    }
    if let Some(cc) = &out.cross_check {
        let mut t = CsvTable::new("cross_check", &["other_scheme", "l2_discrepancy"]);
        t.push(vec![scheme_name(cc.other).into(), cc.l2_discrepancy.into()]);
        tables.push(t);
    }
    let (g, s) = echoes(cfg, &solver);
    Ok(Outcome {
        tables,
        passed,
        grid: Some(g),
        scheme: Some(s),
    })
}

fn solver_growth_limit(cfg: &RunConfig) -> Result<f64> {
    Ok(cfg.scheme_config()?.xgamma_growth_limit)
}

pub fn cmd_bessel(cfg: &RunConfig) -> Result<Outcome> {
    let mut passed = true;
    let mut mass = CsvTable::new("bessel_mass", &["order", "dim", "mass", "abs_err", "status"]);
    for &order in &cfg.diagnostics.bessel_orders {
        for dim in [1usize, 2] {
            let m = BesselKernel::new(order, dim)?.total_mass(1e-10)?;
            let ok = (m - 1.0).abs() < MASS_TOL;
            passed &= ok;
            mass.push(vec![
                order.into(),
                dim.into(),
                m.into(),
                (m - 1.0).abs().into(),
                ok.into(),
            ]);
        }
    }
    let mut kern = CsvTable::new("bessel_kernel", &["order", "dim", "x", "value", "laplace_reference"]);
    for &order in &[1.0, 2.0] {
        for x in [0.5, 1.0, 2.0] {
            let v = kernel_eval(order, 1, &[x])?;
            let lap = 0.5 * (-x).exp();
            kern.push(vec![order.into(), 1usize.into(), x.into(), v.into(), lap.into()]);
        }
    }
    let mut modulus = CsvTable::new("bessel_modulus", &["alpha", "h", "ratio"]);
    let mut summary = CsvTable::new("bessel_modulus_summary", &["alpha", "spread", "limit", "status"]);
    let shifts: Vec<Vec<f64>> = cfg.diagnostics.shifts.iter().map(|&h| vec![h]).collect();
    for alpha in [0.3, 0.5, 0.8] {
        let p = modulus_of_continuity_probe(alpha, 1, &shifts)?;
        for (h, r) in p.parameters.iter().zip(&p.ratios) {
            modulus.push(vec![alpha.into(), (*h).into(), (*r).into()]);
        }
        passed &= p.pass;
        summary.push(vec![
            alpha.into(),
            p.spread().into(),
            SPREAD_LIMIT.into(),
            p.pass.into(),
        ]);
    }
    Ok(Outcome::new(vec![mass, kern, modulus, summary], passed))
}

fn diagnostic_measure(cfg: &RunConfig) -> Result<LevyMeasure> {
    if matches!(cfg.measure, MeasureSpec::None) {
        Ok(reference_merton())
    } else {
        cfg.levy_measure()
    }
}

/// `(f-bound ratios, Q-probe ratios)` on `points` nodes of `[-4, 4]`.
pub fn bound_ratios(measure: &LevyMeasure, points: usize, gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let ax = Axis::centred(0.0, 4.0, points)?;
    let plan = OperatorPlan::new(measure, &ShiftModel::identity(), ax, &OperatorConfig::default())?;
    let family = bound_probe_family(ax, plan.required_padding().max(8))?;
    let f: Vec<f64> = f_bound_probe(&plan, &family, gamma)?.into_iter().flatten().collect();
    let mut q = Vec::new();
    for u in &family {
        for (a, b) in q_probe_shifts(ax) {
            q.push(q_estimate_probe(u, &[a], &[b], gamma)?);
        }
    }
    Ok((f, q))
}

/// Largest `|a_i - b_i| / |b_i|`.
pub fn relative_drift(coarse: &[f64], fine: &[f64]) -> f64 {
    coarse
        .iter()
        .zip(fine)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max)
}

pub fn cmd_operator(cfg: &RunConfig) -> Result<Outcome> {
    let measure = diagnostic_measure(cfg)?;
    let mut passed = true;
    let ax = Axis::centred(0.0, 8.0, 2048)?;
    let plan = OperatorPlan::new(&measure, &ShiftModel::identity(), ax, &OperatorConfig::default())?;
    let mut sym = CsvTable::new(
        "operator_symbol",
        &[
            "k",
            "measured_re",
            "measured_im",
            "quadrature_re",
            "quadrature_im",
            "rel_err",
            "status",
        ],
    );
    for &k in &cfg.diagnostics.wavenumbers {
        let m = plan.measured_symbol(k)?;
        let q = compensated_symbol(&measure, k, 1e-12)?;
        let e = (m - q).norm() / q.norm();
        let ok = e < SYMBOL_TOL;
        passed &= ok;
        sym.push(vec![
            k.into(),
            m.re.into(),
            m.im.into(),
            q.re.into(),
            q.im.into(),
            e.into(),
            ok.into(),
        ]);
    }

    let mut ann = CsvTable::new("operator_annihilation", &["tau", "sup_norm_over_scale", "status"]);
    let k = cfg.market.strike;
    let r = cfg.market.rate;
    let ax_a = Axis::centred(0.0, 3.0, 1024)?;
    let plan_a = OperatorPlan::new(&measure, &ShiftModel::identity(), ax_a, &OperatorConfig::default())?;
    for tau in [0.0, 0.5 * cfg.market.maturity, cfg.market.maturity] {
        let scale = k * (r * tau).exp();
        let u = GridField::from_fn_1d(ax_a, plan_a.required_padding(), |x| scale * x.exp())?;
        let g = u.core();
        let f = plan_a.apply_f_tilde(&u, &[g])?;
        let v = f.max_abs_core() / scale;
        let ok = v < ANNIHILATION_TOL;
        passed &= ok;
        ann.push(vec![tau.into(), v.into(), ok.into()]);
    }

    let mut bounds = CsvTable::new(
        "operator_bounds",
        &["gamma", "probe", "max_ratio", "drift_under_halving", "status"],
    );
    for &gamma in &cfg.diagnostics.gammas {
        if plan.check_bound_gamma(gamma).is_err() {
            continue;
        }
        let (f1, q1) = bound_ratios(&measure, 256, gamma)?;
        let (f2, q2) = bound_ratios(&measure, 512, gamma)?;
        for (name, a, b) in [("f_bound", f1, f2), ("q_estimate", q1, q2)] {
            let d = relative_drift(&a, &b);
            let finite = a.iter().chain(&b).all(|v| v.is_finite());
            let ok = finite && d < PROBE_DRIFT_LIMIT;
            passed &= ok;
            let mx = b.iter().cloned().fold(0.0, f64::max);
            bounds.push(vec![gamma.into(), name.into(), mx.into(), d.into(), ok.into()]);
        }
    }
    Ok(Outcome::new(vec![sym, ann, bounds], passed))
}

pub fn cmd_decay(cfg: &RunConfig) -> Result<Outcome> {
    let mut c = cfg.clone();
    if matches!(c.measure, MeasureSpec::None) {
        c.measure = MeasureSpec::Merton {
            lambda: 0.5,
            jump_mean: -0.1,
            jump_std: 0.2,
        };
    }
    let problem = c.problem()?;
    let mut summary = CsvTable::new("decay", &["gamma", "slope", "bound", "max_over_min", "status"]);
    let mut samples = CsvTable::new("decay_samples", &["gamma", "tau", "source_l2"]);
    let mut passed = true;
    for &gamma in &c.diagnostics.gammas {
        let Some(p) = singular_source_decay_probe(&problem, gamma, 2.0)? else {
            continue;
        };
        for (t, n) in p.taus.iter().zip(&p.norms) {
            samples.push(vec![gamma.into(), (*t).into(), (*n).into()]);
        }
        passed &= p.pass;
        summary.push(vec![
            gamma.into(),
            p.slope.into(),
            p.bound.into(),
            p.max_over_min.into(),
            p.pass.into(),
        ]);
    }
    Ok(Outcome::new(vec![summary, samples], passed))
}

pub fn cmd_convergence(cfg: &RunConfig, halvings: u32) -> Result<Outcome> {
    let oracle = oracle_price(cfg)?;
    let mut t = CsvTable::new("convergence", &["level", "dt", "h", "price", "error", "observed_order"]);
    let mut prices = Vec::new();
    let mut errors: Vec<f64> = Vec::new();
    let mut last_order = None;
    let mut echo = None;
    for level in 0..=halvings {
        let c = cfg.refined(level);
        let (v, solver, _) = price_once(&c)?;
        let h = solver.problem().axes[0].spacing;
        let dt = c.market.maturity / c.scheme.steps as f64;
        let err = match oracle {
            Some(o) => Some((v - o).abs()),
            None => prices.last().map(|p: &f64| (v - p).abs()),
        };
        let order = match (errors.last(), err) {
            (Some(&e0), Some(e1)) if e1 > 0.0 => Some((e0 / e1).log2()),
            _ => None,
        };
        if order.is_some() {
            last_order = order;
        }
        if let Some(e) = err {
            errors.push(e);
        }
        prices.push(v);
        t.push(vec![
            (level as usize).into(),
            dt.into(),
            h.into(),
            v.into(),
            err.into(),
            order.into(),
        ]);
        echo = Some(echoes(&c, &solver));
    }
    let passed = last_order.is_none_or(|p| p >= ORDER_WINDOW.0 && p <= ORDER_WINDOW.1);
    let (g, s) = echo.expect("at least one level");
    Ok(Outcome {
        tables: vec![t],
        passed,
        grid: Some(g),
        scheme: Some(s),
    })
}

/// Largest `|ξ_fp - ξ_fo|` over a 9×9 probe grid `(x, z) ∈ [-1, 1] × [-0.5, 0.5]`.
pub fn xi_gap(model: &ShiftModel) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for i in 0..9 {
        for j in 0..9 {
            let x = -1.0 + 0.25 * i as f64;
            let z = -0.5 + 0.125 * j as f64;
            let fp = resolve_xi_detailed(model, 0.0, x, z)?.xi;
            gap = gap.max((fp - resolve_xi_first_order(model, 0.0, x, z)).abs());
        }
    }
    Ok(gap)
}

pub fn cmd_xi_probe(cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.shift_model()?;
    let mut t = CsvTable::new(
        "xi_probe",
        &[
            "x",
            "z",
            "xi_fixed_point",
            "xi_first_order",
            "abs_diff",
            "iterations",
            "method",
        ],
    );
    for i in 0..9 {
        for j in 0..9 {
            let x = -1.0 + 0.25 * i as f64;
            let z = -0.5 + 0.125 * j as f64;
            let s = resolve_xi_detailed(&model, 0.0, x, z)?;
            let fo = resolve_xi_first_order(&model, 0.0, x, z);
            t.push(vec![
                x.into(),
                z.into(),
                s.xi.into(),
                fo.into(),
                (s.xi - fo).abs().into(),
                s.iterations.into(),
                format!("{:?}", s.method).to_lowercase().into(),
            ]);
        }
    }
    let mut o = CsvTable::new("xi_order", &["rho", "max_gap", "max_gap_half_rho", "factor"]);
    if model.rho != 0.0 && !model.strategy.is_zero() {
        let half = ShiftModel::new(model.strategy.clone(), 0.5 * model.rho, model.mode)?;
        let a = xi_gap(&model)?;
        let b = xi_gap(&half)?;
        o.push(vec![model.rho.into(), a.into(), b.into(), (a / b).into()]);
    }
    Ok(Outcome::new(vec![t, o], true))
}

fn load_config(path: Option<&Path>) -> Result<(RunConfig, Vec<u8>, String)> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| PideError::Io(format!("{}: {e}", p.display())))?;
            let text =
                String::from_utf8(bytes.clone()).map_err(|_| PideError::config("<document>", "config is not UTF-8"))?;
            Ok((RunConfig::parse(&text)?, bytes, p.display().to_string()))
        }
        None => Ok((
            RunConfig::parse(DEFAULT_CONFIG)?,
            DEFAULT_CONFIG.as_bytes().to_vec(),
            "<built-in>".into(),
        )),
    }
}

/// Runs one CLI invocation; `Ok(true)` iff every enabled assertion passed.
pub fn run(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(PideError::config("--threads", "must be at least 1"));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (cfg, bytes, cfg_path) = load_config(cli.config.as_deref())?;
    let digest = config_digest(&bytes);
    let (name, outcome) = match &cli.command {
        Command::Price => ("price", cmd_price(&cfg)?),
        Command::Diagnose { which } => match which {
            Diagnostic::Bessel => ("diagnose bessel", cmd_bessel(&cfg)?),
            Diagnostic::Operator => ("diagnose operator", cmd_operator(&cfg)?),
            Diagnostic::Decay => ("diagnose decay", cmd_decay(&cfg)?),
        },
        Command::ConvergenceStudy { halvings } => ("convergence-study", cmd_convergence(&cfg, *halvings)?),
        Command::XiProbe => ("xi-probe", cmd_xi_probe(&cfg)?),
    };
    std::fs::create_dir_all(&cli.out)?;
    let mut outputs = Vec::new();
    for t in &outcome.tables {
        outputs.push(t.write(&cli.out, &digest)?.display().to_string());
    }
    let manifest = RunManifest {
        command: name.into(),
        config_path: cfg_path,
        config_digest: digest,
        versions: RunManifest::module_versions(),
        grid: outcome.grid.clone(),
        scheme: outcome.scheme.clone(),
        threads: rayon::current_num_threads(),
        seedless: cli.seedless,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs,
        passed: outcome.passed,
    };
    manifest.write(&cli.out)?;
    for t in &outcome.tables {
        println!("wrote {}.csv ({} rows)", t.name, t.rows.len());
    }
    println!("{name}: {}", if outcome.passed { "PASS" } else { "FAIL" });
    Ok(outcome.passed)
}

/// Process entry point: exit 0 on success, 1 on a failed assertion, 2 on error.
pub fn main_entry() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => std::process::ExitCode::SUCCESS,
        Ok(false) => std::process::ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(2)
        }
    }
}
