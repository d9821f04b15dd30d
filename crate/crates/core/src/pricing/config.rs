//! Run configuration in sectioned TOML. Keys carry their units; every
//! validation error names the offending key path, e.g. `market.sigma`.
//!
//! ```toml
//! [market]
//! spot = 100.0
//! strike = 100.0
//! maturity_years = 1.0
//! rate_per_annum = 0.05
//! sigma = 0.2
//! option = "call"
//!
//! [measure]
//! family = "merton"
//! intensity_per_annum = 0.5
//! jump_mean = -0.1
//! jump_std = 0.2
//!
//! [grid]
//! points = 1024
//!
//! [scheme]
//! kind = "imex_bdf2"
//! steps = 200
//! ```

use toml::{Table, Value};

use crate::error::{PideError, Result};
use crate::levy::LevyMeasure;
use crate::operator::GradientMode;
use crate::pricing::{GridSpec, MarketSpec};
use crate::shift::{ShiftMode, ShiftModel, TradingStrategy};
use crate::solver::{CauchyProblem, DiffusionMode, DriftSign, OptionType, Scheme, SchemeConfig};

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "market",
        &["spot", "strike", "maturity_years", "rate_per_annum", "sigma", "option"],
    ),
    (
        "measure",
        &[
            "family",
            "intensity_per_annum",
            "jump_mean",
            "jump_std",
            "p_up",
            "eta_up",
            "eta_down",
            "c0",
            "alpha",
            "rate",
        ],
    ),
    (
        "shift",
        &[
            "rho",
            "strategy",
            "mode",
            "slope",
            "intercept",
            "amplitude",
            "frequency",
            "phase",
            "centre",
            "width",
        ],
    ),
    ("grid", &["points", "half_width"]),
    (
        "scheme",
        &[
            "kind",
            "steps",
            "gradient",
            "drift_sign",
            "diffusion",
            "cross_check",
            "xgamma",
            "checkpoints",
            "dump_checkpoints",
            "graded_startup",
        ],
    ),
    ("oracle", &["terms", "tolerance"]),
    ("diagnostics", &["gammas", "bessel_orders", "wavenumbers", "shifts"]),
];

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(PideError::config(self.path(key), "expected a number")),
        }
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?
            .ok_or_else(|| PideError::config(self.path(key), "missing required key"))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.f64_req(key)?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(PideError::config(self.path(key), format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v > 0 => Ok(Some(*v as usize)),
            Some(_) => Err(PideError::config(self.path(key), "expected a positive integer")),
        }
    }

    fn bool_opt(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(PideError::config(self.path(key), "expected true or false")),
        }
    }

    fn str_opt(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(PideError::config(self.path(key), "expected a string")),
        }
    }

    fn list_opt(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(x) => Ok(*x as f64),
                    _ => Err(PideError::config(self.path(key), "expected an array of numbers")),
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
            Some(_) => Err(PideError::config(self.path(key), "expected an array of numbers")),
        }
    }

    fn choice<T: Copy>(&self, key: &str, default: T, options: &[(&str, T)]) -> Result<T> {
        match self.str_opt(key)? {
            None => Ok(default),
            Some(s) => options.iter().find(|(n, _)| *n == s).map(|(_, v)| *v).ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                PideError::config(
                    self.path(key),
                    format!("unknown value `{s}`, expected one of {}", names.join(", ")),
                )
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSpec {
    None,
    Merton {
        lambda: f64,
        jump_mean: f64,
        jump_std: f64,
    },
    Kou {
        lambda: f64,
        p_up: f64,
        eta_up: f64,
        eta_down: f64,
    },
    ExponentialTail {
        c0: f64,
        alpha: f64,
        rate: f64,
    },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<LevyMeasure> {
        match *self {
            MeasureSpec::None => LevyMeasure::zero(1),
            MeasureSpec::Merton {
                lambda,
                jump_mean,
                jump_std,
            } => LevyMeasure::merton(lambda, &[jump_mean], jump_std),
            MeasureSpec::Kou {
                lambda,
                p_up,
                eta_up,
                eta_down,
            } => LevyMeasure::kou(lambda, p_up, eta_up, eta_down),
            MeasureSpec::ExponentialTail { c0, alpha, rate } => LevyMeasure::exponential_tail(c0, alpha, rate, 1),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            MeasureSpec::None => "none",
            MeasureSpec::Merton { .. } => "merton",
            MeasureSpec::Kou { .. } => "kou",
            MeasureSpec::ExponentialTail { .. } => "exponential_tail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    Zero,
    Linear { slope: f64, intercept: f64 },
    Sin { amplitude: f64, frequency: f64, phase: f64 },
    Tanh { amplitude: f64, centre: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub rho: f64,
    pub strategy: StrategySpec,
    pub mode: ShiftMode,
}

impl ShiftSpec {
    pub fn build(&self) -> Result<ShiftModel> {
        let s = match self.strategy {
            StrategySpec::Zero => TradingStrategy::zero(),
            StrategySpec::Linear { slope, intercept } => TradingStrategy::linear(slope, intercept)?,
            StrategySpec::Sin {
                amplitude,
                frequency,
                phase,
            } => TradingStrategy::sin(amplitude, frequency, phase)?,
            StrategySpec::Tanh {
                amplitude,
                centre,
                width,
            } => TradingStrategy::tanh_ramp(amplitude, centre, width)?,
        };
        ShiftModel::new(s, self.rho, self.mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    pub kind: Scheme,
    pub steps: usize,
    pub gradient: GradientMode,
    pub drift_sign: DriftSign,
    pub diffusion: DiffusionMode,
    pub cross_check: bool,
    pub xgamma: Option<f64>,
    pub checkpoints: usize,
    pub dump_checkpoints: bool,
    pub graded_startup: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub terms: usize,
    /// Largest accepted relative error against the oracle.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSpec {
    pub gammas: Vec<f64>,
    pub bessel_orders: Vec<f64>,
    pub wavenumbers: Vec<f64>,
    pub shifts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub market: MarketSpec,
    pub measure: MeasureSpec,
    pub shift: ShiftSpec,
    pub grid: GridSpec,
    pub scheme: SchemeSpec,
    pub oracle: OracleSpec,
    pub diagnostics: DiagnosticsSpec,
}

impl RunConfig {
    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| PideError::config("<document>", e.message().to_string()))?;
        for (key, value) in &root {
            let Some((_, allowed)) = SECTIONS.iter().find(|(n, _)| n == key) else {
                return Err(PideError::config(key.clone(), "unknown section"));
            };
            let Value::Table(t) = value else {
                return Err(PideError::config(key.clone(), "expected a section"));
            };
            for k in t.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(PideError::config(format!("{key}.{k}"), "unknown key"));
                }
            }
        }
        let section = |name: &'static str| Section {
            name,
            table: root.get(name).and_then(Value::as_table),
        };

        let m = section("market");
        if m.table.is_none() {
            return Err(PideError::config("market", "missing required section"));
        }
        let market = MarketSpec {
            spot: m.positive("spot")?,
            strike: m.positive("strike")?,
            maturity: m.positive("maturity_years")?,
            rate: m.f64_req("rate_per_annum")?,
            sigma: m.positive("sigma")?,
            option_type: m.choice(
                "option",
                OptionType::Call,
                &[("call", OptionType::Call), ("put", OptionType::Put)],
            )?,
        };

        let j = section("measure");
        let measure = match j.str_opt("family")?.unwrap_or("none") {
            "none" => MeasureSpec::None,
            "merton" => MeasureSpec::Merton {
                lambda: j.f64_req("intensity_per_annum")?,
                jump_mean: j.f64_req("jump_mean")?,
                jump_std: j.positive("jump_std")?,
            },
            "kou" => MeasureSpec::Kou {
                lambda: j.f64_req("intensity_per_annum")?,
                p_up: j.f64_req("p_up")?,
                eta_up: j.positive("eta_up")?,
                eta_down: j.positive("eta_down")?,
            },
            "exponential_tail" => MeasureSpec::ExponentialTail {
                c0: j.positive("c0")?,
                alpha: j.f64_req("alpha")?,
                rate: j.positive("rate")?,
            },
            other => {
                return Err(PideError::config(
                    "measure.family",
                    format!("unknown family `{other}`, expected none, merton, kou or exponential_tail"),
                ))
            }
        };
        measure
            .build()
            .map_err(|e| PideError::config("measure", e.to_string()))?;

        let s = section("shift");
        let strategy = match s.str_opt("strategy")?.unwrap_or("zero") {
            "zero" => StrategySpec::Zero,
            "linear" => StrategySpec::Linear {
                slope: s.f64_req("slope")?,
                intercept: s.f64_opt("intercept")?.unwrap_or(0.0),
            },
            "sin" => StrategySpec::Sin {
                amplitude: s.f64_req("amplitude")?,
                frequency: s.f64_req("frequency")?,
                phase: s.f64_opt("phase")?.unwrap_or(0.0),
            },
            "tanh" => StrategySpec::Tanh {
                amplitude: s.f64_req("amplitude")?,
                centre: s.f64_opt("centre")?.unwrap_or(0.0),
                width: s.positive("width")?,
            },
            other => {
                return Err(PideError::config(
                    "shift.strategy",
                    format!("unknown strategy `{other}`, expected zero, linear, sin or tanh"),
                ))
            }
        };
        let shift = ShiftSpec {
            rho: s.f64_opt("rho")?.unwrap_or(0.0),
            strategy,
            mode: s.choice(
                "mode",
                ShiftMode::FixedPoint,
                &[
                    ("fixed_point", ShiftMode::FixedPoint),
                    ("first_order", ShiftMode::FirstOrder),
                ],
            )?,
        };
        shift.build().map_err(|e| PideError::config("shift", e.to_string()))?;

        let g = section("grid");
        let points = g.usize_opt("points")?.unwrap_or(1024);
        if points < 16 {
            return Err(PideError::config("grid.points", "need at least 16 points"));
        }
        let half_width = g.f64_opt("half_width")?;
        if half_width.is_some_and(|h| !(h > 0.0)) {
            return Err(PideError::config("grid.half_width", "must be positive"));
        }
        let grid = GridSpec { points, half_width };

        let c = section("scheme");
        let xgamma = c.f64_opt("xgamma")?;
        if xgamma.is_some_and(|g| !(0.0..1.0).contains(&g)) {
            return Err(PideError::config("scheme.xgamma", "must lie in [0, 1)"));
        }
        let scheme = SchemeSpec {
            kind: c.choice(
                "kind",
                Scheme::ImexBdf2,
                &[("imex_bdf2", Scheme::ImexBdf2), ("mild_etd2", Scheme::MildEtd2)],
            )?,
            steps: c.usize_opt("steps")?.unwrap_or(200),
            gradient: c.choice(
                "gradient",
                GradientMode::Spectral,
                &[("spectral", GradientMode::Spectral), ("fd4", GradientMode::Fd4)],
            )?,
            drift_sign: c.choice(
                "drift_sign",
                DriftSign::Minus,
                &[("minus", DriftSign::Minus), ("plus", DriftSign::Plus)],
            )?,
            diffusion: c.choice(
                "diffusion",
                DiffusionMode::Constant,
                &[
                    ("constant", DiffusionMode::Constant),
                    ("feedback", DiffusionMode::Feedback),
                ],
            )?,
            cross_check: c.bool_opt("cross_check")?.unwrap_or(false),
            xgamma,
            checkpoints: c.usize_opt("checkpoints")?.unwrap_or(10),
            dump_checkpoints: c.bool_opt("dump_checkpoints")?.unwrap_or(false),
            graded_startup: c.bool_opt("graded_startup")?.unwrap_or(true),
        };

        let o = section("oracle");
        let oracle = OracleSpec {
            terms: o.usize_opt("terms")?.unwrap_or(60),
            tolerance: o.f64_opt("tolerance")?.unwrap_or(1e-3),
        };

        let d = section("diagnostics");
        let diagnostics = DiagnosticsSpec {
            gammas: d.list_opt("gammas")?.unwrap_or_else(|| vec![0.5, 0.75]),
            bessel_orders: d.list_opt("bessel_orders")?.unwrap_or_else(|| vec![0.6, 1.0, 1.6]),
            wavenumbers: d.list_opt("wavenumbers")?.unwrap_or_else(|| vec![1.0, 2.0, 4.0]),
            shifts: d
                .list_opt("shifts")?
                .unwrap_or_else(|| vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1]),
        };

        Ok(Self {
            market,
            measure,
            shift,
            grid,
            scheme,
            oracle,
            diagnostics,
        })
    }

    pub fn levy_measure(&self) -> Result<LevyMeasure> {
        self.measure.build()
    }

    pub fn shift_model(&self) -> Result<ShiftModel> {
        self.shift.build()
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let mut s = SchemeConfig::new(self.scheme.kind, self.market.maturity / self.scheme.steps as f64)?;
        s.gradient = self.scheme.gradient;
        s.cross_check = self.scheme.cross_check;
        s.checkpoint_gamma = self.scheme.xgamma;
        s.checkpoint_count = self.scheme.checkpoints;
        s.keep_checkpoint_fields = self.scheme.dump_checkpoints;
        s.graded_startup = self.scheme.graded_startup;
        Ok(s)
    }

    pub fn problem(&self) -> Result<CauchyProblem> {
        let p =
            crate::pricing::transform_to_pide(&self.market, &self.levy_measure()?, &self.shift_model()?, &self.grid)?
                .with_drift_sign(self.scheme.drift_sign);
        p.with_diffusion_mode(self.scheme.diffusion)
    }

    /// Same configuration with `grid.points` and `scheme.steps` doubled
    /// `times` times.
    pub fn refined(&self, times: u32) -> Self {
        let mut c = self.clone();
        c.grid.points <<= times;
        c.scheme.steps <<= times;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[market]
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
"#;

    #[test]
    fn parses_reference() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.market.spot, 100.0);
        assert_eq!(c.grid.points, 1024);
        assert!(matches!(c.measure, MeasureSpec::Merton { .. }));
    }

    #[test]
    fn missing_sigma_names_key() {
        let text = BASE.replace("sigma = 0.2\n", "");
        match RunConfig::parse(&text) {
            Err(PideError::Config { key, .. }) => assert_eq!(key, "market.sigma"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{BASE}\n[grid]\npoint = 3\n");
        match RunConfig::parse(&text) {
            Err(PideError::Config { key, .. }) => assert_eq!(key, "grid.point"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_choice_lists_options() {
        let text = format!("{BASE}\n[scheme]\nkind = \"rk4\"\n");
        let e = RunConfig::parse(&text).unwrap_err();
        assert!(e.to_string().contains("scheme.kind"));
        assert!(e.to_string().contains("imex_bdf2"));
    }
}
