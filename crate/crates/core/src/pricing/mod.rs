//! Option-pricing front end: market data, the log-moneyness transform,
//! closed-form benchmarks and the command-line driver.

pub mod cli;
pub mod config;
pub mod output;

use crate::error::{PideError, Result};
use crate::grid::Axis;
use crate::levy::LevyMeasure;
use crate::shift::ShiftModel;
use crate::solver::{BlackScholesClosedForm, CauchyProblem, OptionType};

/// Largest number of Poisson terms the Merton series may use.
pub const MERTON_TERM_BUDGET: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketSpec {
    pub spot: f64,
    pub strike: f64,
    pub maturity: f64,
    pub rate: f64,
    pub sigma: f64,
    pub option_type: OptionType,
}

impl MarketSpec {
    pub fn new(spot: f64, strike: f64, maturity: f64, rate: f64, sigma: f64, option_type: OptionType) -> Result<Self> {
        let m = Self {
            spot,
            strike,
            maturity,
            rate,
            sigma,
            option_type,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("spot", self.spot),
            ("strike", self.strike),
            ("maturity", self.maturity),
            ("sigma", self.sigma),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PideError::domain(format!("market {name} must be positive, got {v}")));
            }
        }
        if !self.rate.is_finite() {
            return Err(PideError::domain("market rate must be finite"));
        }
        Ok(())
    }

    /// `x₀ = ln(S₀/K)`.
    pub fn log_moneyness(&self) -> f64 {
        to_log_moneyness(self.spot, self.strike)
    }

    pub fn closed_form(&self) -> Result<BlackScholesClosedForm> {
        BlackScholesClosedForm::new(self.strike, self.rate, self.sigma, self.maturity, self.option_type)
    }
}

pub fn to_log_moneyness(s: f64, strike: f64) -> f64 {
    (s / strike).ln()
}

pub fn from_log_moneyness(x: f64, strike: f64) -> f64 {
    strike * x.exp()
}

/// `V(0, S) = e^{-rT} u(T, x)`.
pub fn discount_to_price(market: &MarketSpec, u_at_maturity: f64) -> f64 {
    (-market.rate * market.maturity).exp() * u_at_maturity
}

/// Grid for the transformed problem: centred on `x₀` so the spot is a grid
/// node, half-width `6σ√T + R` where `R` is the jump truncation radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    pub half_width: Option<f64>,
}

impl GridSpec {
    pub fn axis(&self, market: &MarketSpec, measure: &LevyMeasure) -> Result<Axis> {
        let hw = match self.half_width {
            Some(h) => h,
            None => default_half_width(market, measure),
        };
        Axis::centred(market.log_moneyness(), hw, self.points)
    }
}

pub fn default_half_width(market: &MarketSpec, measure: &LevyMeasure) -> f64 {
    let r_out = if measure.is_null() {
        0.0
    } else {
        measure.tail_radius(measure.has_exponential_moment(), 1e-10)
    };
    6.0 * market.sigma * market.maturity.sqrt() + r_out
}

/// Payoff problem `u(0, x) = Φ(K e^x)` with the drift convention of the
/// solver default.
pub fn transform_to_pide(
    market: &MarketSpec,
    measure: &LevyMeasure,
    shift: &ShiftModel,
    grid: &GridSpec,
) -> Result<CauchyProblem> {
    market.validate()?;
    let axis = grid.axis(market, measure)?;
    CauchyProblem::pricing(
        axis,
        market.strike,
        market.rate,
        market.sigma,
        market.maturity,
        market.option_type,
        measure.clone(),
        shift.clone(),
    )
}

/// Black–Scholes value of the market's option at `S₀`.
pub fn bs_closed_form(market: &MarketSpec) -> Result<f64> {
    Ok(market.closed_form()?.price(market.spot))
}

/// `κ = E[e^Y] - 1` for Gaussian jumps `Y ~ N(m, δ²)`; the drift is
/// compensated by `λκ`, which is `∫(e^z - 1) ν(dz)`.
pub fn merton_kappa(jump_mean: f64, jump_std: f64) -> f64 {
    (jump_mean + 0.5 * jump_std * jump_std).exp_m1()
}

/// Conditioning on the number of jumps:
/// `Σ_k e^{-λ'T} (λ'T)^k / k! · BS(S₀, K, T, σ_k, r_k)` with
/// `λ' = λ(1 + κ)`, `σ_k² = σ² + k δ² / T`, `r_k = r - λκ + k ln(1 + κ) / T`.
/// At least `terms` terms are summed, then until a term drops below
/// `10⁻¹²` of the running sum.
pub fn merton_series_oracle(
    market: &MarketSpec,
    lambda: f64,
    jump_mean: f64,
    jump_std: f64,
    terms: usize,
) -> Result<f64> {
    market.validate()?;
    if !(lambda >= 0.0) || !(jump_std >= 0.0) || !jump_mean.is_finite() {
        return Err(PideError::domain("Merton parameters need λ ≥ 0, δ ≥ 0 and finite m"));
    }
    if lambda == 0.0 {
        return bs_closed_form(market);
    }
    let t = market.maturity;
    let kappa = merton_kappa(jump_mean, jump_std);
    let lp = lambda * (1.0 + kappa) * t;
    let mut weight = (-lp).exp();
    let mut sum = 0.0;
    for k in 0..MERTON_TERM_BUDGET {
        if k > 0 {
            weight *= lp / k as f64;
        }
        let kf = k as f64;
        let sigma_k = (market.sigma * market.sigma + kf * jump_std * jump_std / t).sqrt();
        let r_k = market.rate - lambda * kappa + kf * (1.0 + kappa).ln() / t;
        let bs = BlackScholesClosedForm::new(market.strike, r_k, sigma_k, t, market.option_type)?;
        let term = weight * bs.price(market.spot);
        sum += term;
        if k + 1 >= terms && term.abs() < 1e-12 * sum.abs() && kf > lp {
            return Ok(sum);
        }
    }
    Err(PideError::ToleranceNotMet {
        estimate: sum,
        error: f64::NAN,
        requested: 1e-12,
    })
}

/// Merton call at the reference market (`λ = 0.5`, `m = -0.1`, `δ = 0.2`,
/// `S₀ = K = 100`, `r = 0.05`, `σ = 0.2`, `T = 1`). Frozen after the
/// series and a fine-grid solve agreed to `10⁻⁴` relative.
pub const MERTON_REFERENCE_CALL: f64 = 12.164203195593;

pub fn reference_market() -> MarketSpec {
    MarketSpec {
        spot: 100.0,
        strike: 100.0,
        maturity: 1.0,
        rate: 0.05,
        sigma: 0.2,
        option_type: OptionType::Call,
    }
}

pub fn reference_merton() -> LevyMeasure {
    LevyMeasure::merton(0.5, &[-0.1], 0.2).expect("valid reference parameters")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_moneyness_at_the_money() {
        let m = reference_market();
        assert_eq!(m.log_moneyness(), 0.0);
    }

    #[test]
    fn reference_call() {
        let v = bs_closed_form(&reference_market()).unwrap();
        assert!((v - 10.4506).abs() < 1e-4);
    }

    #[test]
    fn zero_intensity_is_black_scholes() {
        let m = reference_market();
        let a = merton_series_oracle(&m, 0.0, -0.1, 0.2, 30).unwrap();
        assert_eq!(a, bs_closed_form(&m).unwrap());
    }

    #[test]
    fn degenerate_jumps_reduce_to_black_scholes() {
        let m = reference_market();
        let a = merton_series_oracle(&m, 0.7, 0.0, 1e-9, 30).unwrap();
        assert!((a - bs_closed_form(&m).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn frozen_reference_value() {
        let v = merton_series_oracle(&reference_market(), 0.5, -0.1, 0.2, 30).unwrap();
        assert!((v - MERTON_REFERENCE_CALL).abs() < 1e-10);
    }

    #[test]
    fn put_call_parity_of_series() {
        let c = reference_market();
        let p = MarketSpec {
            option_type: OptionType::Put,
            ..c
        };
        let vc = merton_series_oracle(&c, 0.5, -0.1, 0.2, 30).unwrap();
        let vp = merton_series_oracle(&p, 0.5, -0.1, 0.2, 30).unwrap();
        assert!((vc - vp - (100.0 - 100.0 * (-0.05f64).exp())).abs() < 1e-10);
    }
}
