//! C ABI for the `levy-pide` library.
//!
//! All functions return an [`LpStatus`]; results are written through out
//! pointers. Handles are opaque and must be released with their `_free`
//! function. After a non-`Ok` status, [`lp_last_error_message`] returns a
//! description of the failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use levy_pide::levy::LevyMeasure;
use levy_pide::pricing::cli::{oracle_price, price_once};
use levy_pide::pricing::config::RunConfig;
use levy_pide::pricing::{bs_closed_form, merton_series_oracle, MarketSpec};
use levy_pide::shift::{compute_delta, ShiftModel};
use levy_pide::solver::OptionType;
use levy_pide::PideError;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParameterDomain = 3,
    ToleranceNotMet = 4,
    NoSolution = 5,
    OutOfDomain = 6,
    PlanInvalid = 7,
    Singularity = 8,
    GridMismatch = 9,
    BlowUp = 10,
    StartupGrading = 11,
    Unsupported = 12,
    Config = 13,
    Io = 14,
    Panic = 15,
    BufferTooSmall = 16,
}

/// Jump measure handle.
pub struct LpMeasure {
    inner: LevyMeasure,
}

/// Configured pricing run handle.
pub struct LpPricer {
    config: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &PideError) -> LpStatus {
    match e {
        PideError::ParameterDomain(_) => LpStatus::ParameterDomain,
        PideError::ToleranceNotMet { .. } => LpStatus::ToleranceNotMet,
        PideError::NoSolution { .. } => LpStatus::NoSolution,
        PideError::OutOfDomain(_) => LpStatus::OutOfDomain,
        PideError::PlanInvalid(_) => LpStatus::PlanInvalid,
        PideError::Singularity(_) => LpStatus::Singularity,
        PideError::GridMismatch(_) => LpStatus::GridMismatch,
        PideError::BlowUp { .. } => LpStatus::BlowUp,
        PideError::StartupGrading(_) => LpStatus::StartupGrading,
        PideError::Unsupported(_) => LpStatus::Unsupported,
        PideError::Config { .. } => LpStatus::Config,
        PideError::Io(_) => LpStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), LpStatus>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LpStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside levy-pide");
            LpStatus::Panic
        }
    }
}

fn lift<T>(r: levy_pide::Result<T>) -> Result<T, LpStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null(what: &str) -> LpStatus {
    set_error(format!("null pointer passed for `{what}`"));
    LpStatus::NullPointer
}

fn option_type(is_call: i32) -> OptionType {
    if is_call != 0 {
        OptionType::Call
    } else {
        OptionType::Put
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn lp_status_string(status: LpStatus) -> *const c_char {
    let s: &'static CStr = match status {
        LpStatus::Ok => c"ok",
        LpStatus::NullPointer => c"null pointer",
        LpStatus::InvalidUtf8 => c"invalid UTF-8",
        LpStatus::ParameterDomain => c"parameter out of domain",
        LpStatus::ToleranceNotMet => c"tolerance not met",
        LpStatus::NoSolution => c"no solution",
        LpStatus::OutOfDomain => c"out of domain",
        LpStatus::PlanInvalid => c"invalid operator plan",
        LpStatus::Singularity => c"kernel singularity",
        LpStatus::GridMismatch => c"grid mismatch",
        LpStatus::BlowUp => c"solution blew up",
        LpStatus::StartupGrading => c"startup grading failed",
        LpStatus::Unsupported => c"unsupported configuration",
        LpStatus::Config => c"configuration error",
        LpStatus::Io => c"io error",
        LpStatus::Panic => c"internal panic",
        LpStatus::BufferTooSmall => c"buffer too small",
    };
    s.as_ptr()
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated) and stores its length without the terminator in `len_out`.
/// Returns `BufferTooSmall` if `cap` cannot hold the message.
///
/// # Safety
/// `buf` must point to `cap` writable bytes; `len_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn lp_last_error_message(buf: *mut c_char, cap: usize, len_out: *mut usize) -> LpStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    if !len_out.is_null() {
        *len_out = msg.len();
    }
    if buf.is_null() {
        return LpStatus::NullPointer;
    }
    if cap < msg.len() + 1 {
        return LpStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
    *buf.add(msg.len()) = 0;
    LpStatus::Ok
}

/// Black–Scholes price of a European option.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn lp_bs_price(
    spot: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    sigma: f64,
    is_call: i32,
    out: *mut f64,
) -> LpStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let m = lift(MarketSpec::new(
            spot,
            strike,
            maturity,
            rate,
            sigma,
            option_type(is_call),
        ))?;
        *out = lift(bs_closed_form(&m))?;
        Ok(())
    })
}

/// Merton jump-diffusion price by the Poisson series with at least
/// `terms` terms.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn lp_merton_series(
    spot: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    sigma: f64,
    is_call: i32,
    lambda: f64,
    jump_mean: f64,
    jump_std: f64,
    terms: usize,
    out: *mut f64,
) -> LpStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let m = lift(MarketSpec::new(
            spot,
            strike,
            maturity,
            rate,
            sigma,
            option_type(is_call),
        ))?;
        *out = lift(merton_series_oracle(&m, lambda, jump_mean, jump_std, terms))?;
        Ok(())
    })
}

/// Bessel-potential kernel `G_order` at the point `x` of dimension `dim`.
///
/// # Safety
/// `x` must point to `dim` doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn lp_bessel_kernel(order: f64, dim: usize, x: *const f64, out: *mut f64) -> LpStatus {
    if x.is_null() {
        return null("x");
    }
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let pt = std::slice::from_raw_parts(x, dim);
        *out = lift(levy_pide::bessel::kernel_eval(order, dim, pt))?;
        Ok(())
    })
}

unsafe fn store_measure(r: levy_pide::Result<LevyMeasure>, out: *mut *mut LpMeasure) -> Result<(), LpStatus> {
    let m = lift(r)?;
    *out = Box::into_raw(Box::new(LpMeasure { inner: m }));
    Ok(())
}

/// Merton measure with intensity `lambda` and Gaussian jumps `N(m, δ²)`.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle to free
/// with [`lp_measure_free`].
#[no_mangle]
pub unsafe extern "C" fn lp_measure_merton(
    lambda: f64,
    jump_mean: f64,
    jump_std: f64,
    out: *mut *mut LpMeasure,
) -> LpStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| store_measure(LevyMeasure::merton(lambda, &[jump_mean], jump_std), out))
}

/// Kou double-exponential measure.
///
/// # Safety
/// As [`lp_measure_merton`].
#[no_mangle]
pub unsafe extern "C" fn lp_measure_kou(
    lambda: f64,
    p_up: f64,
    eta_up: f64,
    eta_down: f64,
    out: *mut *mut LpMeasure,
) -> LpStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| store_measure(LevyMeasure::kou(lambda, p_up, eta_up, eta_down), out))
}

/// `∫(e^z - 1 - z) ν(dz)` for the measure.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_measure_delta(m: *const LpMeasure, out: *mut f64) -> LpStatus {
    if m.is_null() {
        return null("measure");
    }
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        *out = lift(compute_delta(&ShiftModel::identity(), &(*m).inner, 0.0, 0.0, 1e-10))?;
        Ok(())
    })
}

/// Density `h(z)` of a one-dimensional measure.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_measure_density(m: *const LpMeasure, z: f64, out: *mut f64) -> LpStatus {
    if m.is_null() {
        return null("measure");
    }
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        *out = (*m).inner.density_1d(z);
        Ok(())
    })
}

/// Releases a measure handle; null is ignored.
///
/// # Safety
/// `m` must come from an `lp_measure_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn lp_measure_free(m: *mut LpMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Parses a TOML run configuration (NUL-terminated UTF-8).
///
/// # Safety
/// `config` must be a valid C string and `out` a valid pointer; free the
/// handle with [`lp_pricer_free`].
#[no_mangle]
pub unsafe extern "C" fn lp_pricer_from_config(config: *const c_char, out: *mut *mut LpPricer) -> LpStatus {
    if config.is_null() {
        return null("config");
    }
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let text = CStr::from_ptr(config).to_str().map_err(|_| {
            set_error("configuration is not valid UTF-8");
            LpStatus::InvalidUtf8
        })?;
        let cfg = lift(RunConfig::parse(text))?;
        *out = Box::into_raw(Box::new(LpPricer { config: cfg }));
        Ok(())
    })
}

/// Solves the configured problem and writes `V(0, S₀)`.
///
/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_pricer_price(p: *const LpPricer, out: *mut f64) -> LpStatus {
    if p.is_null() {
        return null("pricer");
    }
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        *out = lift(price_once(&(*p).config))?.0;
        Ok(())
    })
}

/// Closed-form or series reference for the configuration. Writes NaN and
/// returns `Unsupported` when no reference exists.
///
/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_pricer_oracle(p: *const LpPricer, out: *mut f64) -> LpStatus {
    if p.is_null() {
        return null("pricer");
    }
    if out.is_null() {
        return null("out");
    }
    guard(|| match lift(oracle_price(&(*p).config))? {
        Some(v) => {
            *out = v;
            Ok(())
        }
        None => {
            *out = f64::NAN;
            set_error("no reference price for this configuration");
            Err(LpStatus::Unsupported)
        }
    })
}

/// Releases a pricer handle; null is ignored.
///
/// # Safety
/// `p` must come from [`lp_pricer_from_config`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn lp_pricer_free(p: *mut LpPricer) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}
