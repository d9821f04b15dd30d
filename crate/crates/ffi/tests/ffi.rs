use std::ffi::{CStr, CString};
use std::ptr;

use levy_pide_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let mut len = 0usize;
    let st = unsafe { lp_last_error_message(buf.as_mut_ptr(), buf.len(), &mut len) };
    assert_eq!(st, LpStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn bs_price_matches_reference() {
    let mut v = 0.0;
    let st = unsafe { lp_bs_price(100.0, 100.0, 1.0, 0.05, 0.2, 1, &mut v) };
    assert_eq!(st, LpStatus::Ok);
    assert!((v - 10.450583572185565).abs() < 1e-10);
}

#[test]
fn bad_sigma_reports_domain_error() {
    let mut v = 0.0;
    let st = unsafe { lp_bs_price(100.0, 100.0, 1.0, 0.05, -0.2, 1, &mut v) };
    assert_eq!(st, LpStatus::ParameterDomain);
    assert!(!last_error().is_empty());
}

#[test]
fn null_out_pointer() {
    let st = unsafe { lp_bs_price(100.0, 100.0, 1.0, 0.05, 0.2, 1, ptr::null_mut()) };
    assert_eq!(st, LpStatus::NullPointer);
    assert!(last_error().contains("out"));
}

#[test]
fn small_error_buffer() {
    let mut v = 0.0;
    unsafe { lp_bs_price(100.0, 100.0, 1.0, 0.05, -1.0, 1, &mut v) };
    let mut buf = [0 as std::ffi::c_char; 2];
    let mut len = 0usize;
    let st = unsafe { lp_last_error_message(buf.as_mut_ptr(), buf.len(), &mut len) };
    assert_eq!(st, LpStatus::BufferTooSmall);
    assert!(len > 2);
}

#[test]
fn merton_series_through_abi() {
    let mut v = 0.0;
    let st = unsafe { lp_merton_series(100.0, 100.0, 1.0, 0.05, 0.2, 1, 0.5, -0.1, 0.2, 60, &mut v) };
    assert_eq!(st, LpStatus::Ok);
    assert!((v - 12.164203195593).abs() < 1e-9);
}

#[test]
fn bessel_kernel_is_positive() {
    let x = [0.7];
    let mut v = 0.0;
    let st = unsafe { lp_bessel_kernel(1.0, 1, x.as_ptr(), &mut v) };
    assert_eq!(st, LpStatus::Ok);
    assert!(v > 0.0 && v.is_finite());
}

#[test]
fn measure_handle_lifecycle() {
    let mut m: *mut LpMeasure = ptr::null_mut();
    assert_eq!(unsafe { lp_measure_merton(0.5, -0.1, 0.2, &mut m) }, LpStatus::Ok);
    assert!(!m.is_null());
    let mut d = 0.0;
    assert_eq!(unsafe { lp_measure_delta(m, &mut d) }, LpStatus::Ok);
    let exact = 0.5 * ((-0.1f64 + 0.02).exp() - 1.0 + 0.1);
    assert!((d - exact).abs() < 1e-8, "{d} vs {exact}");
    let mut h = 0.0;
    assert_eq!(unsafe { lp_measure_density(m, -0.1, &mut h) }, LpStatus::Ok);
    assert!(h > 0.0);
    unsafe { lp_measure_free(m) };
    unsafe { lp_measure_free(ptr::null_mut()) };

    let mut k: *mut LpMeasure = ptr::null_mut();
    assert_eq!(
        unsafe { lp_measure_kou(1.0, 1.5, 10.0, 5.0, &mut k) },
        LpStatus::ParameterDomain
    );
    assert!(k.is_null());
}

#[test]
fn pricer_from_config() {
    let text = CString::new(
        "[market]\nspot = 100.0\nstrike = 100.0\nmaturity_years = 1.0\nrate_per_annum = 0.05\nsigma = 0.2\noption = \"call\"\n\
         [measure]\nfamily = \"merton\"\nintensity_per_annum = 0.5\njump_mean = -0.1\njump_std = 0.2\n\
         [grid]\npoints = 512\n[scheme]\nsteps = 100\n",
    )
    .unwrap();
    let mut p: *mut LpPricer = ptr::null_mut();
    assert_eq!(unsafe { lp_pricer_from_config(text.as_ptr(), &mut p) }, LpStatus::Ok);
    let (mut v, mut o) = (0.0, 0.0);
    assert_eq!(unsafe { lp_pricer_price(p, &mut v) }, LpStatus::Ok);
    assert_eq!(unsafe { lp_pricer_oracle(p, &mut o) }, LpStatus::Ok);
    assert!(((v - o) / o).abs() < 1e-3, "{v} vs {o}");
    unsafe { lp_pricer_free(p) };
}

#[test]
fn pricer_rejects_unknown_key() {
    let text = CString::new("[market]\nspot = 1.0\nbogus = 2\n").unwrap();
    let mut p: *mut LpPricer = ptr::null_mut();
    let st = unsafe { lp_pricer_from_config(text.as_ptr(), &mut p) };
    assert_eq!(st, LpStatus::Config);
    assert!(p.is_null());
}

#[test]
fn status_strings_are_static() {
    let s = unsafe { CStr::from_ptr(lp_status_string(LpStatus::BlowUp)) };
    assert_eq!(s.to_str().unwrap(), "solution blew up");
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/levy_pide.h")).unwrap();
    for name in [
        "lp_status_string",
        "lp_last_error_message",
        "lp_bs_price",
        "lp_merton_series",
        "lp_bessel_kernel",
        "lp_measure_merton",
        "lp_measure_kou",
        "lp_measure_delta",
        "lp_measure_density",
        "lp_measure_free",
        "lp_pricer_from_config",
        "lp_pricer_price",
        "lp_pricer_oracle",
        "lp_pricer_free",
        "typedef struct LpPricer LpPricer",
        "LP_STATUS_PANIC = 15",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
