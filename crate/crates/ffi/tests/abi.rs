use std::ffi::{CStr, CString};
use std::ptr;

use attvar_ffi::*;

/// Rows (a, y, mu0, mu1, pi, sigma0, sigma1) with psi_hat = 7/6 and satt variance 4/9.
const Y: [f64; 4] = [3.0, 1.0, 2.0, 0.0];
const A: [f64; 4] = [1.0, 0.0, 1.0, 0.0];
const PI: [f64; 4] = [0.5, 0.5, 0.25, 0.25];
const MU0: [f64; 4] = [1.0, 1.0, 2.0, 1.0];
const MU1: [f64; 4] = [3.0, 2.5, 2.0, 2.0];
const S0: [f64; 4] = [1.0; 4];
const S1: [f64; 4] = [2.0, 2.0, 1.0, 1.0];

fn last_error() -> String {
    unsafe { CStr::from_ptr(attvar_last_error_message()) }.to_string_lossy().into_owned()
}

fn worked_dataset() -> *mut AttvarDataset {
    let mut ds = ptr::null_mut();
    let st = unsafe { attvar_dataset_new(Y.as_ptr(), A.as_ptr(), ptr::null(), 4, 0, false, &mut ds) };
    assert_eq!(st, AttvarStatus::Ok, "{}", last_error());
    ds
}

fn oracle() -> AttvarOracle {
    AttvarOracle {
        pi: PI.as_ptr(),
        mu0: MU0.as_ptr(),
        mu1: MU1.as_ptr(),
        sigma0: S0.as_ptr(),
        sigma1: S1.as_ptr(),
    }
}

#[test]
fn worked_example_through_the_abi() {
    let ds = worked_dataset();
    assert_eq!(unsafe { attvar_dataset_rows(ds) }, 4);
    let orc = oracle();
    let mut rep = ptr::null_mut();
    let st = unsafe { attvar_estimate(ds, ptr::null(), &orc, &mut rep) };
    assert_eq!(st, AttvarStatus::Ok, "{}", last_error());

    let mut psi = 0.0;
    assert_eq!(unsafe { attvar_report_psi_hat(rep, &mut psi) }, AttvarStatus::Ok);
    assert!((psi - 7.0 / 6.0).abs() < 1e-12);

    let mut v = 0.0;
    let st = unsafe { attvar_report_variance(rep, AttvarEstimandCode::Satt as u32, &mut v) };
    assert_eq!(st, AttvarStatus::Ok);
    assert!((v - 4.0 / 9.0).abs() < 1e-12);

    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(unsafe { attvar_report_ci(rep, AttvarEstimandCode::Patt as u32, &mut lo, &mut hi) }, AttvarStatus::Ok);
    assert!(lo < psi && psi < hi);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { attvar_report_to_json(rep, &mut json) }, AttvarStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.starts_with('{') && text.contains("\"psi_hat\""));
    unsafe {
        attvar_string_free(json);
        attvar_report_free(rep);
        attvar_dataset_free(ds);
    }
}

#[test]
fn error_codes() {
    let mut ds = ptr::null_mut();
    let bad_a = [1.0, 2.0, 0.0, 0.0];
    let st = unsafe { attvar_dataset_new(Y.as_ptr(), bad_a.as_ptr(), ptr::null(), 4, 0, false, &mut ds) };
    assert_eq!(st, AttvarStatus::Validation);
    assert!(ds.is_null());
    assert!(last_error().contains("NonBinaryTreatment"), "{}", last_error());

    let st = unsafe { attvar_dataset_new(ptr::null(), A.as_ptr(), ptr::null(), 4, 0, false, &mut ds) };
    assert_eq!(st, AttvarStatus::NullPointer);

    let ds = worked_dataset();
    let orc = oracle();
    let opts = AttvarEstimateOptions {
        estimand_mask: 1 << (AttvarEstimandCode::Satt as u32),
        ..attvar_estimate_options_default()
    };
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { attvar_estimate(ds, &opts, &orc, &mut rep) }, AttvarStatus::Ok);
    let mut v = 0.0;
    // not requested
    assert_eq!(unsafe { attvar_report_variance(rep, AttvarEstimandCode::Patt as u32, &mut v) }, AttvarStatus::InvalidArgument);
    assert_eq!(unsafe { attvar_report_variance(rep, 99, &mut v) }, AttvarStatus::InvalidArgument);
    assert_eq!(unsafe { attvar_report_psi_hat(rep, ptr::null_mut()) }, AttvarStatus::NullPointer);

    let bad_level = AttvarEstimateOptions {
        ci_level: 1.5,
        ..attvar_estimate_options_default()
    };
    let mut rep2 = ptr::null_mut();
    assert_eq!(unsafe { attvar_estimate(ds, &bad_level, &orc, &mut rep2) }, AttvarStatus::InvalidArgument);
    assert!(rep2.is_null());
    unsafe {
        attvar_report_free(rep);
        attvar_dataset_free(ds);
        attvar_dataset_free(ptr::null_mut());
        attvar_string_free(ptr::null_mut());
    }
}

#[test]
fn simulate_is_deterministic() {
    let spec = CString::new(
        r#"{"schema_version":1,"d":1,"x_dist":"std_normal","propensity_coeffs":[0.0,0.5],
            "mu0_coeffs":[0.0,1.0],"mu1_coeffs":[1.0,1.0],"noise0_sd_coeffs":[1.0,0.0],
            "noise1_sd_coeffs":[1.0,0.0],"dependence":"independent"}"#,
    )
    .unwrap();
    let run = || {
        let mut out = ptr::null_mut();
        let st = unsafe { attvar_simulate_json(spec.as_ptr(), 200, 3, 5, true, &mut out) };
        assert_eq!(st, AttvarStatus::Ok, "{}", last_error());
        let s = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
        unsafe { attvar_string_free(out) };
        s
    };
    assert_eq!(run(), run());

    let bad = CString::new(r#"{"schema_version":7}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { attvar_simulate_json(bad.as_ptr(), 200, 3, 5, true, &mut out) }, AttvarStatus::Parse);
    assert!(out.is_null());
}
