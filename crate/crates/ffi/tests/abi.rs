use std::ffi::CStr;
use std::ptr;

use qmle_ffi::*;

const THETA: [f64; 3] = [1.0759, 4.0, 5.0];

fn model() -> *mut QmleModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { qmle_model_new([4.0, 4.0].as_ptr(), 2, &mut m) }, QmleStatus::Ok);
    m
}

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe {
        qmle_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(qmle_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn pmf_matches_library() {
    let m = model();
    let mut out = [0.0; 4];
    let st = unsafe { qmle_cell_pmf(m, THETA.as_ptr(), 3, [20.0, 20.0].as_ptr(), 2, out.as_mut_ptr(), 4) };
    assert_eq!(st, QmleStatus::Ok);
    let theta = qmle::ParameterVector::from_vec(THETA.to_vec()).unwrap();
    let bank = qmle::QuantizerBank::new(&[20.0, 20.0]).unwrap();
    let expect = qmle::cell_pmf(&theta, &bank, &qmle::ModelSpec::two_sensor_default()).unwrap();
    assert_eq!(out.to_vec(), expect.probs);
    assert_eq!(unsafe { qmle_model_n_params(m) }, 3);
    unsafe { qmle_model_free(m) };
}

#[test]
fn short_buffer_and_bad_theta_are_reported() {
    let m = model();
    let mut out = [0.0; 3];
    let st = unsafe { qmle_cell_pmf(m, THETA.as_ptr(), 3, [20.0, 20.0].as_ptr(), 2, out.as_mut_ptr(), 3) };
    assert_eq!(st, QmleStatus::BufferTooSmall);
    assert!(last_error().contains("needs 4"));

    let bad = [-1.0, 4.0, 5.0];
    let mut out = [0.0; 4];
    let st = unsafe { qmle_cell_pmf(m, bad.as_ptr(), 3, [20.0, 20.0].as_ptr(), 2, out.as_mut_ptr(), 4) };
    assert_eq!(st, QmleStatus::InvalidParameter);
    let st = unsafe { qmle_cell_pmf(m, THETA.as_ptr(), 2, [20.0, 20.0].as_ptr(), 2, out.as_mut_ptr(), 4) };
    assert_eq!(st, QmleStatus::InvalidParameter);
    unsafe { qmle_model_free(m) };
}

#[test]
fn null_handles_are_rejected() {
    let mut out = [0.0; 4];
    let st = unsafe { qmle_cell_pmf(ptr::null(), THETA.as_ptr(), 3, [20.0, 20.0].as_ptr(), 2, out.as_mut_ptr(), 4) };
    assert_eq!(st, QmleStatus::NullPointer);
    assert!(last_error().contains("model"));
    assert_eq!(unsafe { qmle_model_new([4.0].as_ptr(), 1, ptr::null_mut()) }, QmleStatus::NullPointer);
    unsafe {
        qmle_model_free(ptr::null_mut());
        qmle_dataset_free(ptr::null_mut());
    }
}

#[test]
fn scalar_combination() {
    let mut v = 0.0;
    assert_eq!(unsafe { qmle_combine_scalar([3e-3, 3.0, 3.3].as_ptr(), ptr::null(), 3, &mut v) }, QmleStatus::Ok);
    assert!((v - 0.4760).abs() < 5e-5);
    assert_eq!(unsafe { qmle_combine_scalar([3.0, 3.3].as_ptr(), ptr::null(), 2, &mut v) }, QmleStatus::Ok);
    assert!((v - 0.3175).abs() < 5e-5);
    let st = unsafe { qmle_combine_scalar([3.0, 3.3].as_ptr(), [0.7, 0.7].as_ptr(), 2, &mut v) };
    assert_eq!(st, QmleStatus::InvalidParameter);
}

#[test]
fn fim_and_crlb_agree_for_one_bank() {
    let m = model();
    let t = [20.0, 20.0];
    let mut fim = [0.0; 9];
    assert_eq!(unsafe { qmle_fim(m, THETA.as_ptr(), 3, t.as_ptr(), 2, fim.as_mut_ptr(), 9) }, QmleStatus::Ok);
    let mut cov = [0.0; 9];
    let mut cond = 0.0;
    let st = unsafe { qmle_crlb(m, THETA.as_ptr(), 3, t.as_ptr(), 1, ptr::null(), cov.as_mut_ptr(), 9, &mut cond) };
    assert_eq!(st, QmleStatus::Ok);
    assert!(cond >= 1.0);
    for i in 0..3 {
        for j in 0..3 {
            let p: f64 = (0..3).map(|k| fim[i * 3 + k] * cov[k * 3 + j]).sum();
            assert!((p - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8, "{i}{j} {p}");
        }
    }
    unsafe { qmle_model_free(m) };
}

#[test]
fn fit_recovers_parameters_from_expected_counts() {
    let m = model();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { qmle_dataset_new(2, &mut ds) }, QmleStatus::Ok);
    for t in [25.0, 20.0, 15.0, 10.0] {
        let mut pmf = [0.0; 4];
        unsafe { qmle_cell_pmf(m, THETA.as_ptr(), 3, [t, t].as_ptr(), 2, pmf.as_mut_ptr(), 4) };
        let counts: Vec<u64> = pmf.iter().map(|p| (p * 1e6).round() as u64).collect();
        assert_eq!(unsafe { qmle_dataset_add_bank(ds, [t, t].as_ptr(), 2, counts.as_ptr(), 4) }, QmleStatus::Ok);
    }
    let mut theta = [0.0; 3];
    let mut summary = QmleFitSummary::default();
    assert_eq!(unsafe { qmle_fit(m, ds, 7, theta.as_mut_ptr(), 3, &mut summary) }, QmleStatus::Ok);
    assert!(summary.converged && !summary.at_boundary);
    for (a, b) in theta.iter().zip(THETA) {
        assert!((a - b).abs() < 0.02, "{theta:?}");
    }
    unsafe {
        qmle_dataset_free(ds);
        qmle_model_free(m);
    }
}

#[test]
fn empty_dataset_and_mismatched_counts() {
    let m = model();
    let mut ds = ptr::null_mut();
    unsafe { qmle_dataset_new(2, &mut ds) };
    let mut theta = [0.0; 3];
    let st = unsafe { qmle_fit(m, ds, 0, theta.as_mut_ptr(), 3, ptr::null_mut()) };
    assert_eq!(st, QmleStatus::EmptyData);
    let st = unsafe { qmle_dataset_add_bank(ds, [1.0, 1.0].as_ptr(), 2, [1u64, 2].as_ptr(), 2) };
    assert_eq!(st, QmleStatus::InvalidParameter);
    unsafe {
        qmle_dataset_free(ds);
        qmle_model_free(m);
    }
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qmle.h")).unwrap();
    for f in [
        "qmle_last_error_message",
        "qmle_version",
        "qmle_model_new",
        "qmle_model_free",
        "qmle_model_n_params",
        "qmle_cell_pmf",
        "qmle_fim",
        "qmle_crlb",
        "qmle_combine_scalar",
        "qmle_dataset_new",
        "qmle_dataset_free",
        "qmle_dataset_add_bank",
        "qmle_fit",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f}");
    }
    assert!(h.contains("typedef struct QmleModel QmleModel;"));
}
