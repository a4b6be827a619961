use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use explasso_ffi::*;

fn last_error() -> String {
    let p = explasso_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn model(spec: &str) -> *mut ExplassoModel {
    let spec = CString::new(spec).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { explasso_model_new(spec.as_ptr(), &mut m) }, ExplassoStatus::Ok);
    m
}

/// y = 2 x₁ + small noise on a deterministic 30 × 3 design.
fn dataset(intercept: i32) -> *mut ExplassoDataset {
    let n = 30;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let t = i as f64;
        let row = [(t * 0.37).sin(), (t * 1.3).cos(), ((t * 0.71).sin() * 3.0).tanh()];
        y.push(2.0 * row[0] + 0.1 * (t * 2.9).sin());
        x.extend_from_slice(&row);
    }
    let mut ds = ptr::null_mut();
    let st = unsafe { explasso_dataset_new(y.as_ptr(), x.as_ptr(), n, 3, ptr::null(), intercept, &mut ds) };
    assert_eq!(st, ExplassoStatus::Ok);
    ds
}

#[test]
fn model_parsing_and_errors() {
    let m = model("subbotin:1.5");
    unsafe { explasso_model_free(m) };
    let bad = CString::new("cauchy").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { explasso_model_new(bad.as_ptr(), &mut m) }, ExplassoStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().contains("cauchy"));
    assert_eq!(unsafe { explasso_model_new(ptr::null(), &mut m) }, ExplassoStatus::NullPointer);
    // success clears the message
    let m = model("gaussian");
    assert!(explasso_last_error().is_null());
    unsafe { explasso_model_free(m) };
    unsafe { explasso_model_free(ptr::null_mut()) };
}

#[test]
fn fisher_info_of_gaussian() {
    let m = model("gaussian");
    let (mut info, mut inv) = ([0.0; 4], [0.0; 4]);
    assert_eq!(unsafe { explasso_fisher_info(m, info.as_mut_ptr(), inv.as_mut_ptr()) }, ExplassoStatus::Ok);
    for (got, want) in info.iter().zip([2.0, 0.0, 0.0, 1.0]) {
        assert!((got - want).abs() < 1e-8);
    }
    for (got, want) in inv.iter().zip([0.5, 0.0, 0.0, 1.0]) {
        assert!((got - want).abs() < 1e-8);
    }
    assert_eq!(
        unsafe { explasso_fisher_info(ptr::null(), info.as_mut_ptr(), inv.as_mut_ptr()) },
        ExplassoStatus::NullPointer
    );
    unsafe { explasso_model_free(m) };
}

#[test]
fn fit_round_trip() {
    let m = model("gaussian");
    let ds = dataset(1);
    assert_eq!(unsafe { explasso_dataset_n(ds) }, 30);
    assert_eq!(unsafe { explasso_dataset_p(ds) }, 4);
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { explasso_fit(ds, m, 0.3, 0.0, 1, 0, &mut fit) }, ExplassoStatus::Ok);
    assert_eq!(unsafe { explasso_fit_converged(fit) }, 1);
    assert_eq!(unsafe { explasso_fit_len(fit) }, 4);
    let mut beta = [0.0; 4];
    assert_eq!(unsafe { explasso_fit_beta(fit, beta.as_mut_ptr(), 4) }, ExplassoStatus::Ok);
    assert!(beta[1] > 1.0, "{beta:?}");
    assert!(unsafe { explasso_fit_sigma(fit) } > 0.0);
    assert!(unsafe { explasso_fit_kkt_residual(fit) }.is_finite());
    assert!(unsafe { explasso_fit_objective(fit) }.is_finite());
    let mut short = [0.0; 2];
    assert_eq!(unsafe { explasso_fit_beta(fit, short.as_mut_ptr(), 2) }, ExplassoStatus::Dimension);
    unsafe { explasso_fit_free(fit) };

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { explasso_fit(ds, m, -1.0, 0.0, 1, 0, &mut bad) }, ExplassoStatus::InvalidArgument);
    assert!(last_error().contains("lambda"));
    assert!(bad.is_null());
    assert!(unsafe { explasso_fit_sigma(ptr::null()) }.is_nan());
    unsafe {
        explasso_dataset_free(ds);
        explasso_model_free(m);
    }
}

#[test]
fn dataset_validation() {
    let y = [1.0, 2.0, f64::NAN];
    let x = [1.0, 2.0, 3.0];
    let mut ds = ptr::null_mut();
    let st = unsafe { explasso_dataset_new(y.as_ptr(), x.as_ptr(), 3, 1, ptr::null(), 0, &mut ds) };
    assert_eq!(st, ExplassoStatus::InvalidArgument);
    let st = unsafe { explasso_dataset_new(ptr::null(), x.as_ptr(), 3, 1, ptr::null(), 0, &mut ds) };
    assert_eq!(st, ExplassoStatus::NullPointer);
    let path = CString::new("/nonexistent/file.csv").unwrap();
    assert_eq!(unsafe { explasso_dataset_from_csv(path.as_ptr(), 1, &mut ds) }, ExplassoStatus::Io);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("d.csv");
    std::fs::write(&file, "y,a\n1,oops\n2,3\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { explasso_dataset_from_csv(path.as_ptr(), 1, &mut ds) }, ExplassoStatus::Parse);
    assert!(ds.is_null());
}

#[test]
fn calibration_handles() {
    let m = model("logistic");
    let ds = dataset(1);
    let mut cal = ptr::null_mut();
    assert_eq!(unsafe { explasso_calibrate(ds, m, 0.05, 0.1, 400, 9, &mut cal) }, ExplassoStatus::Ok);
    let (q, l) = unsafe { (explasso_calibration_quantile(cal), explasso_calibration_lambda(cal)) };
    assert!((l - q / 0.9).abs() <= 1e-12 * l);
    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(unsafe { explasso_calibration_bracket(cal, &mut lo, &mut hi) }, ExplassoStatus::Ok);
    assert!(lo <= q && q <= hi);
    let len = unsafe { explasso_calibration_len(cal) };
    assert_eq!(len, 400);
    let mut samples = vec![0.0; len];
    assert_eq!(unsafe { explasso_calibration_samples(cal, samples.as_mut_ptr(), len) }, ExplassoStatus::Ok);
    assert!(samples.windows(2).all(|w| w[0] <= w[1]));
    assert!(samples.contains(&q));
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { explasso_calibrate(ds, m, 0.05, 0.1, 10, 9, &mut again) }, ExplassoStatus::InvalidArgument);
    unsafe {
        explasso_calibration_free(cal);
        explasso_dataset_free(ds);
        explasso_model_free(m);
    }
}

#[test]
fn errors_are_thread_local() {
    let bad = CString::new("nope").unwrap();
    let mut m = ptr::null_mut();
    assert_ne!(unsafe { explasso_model_new(bad.as_ptr(), &mut m) }, ExplassoStatus::Ok);
    std::thread::spawn(|| assert!(explasso_last_error().is_null())).join().unwrap();
    assert!(last_error().contains("nope"));
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(manifest_dir().join("include/explasso.h")).unwrap();
    for name in [
        "explasso_last_error",
        "explasso_model_new",
        "explasso_dataset_new",
        "explasso_calibrate",
        "explasso_fit",
        "explasso_fit_beta",
        "explasso_fit_free",
        "typedef struct ExplassoFit ExplassoFit",
        "EXPLASSO_STATUS_PANIC = 8",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    // the test binary lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libexplasso_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "explasso.h"
int main(void) {
    double y[6] = {1.0, 2.1, 2.9, 4.2, 5.0, 6.1};
    double x[6] = {1, 2, 3, 4, 5, 6};
    ExplassoModel *m = NULL;
    ExplassoDataset *d = NULL;
    ExplassoFit *f = NULL;
    if (explasso_model_new("gaussian", &m) != EXPLASSO_STATUS_OK) return 1;
    if (explasso_dataset_new(y, x, 6, 1, NULL, 1, &d) != EXPLASSO_STATUS_OK) return 2;
    if (explasso_fit(d, m, 1000.0, 0.0, 1, 0, &f) != EXPLASSO_STATUS_OK) return 3;
    double beta[2];
    if (explasso_fit_beta(f, beta, 2) != EXPLASSO_STATUS_OK) return 4;
    if (beta[1] != 0.0) return 5;
    if (explasso_model_new("bogus", &m) != EXPLASSO_STATUS_INVALID_ARGUMENT) return 6;
    if (explasso_last_error() == NULL) return 7;
    printf("%.6f\n", beta[0]);
    explasso_fit_free(f);
    explasso_dataset_free(d);
    explasso_model_free(m);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let mean: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((mean - 3.55).abs() < 1e-5);
}
