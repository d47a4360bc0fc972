use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use floqskin_ffi::*;

fn last_error() -> String {
    let p = fqs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_model() -> *mut FqsModel {
    let json = CString::new(
        r#"{"u":1.0,"v":1.0,"flux":{"rational":[1,3]},"omega":0.4,"gamma":[-1.2,0.0,0.0],"n_cells":10,"boundary":"OBC"}"#,
    )
    .unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fqs_model_from_json(json.as_ptr(), &mut m) }, FqsStatus::Ok);
    m
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(fqs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn reference_model_round_trips_through_json() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(fqs_model_reference(&mut m), FqsStatus::Ok);
        assert_eq!(fqs_model_n_sites(m), 300);
        let mut s = ptr::null_mut();
        assert_eq!(fqs_model_to_json(m, &mut s), FqsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fqs_model_from_json(s, &mut back), FqsStatus::Ok);
        assert_eq!(fqs_model_n_sites(back), 300);
        fqs_string_free(s);
        fqs_model_free(back);
        fqs_model_free(m);
    }
}

#[test]
fn bad_json_is_a_config_error_with_message() {
    let json = CString::new(r#"{"u":1.0,"bogus":3}"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fqs_model_from_json(json.as_ptr(), &mut m) }, FqsStatus::Config);
    assert!(m.is_null());
    assert!(last_error().contains("model"));
}

#[test]
fn invalid_parameters_are_rejected() {
    let json = CString::new(
        r#"{"u":1.0,"v":1.0,"flux":{"rational":[1,3]},"omega":0.4,"gamma":[-1.2],"n_cells":10}"#,
    )
    .unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fqs_model_from_json(json.as_ptr(), &mut m) }, FqsStatus::Config);
}

#[test]
fn null_arguments() {
    unsafe {
        assert_eq!(fqs_model_reference(ptr::null_mut()), FqsStatus::NullPointer);
        let mut m = ptr::null_mut();
        assert_eq!(fqs_model_from_json(ptr::null(), &mut m), FqsStatus::NullPointer);
        assert_eq!(fqs_model_n_sites(ptr::null()), 0);
        assert_eq!(fqs_spectrum_len(ptr::null()), 0);
        fqs_model_free(ptr::null_mut());
        fqs_spectrum_free(ptr::null_mut());
        fqs_string_free(ptr::null_mut());
    }
}

#[test]
fn bloch_quasienergies_and_buffer_sizing() {
    unsafe {
        let m = small_model();
        let mut len = 0usize;
        let (mut re, mut im) = ([0.0; 2], [0.0; 2]);
        let st = fqs_bloch_quasienergies(m, 0.3, 100, re.as_mut_ptr(), im.as_mut_ptr(), 2, &mut len);
        assert_eq!(st, FqsStatus::BufferTooSmall);
        assert_eq!(len, 3);
        let (mut re, mut im) = ([0.0; 3], [0.0; 3]);
        let st = fqs_bloch_quasienergies(m, 0.3, 100, re.as_mut_ptr(), im.as_mut_ptr(), 3, &mut len);
        assert_eq!(st, FqsStatus::Ok);
        // The trace of the loss fixes the sum of the imaginary parts.
        assert!((im.iter().sum::<f64>() + 1.2).abs() < 1e-8, "{im:?}");
        fqs_model_free(m);
    }
}

#[test]
fn spectrum_handle() {
    unsafe {
        let m = small_model();
        let mut s = ptr::null_mut();
        assert_eq!(fqs_spectrum_compute(m, FqsBoundary::Open, 100, &mut s), FqsStatus::Ok);
        let n = fqs_spectrum_len(s);
        assert_eq!(n, 30);
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(fqs_spectrum_eigenvalue(s, 0, &mut re, &mut im), FqsStatus::Ok);
        assert!(re.is_finite() && im < 0.0);
        assert_eq!(fqs_spectrum_eigenvalue(s, n, &mut re, &mut im), FqsStatus::OutOfRange);
        let mut d = vec![0.0; 30];
        let mut len = 0;
        assert_eq!(fqs_spectrum_density(s, 3, d.as_mut_ptr(), d.len(), &mut len), FqsStatus::Ok);
        assert_eq!(len, 30);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        fqs_spectrum_free(s);
        fqs_model_free(m);
    }
}

#[test]
fn lossy_reference_chain_drifts_left() {
    let init = CString::new(r#"{"kind":"delta","x0":150}"#).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(fqs_model_reference(&mut m), FqsStatus::Ok);
        let (mut v, mut r2) = (f64::NAN, f64::NAN);
        assert_eq!(fqs_drift_velocity(m, init.as_ptr(), 100, 0.3, &mut v, &mut r2), FqsStatus::Ok);
        assert!(v < -0.03 && r2 > 0.9, "v = {v}, R^2 = {r2}");
        let bad = CString::new(r#"{"kind":"delta","x0":500}"#).unwrap();
        assert_eq!(fqs_drift_velocity(m, bad.as_ptr(), 30, 0.3, &mut v, &mut r2), FqsStatus::Config);
        assert!(last_error().contains("x0"));
        fqs_model_free(m);
    }
}

#[test]
fn run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(
        r#"{"experiment":"bands","model":{"u":1.0,"v":1.0,"flux":{"rational":[1,3]},"omega":0.4,"gamma":[-1.2,0.0,0.0],"n_cells":10},"bands":{"n_k":21},"floquet":{"n_steps":60}}"#,
    )
    .unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fqs_run(cfg.as_ptr(), out.as_ptr()) }, FqsStatus::Ok, "{}", last_error());
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("bands.csv").exists());
    let bogus = CString::new("no-such-preset").unwrap();
    assert_eq!(unsafe { fqs_run(bogus.as_ptr(), out.as_ptr()) }, FqsStatus::Config);
}

#[test]
fn header_is_current_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/floqskin.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "fqs_version",
        "fqs_last_error",
        "fqs_model_from_json",
        "fqs_model_free",
        "fqs_spectrum_compute",
        "fqs_spectrum_free",
        "fqs_drift_velocity",
        "fqs_run",
        "FQS_STATUS_BUFFER_TOO_SMALL",
        "typedef struct FqsModel FqsModel;",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(probe) = Command::new("cc").arg("--version").output() else {
        return;
    };
    if !probe.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"floqskin.h\"\nint main(void) { FqsModel *m = 0; FqsStatus s = fqs_model_reference(&m); fqs_model_free(m); return (int)s; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
