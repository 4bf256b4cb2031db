use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use poam_ffi::*;

fn grid(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = ((i % 12) as f64, (i / 12) as f64);
        x.extend([a, b]);
        y.push((0.4 * a).sin() * 3.0 + 0.2 * b + 10.0);
    }
    (x, y)
}

fn last_error() -> String {
    let p = poam_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn lifecycle() {
    let method = CString::new("poam").unwrap();
    let cfg = CString::new(r#"{"num_inducing": 24, "batch_size": 32}"#).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(poam_model_create(method.as_ptr(), 2, cfg.as_ptr(), 3, &mut m), PoamStatus::Ok);
        let (x, y) = grid(72);
        assert_eq!(poam_model_pilot(m, x.as_ptr(), y.as_ptr(), 48), PoamStatus::Ok);
        assert_eq!(poam_model_update(m, x[96..].as_ptr(), y[48..].as_ptr(), 24), PoamStatus::Ok);
        let mut k = 0usize;
        assert_eq!(poam_model_num_inducing(m, &mut k), PoamStatus::Ok);
        assert!(k > 0 && k <= 24);

        let mut mean = [0.0; 4];
        let mut latent = [0.0; 4];
        let mut observed = [0.0; 4];
        assert_eq!(poam_model_predict(m, x.as_ptr(), 4, 0, mean.as_mut_ptr(), latent.as_mut_ptr()), PoamStatus::Ok);
        assert_eq!(poam_model_predict(m, x.as_ptr(), 4, 1, mean.as_mut_ptr(), observed.as_mut_ptr()), PoamStatus::Ok);
        for i in 0..4 {
            assert!(latent[i] > 0.0 && observed[i] > latent[i]);
            assert!((mean[i] - y[i]).abs() < 3.0, "{} vs {}", mean[i], y[i]);
        }

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(poam_model_save(m, path.as_ptr()), PoamStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(poam_model_load(path.as_ptr(), &mut back), PoamStatus::Ok);
        let mut mean2 = [0.0; 4];
        let mut var2 = [0.0; 4];
        assert_eq!(poam_model_predict(back, x.as_ptr(), 4, 0, mean2.as_mut_ptr(), var2.as_mut_ptr()), PoamStatus::Ok);
        assert_eq!(mean, mean2);
        assert_eq!(latent, var2);
        poam_model_free(back);
        poam_model_free(m);
        poam_model_free(ptr::null_mut());
    }
}

#[test]
fn error_reporting() {
    unsafe {
        let mut m = ptr::null_mut();
        let bad = CString::new("poam-z-bogus").unwrap();
        assert_eq!(poam_model_create(bad.as_ptr(), 2, ptr::null(), 0, &mut m), PoamStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(last_error().contains("poam-z-bogus"));

        let poam = CString::new("poam").unwrap();
        let cfg = CString::new(r#"{"num_inducing": 0}"#).unwrap();
        assert_eq!(poam_model_create(poam.as_ptr(), 2, cfg.as_ptr(), 0, &mut m), PoamStatus::InvalidArgument);
        let cfg = CString::new(r#"{"warp": 9}"#).unwrap();
        assert_eq!(poam_model_create(poam.as_ptr(), 2, cfg.as_ptr(), 0, &mut m), PoamStatus::InvalidArgument);

        assert_eq!(poam_model_create(ptr::null(), 2, ptr::null(), 0, &mut m), PoamStatus::NullPointer);
        assert_eq!(poam_model_update(ptr::null_mut(), ptr::null(), ptr::null(), 0), PoamStatus::NullPointer);
        assert!(last_error().contains("model"));

        assert_eq!(poam_model_create(poam.as_ptr(), 2, ptr::null(), 0, &mut m), PoamStatus::Ok);
        assert!(poam_last_error_message().is_null());
        // constant targets cannot be standardized
        let x = [0.0, 0.0, 1.0, 1.0, 2.0, 0.5];
        let y = [4.0; 3];
        assert_eq!(poam_model_pilot(m, x.as_ptr(), y.as_ptr(), 3), PoamStatus::Numerical);
        assert_eq!(poam_model_pilot(m, x.as_ptr(), ptr::null(), 3), PoamStatus::NullPointer);

        let missing = CString::new("/nonexistent/dir/m.json").unwrap();
        let mut other = ptr::null_mut();
        assert_eq!(poam_model_load(missing.as_ptr(), &mut other), PoamStatus::Io);
        assert!(other.is_null());
        poam_model_free(m);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/poam.h")).unwrap();
    for name in [
        "poam_model_create",
        "poam_model_pilot",
        "poam_model_update",
        "poam_model_predict",
        "poam_model_num_inducing",
        "poam_model_save",
        "poam_model_load",
        "poam_model_free",
        "poam_last_error_message",
        "typedef struct PoamModel PoamModel",
        "POAM_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

fn static_lib() -> Option<PathBuf> {
    // integration tests live in target/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let lib = dir.join("libpoam_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_the_header() {
    let Some(lib) = static_lib() else {
        panic!("static library not found next to the test binary");
    };
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c_smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
