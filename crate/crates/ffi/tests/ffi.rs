use std::ffi::CString;
use std::ptr;

use reduced_nisp_ffi::*;

fn last_error() -> String {
    let n = unsafe { nisp_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0u8; n + 1];
    unsafe { nisp_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    String::from_utf8_lossy(&buf[..n]).into_owned()
}

fn small_config() -> *mut NispConfig {
    let cfg = nisp_config_new();
    unsafe {
        assert_eq!(nisp_config_set_dims(cfg, 2, 2), NispStatus::Ok);
        assert_eq!(nisp_config_set_order(cfg, 2, 0), NispStatus::Ok);
        assert_eq!(nisp_config_set_mesh(cfg, 7), NispStatus::Ok);
    }
    cfg
}

fn propagate(cfg: *const NispConfig, method: NispMethod) -> *mut NispResult {
    let mut res = ptr::null_mut();
    let st = unsafe { nisp_propagate(cfg, method as u32, &mut res) };
    assert_eq!(st, NispStatus::Ok, "{}", last_error());
    assert!(!res.is_null());
    res
}

#[test]
fn standard_and_reduced_agree_on_small_poisson() {
    let cfg = small_config();
    let a = propagate(cfg, NispMethod::Standard);
    let b = propagate(cfg, NispMethod::Reduced);
    let (mut iters, mut conv, mut nodes, mut calls) = (0usize, false, 0usize, [0usize; 2]);
    unsafe {
        assert_eq!(
            nisp_result_summary(a, &mut iters, &mut conv, &mut nodes, calls.as_mut_ptr()),
            NispStatus::Ok
        );
    }
    assert!(conv);
    assert!(iters > 0);
    // s = 4, level 2 Smolyak
    assert_eq!(nodes, 41);
    assert_eq!(calls, [iters * nodes, iters * nodes]);

    let (mut rows, mut cols) = (0usize, 0usize);
    unsafe { assert_eq!(nisp_result_shape(a, 1, &mut rows, &mut cols), NispStatus::Ok) };
    assert_eq!(rows, 7 * 7 + 7);
    assert_eq!(cols, 15);
    let mut coeffs = vec![0.0; rows * cols];
    unsafe { assert_eq!(nisp_result_coefficients(a, 1, coeffs.as_mut_ptr(), coeffs.len()), NispStatus::Ok) };
    let (mut mean, mut std) = (vec![0.0; rows], vec![0.0; rows]);
    unsafe { assert_eq!(nisp_result_moments(a, 1, mean.as_mut_ptr(), std.as_mut_ptr(), rows), NispStatus::Ok) };
    for k in 0..rows {
        assert_eq!(mean[k], coeffs[k]);
        let tail: f64 = (1..cols).map(|j| coeffs[j * rows + k].powi(2)).sum();
        assert!((std[k] - tail.sqrt()).abs() <= 1e-12 * (1.0 + std[k]));
    }

    let mut err = f64::NAN;
    unsafe { assert_eq!(nisp_result_relative_error(b, a, &mut err), NispStatus::Ok) };
    assert!(err < 1e-2, "reduced vs standard {err}");
    unsafe { assert_eq!(nisp_result_relative_error(a, a, &mut err), NispStatus::Ok) };
    assert_eq!(err, 0.0);
    unsafe {
        nisp_result_free(a);
        nisp_result_free(b);
        nisp_config_free(cfg);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(nisp_propagate(ptr::null(), 0, &mut res), NispStatus::NullPointer);
        assert!(last_error().contains("config"));
        let cfg = small_config();
        assert_eq!(nisp_propagate(cfg, 9, &mut res), NispStatus::InvalidArgument);
        assert!(res.is_null());
        assert_eq!(nisp_config_set_order(cfg, 3, 2), NispStatus::Ok);
        assert_eq!(nisp_propagate(cfg, 0, &mut res), NispStatus::InvalidArgument);
        assert!(last_error().contains("below"), "{}", last_error());
        nisp_config_free(cfg);
    }
}

#[test]
fn toml_config_and_buffer_checks() {
    let text = CString::new("problem = \"custom\"\ns1 = 2\ns2 = 2\np = 1\n").unwrap();
    let mut cfg = ptr::null_mut();
    unsafe { assert_eq!(nisp_config_from_toml(text.as_ptr(), &mut cfg), NispStatus::Ok) };
    let res = propagate(cfg, NispMethod::Standard);
    let mut small = [0.0; 1];
    unsafe {
        assert_eq!(nisp_result_coefficients(res, 2, small.as_mut_ptr(), 1), NispStatus::BufferTooSmall);
        assert_eq!(nisp_result_coefficients(res, 3, small.as_mut_ptr(), 1), NispStatus::InvalidArgument);
        nisp_result_free(res);
        nisp_config_free(cfg);
    }

    let bad = CString::new("p = \"two\"").unwrap();
    let mut cfg = ptr::null_mut();
    unsafe { assert_eq!(nisp_config_from_toml(bad.as_ptr(), &mut cfg), NispStatus::InvalidArgument) };
    assert!(cfg.is_null());
}

#[test]
fn null_handles_are_safe_to_free() {
    unsafe {
        nisp_config_free(ptr::null_mut());
        nisp_result_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/reduced_nisp.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["nisp_propagate", "nisp_result_free", "NISP_STATUS_NO_CONVERGENCE", "typedef struct NispResult"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output() else {
        eprintln!("no C compiler, skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
