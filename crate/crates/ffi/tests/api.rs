use std::ptr;

use smallgain_ffi::*;

fn model(n: i32, u: [f64; 2]) -> *mut SgModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sg_model_new(n, u[0], u[1], 0.5, &mut m) }, SgStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { sg_last_error_message(buf.as_mut_ptr().cast(), buf.len()) };
    buf.truncate(n.min(255));
    String::from_utf8(buf).unwrap()
}

#[test]
fn g_and_h_match_closed_forms() {
    let m = model(2, [0.0, 0.0]);
    let pi2 = std::f64::consts::PI.powi(2);
    let (mut g, mut h) = (0.0, 0.0);
    unsafe {
        assert_eq!(sg_g(m, 0.0, &mut g), SgStatus::Ok);
        assert_eq!(g, 0.0);
        assert_eq!(sg_h(m, pi2, &mut h), SgStatus::Ok);
        sg_model_free(m);
    }
    // sin² contributes nothing at r = π², leaving 1 + 2e^{-2π²}.
    assert!((h - 1.0 - 2.0 * (-2.0 * pi2).exp()).abs() < 1e-12);
}

#[test]
fn origin_is_an_equilibrium_with_divergence_minus_100() {
    let m = model(2, [0.0, 0.0]);
    let mut f = [1.0; 2];
    let mut d = 0.0;
    unsafe {
        assert_eq!(sg_field(m, 0.0, 0.0, 0.0, 0.0, f.as_mut_ptr()), SgStatus::Ok);
        assert_eq!(sg_divergence(m, SgDensity::ExpSum, 0.0, 0.0, 0.0, 0.0, &mut d), SgStatus::Ok);
        sg_model_free(m);
    }
    assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12);
    assert!((d + 100.0).abs() < 1e-9, "{d}");
}

#[test]
fn equilibria_are_listed() {
    let m = model(2, [0.0, 0.0]);
    let mut count = 0;
    let mut r = 0.0;
    unsafe {
        assert_eq!(sg_equilibrium_count(m, &mut count), SgStatus::Ok);
        assert_eq!(sg_equilibrium(m, 0, &mut r), SgStatus::Ok);
        assert_eq!(sg_equilibrium(m, count, &mut r), SgStatus::OutOfRange);
        sg_model_free(m);
    }
    assert_eq!(count, 3);
    assert!(last_error().contains("equilibrium"));
}

#[test]
fn sgc_intervals_cross_the_boundary() {
    let m = model(2, [0.0, 0.0]);
    let mut a = ptr::null_mut();
    let mut count = 0;
    let mut ivs = Vec::new();
    unsafe {
        assert_eq!(sg_sgc_new(m, 0.0, 0.0, &mut a), SgStatus::Ok);
        assert_eq!(sg_sgc_count(a, &mut count), SgStatus::Ok);
        for i in 0..count {
            let mut iv = SgInterval { lo: 0.0, hi: 0.0, right_open: false };
            assert_eq!(sg_sgc_interval(a, i, &mut iv), SgStatus::Ok);
            ivs.push(iv);
        }
        let mut iv = ivs[0];
        assert_eq!(sg_sgc_interval(a, count, &mut iv), SgStatus::OutOfRange);
        sg_sgc_free(a);
        sg_model_free(m);
    }
    assert_eq!(count, 4);
    assert_eq!(ivs[0].lo, 0.0);
    assert!(ivs.windows(2).all(|w| w[0].hi < w[1].lo));
    assert!(ivs[3].right_open && !ivs[0].right_open);
}

#[test]
fn integration_and_sample_access() {
    let m = model(2, [0.0, 0.0]);
    let mut t = ptr::null_mut();
    let mut len = 0;
    let (mut time, mut x1, mut x2) = (0.0, 0.0, 0.0);
    let mut escaped = true;
    unsafe {
        assert_eq!(sg_integrate(m, 1.0, 1.0, 0.0, 0.0, 5.0, 1e-3, 100, &mut t), SgStatus::Ok);
        assert_eq!(sg_trajectory_len(t, &mut len), SgStatus::Ok);
        assert_eq!(sg_trajectory_point(t, len - 1, &mut time, &mut x1, &mut x2), SgStatus::Ok);
        assert_eq!(sg_trajectory_escaped(t, &mut escaped), SgStatus::Ok);
        assert_eq!(sg_trajectory_point(t, len, &mut time, &mut x1, &mut x2), SgStatus::OutOfRange);
        sg_trajectory_free(t);
        sg_model_free(m);
    }
    assert_eq!(len, 51);
    assert!((time - 5.0).abs() < 1e-9);
    assert!(!escaped);
    assert!(x1.abs() < 1.0 && x1 == x2);
}

#[test]
fn invalid_arguments_report_codes_and_messages() {
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(sg_model_new(2, 0.0, 0.0, 1.5, &mut m), SgStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(last_error().contains("delta") || last_error().contains("δ"), "{}", last_error());
        assert_eq!(sg_model_new(2, 0.0, 0.0, 0.5, ptr::null_mut()), SgStatus::NullPointer);
        let mut g = 0.0;
        assert_eq!(sg_g(ptr::null(), 1.0, &mut g), SgStatus::NullPointer);
        assert!(last_error().contains("null"));
        let m = model(1, [0.0, 0.0]);
        let mut t = ptr::null_mut();
        assert_eq!(sg_integrate(m, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 1, &mut t), SgStatus::InvalidArgument);
        sg_model_free(m);
        sg_model_free(ptr::null_mut());
        sg_sgc_free(ptr::null_mut());
        sg_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn error_buffer_truncates_and_reports_length() {
    let mut g = 0.0;
    unsafe {
        sg_g(ptr::null(), 1.0, &mut g);
        let full = sg_last_error_message(ptr::null_mut(), 0);
        let mut small = [1i8 as std::ffi::c_char; 4];
        assert_eq!(sg_last_error_message(small.as_mut_ptr(), small.len()), full);
        assert_eq!(small[3], 0);
        assert!(full > 3);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { std::ffi::CStr::from_ptr(sg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
