use std::ffi::{CStr, CString};
use std::ptr;

use smib_observer_ffi::*;

fn last_error() -> String {
    let p = smib_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn preset_scenario(horizon: f64) -> *mut SmibScenario {
    let name = CString::new("smib_vi_a").unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(smib_scenario_from_preset(name.as_ptr(), &mut s), SmibStatus::Ok);
        assert_eq!(smib_scenario_set_horizon(s, horizon), SmibStatus::Ok);
    }
    s
}

#[test]
fn run_and_read_columns() {
    let s = preset_scenario(0.1);
    let mut t = ptr::null_mut();
    unsafe {
        assert_eq!(smib_run(s, &mut t), SmibStatus::Ok);
        let mut n = 0;
        assert_eq!(smib_trajectory_len(t, &mut n), SmibStatus::Ok);
        assert_eq!(n, 101);

        let col = CString::new("x3").unwrap();
        let mut v = 0.0;
        assert_eq!(smib_trajectory_value(t, col.as_ptr(), 0, &mut v), SmibStatus::Ok);
        assert_eq!(v, 0.4);

        let mut buf = vec![0.0; n];
        assert_eq!(smib_trajectory_column(t, col.as_ptr(), buf.as_mut_ptr(), n), SmibStatus::Ok);
        assert_eq!(buf[0], 0.4);
        assert!(buf.iter().all(|x| x.is_finite()));
        assert_eq!(smib_trajectory_column(t, col.as_ptr(), buf.as_mut_ptr(), n - 1), SmibStatus::OutOfRange);

        let grad = CString::new("grad_x3_hat").unwrap();
        assert_eq!(smib_trajectory_value(t, grad.as_ptr(), 5, &mut v), SmibStatus::Ok);
        assert!(v.is_nan());

        assert_eq!(smib_trajectory_value(t, col.as_ptr(), n, &mut v), SmibStatus::OutOfRange);
        let bad = CString::new("x9").unwrap();
        assert_eq!(smib_trajectory_value(t, bad.as_ptr(), 0, &mut v), SmibStatus::UnknownColumn);
        assert!(last_error().contains("x9"));

        smib_trajectory_free(t);
        smib_scenario_free(s);
    }
}

#[test]
fn config_errors_are_reported() {
    let mut s = ptr::null_mut();
    let empty = CString::new("").unwrap();
    assert_eq!(unsafe { smib_scenario_from_config(empty.as_ptr(), &mut s) }, SmibStatus::ConfigError);
    assert!(s.is_null());
    assert!(last_error().contains("integration.step"));

    let name = CString::new("nope").unwrap();
    assert_eq!(unsafe { smib_scenario_from_preset(name.as_ptr(), &mut s) }, SmibStatus::ConfigError);
    assert_eq!(unsafe { smib_scenario_from_config(ptr::null(), &mut s) }, SmibStatus::NullPointer);

    let raw = [0xffu8, 0];
    assert_eq!(unsafe { smib_scenario_from_config(raw.as_ptr().cast(), &mut s) }, SmibStatus::InvalidUtf8);
}

#[test]
fn invalid_horizon_rejected_and_scenario_kept() {
    let s = preset_scenario(0.05);
    assert_eq!(unsafe { smib_scenario_set_horizon(s, -1.0) }, SmibStatus::InvalidParameters);
    let mut t = ptr::null_mut();
    unsafe {
        assert_eq!(smib_run(s, &mut t), SmibStatus::Ok);
        let mut n = 0;
        smib_trajectory_len(t, &mut n);
        assert_eq!(n, 51);
        smib_trajectory_free(t);
        smib_scenario_free(s);
    }
}

#[test]
fn success_clears_last_error() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { smib_scenario_from_config(ptr::null(), &mut s) }, SmibStatus::NullPointer);
    assert!(!smib_last_error().is_null());
    let v = [0.3, 1.0, -2.0];
    let (mut j, mut r) = ([0.0; 9], 0.0);
    assert_eq!(unsafe { smib_certificate(v.as_ptr(), 1.5, j.as_mut_ptr(), &mut r) }, SmibStatus::Ok);
    assert!(smib_last_error().is_null());
}

#[test]
fn measure_matches_library() {
    let x = [0.1, 0.2, 0.4, 0.3];
    let mut y = [0.0; 6];
    assert_eq!(unsafe { smib_measure(x.as_ptr(), 0.0, 1.0, 0.0608, y.as_mut_ptr()) }, SmibStatus::Ok);
    let want = smib_observer::pmu::measure(&smib_observer::PlantState::from_slice(&x), 0.0, 1.0, 0.0608).unwrap();
    assert_eq!(y, want.to_array());
    assert_eq!(unsafe { smib_measure(x.as_ptr(), 0.0, 0.0, 0.0608, y.as_mut_ptr()) }, SmibStatus::InvalidParameters);
}

#[test]
fn certificate_has_null_direction() {
    let v = [0.7, -3.0, 2.5];
    let (mut j, mut r) = ([0.0; 9], f64::NAN);
    assert_eq!(unsafe { smib_certificate(v.as_ptr(), 1.2, j.as_mut_ptr(), &mut r) }, SmibStatus::Ok);
    assert!(r <= 1e-12);
    let w = [1.0, -v[2], v[1]];
    for row in j.chunks(3) {
        assert!((row[0] * w[0] + row[1] * w[1] + row[2] * w[2]).abs() <= 1e-12);
    }
}

#[test]
fn mix_recovers_scaled_parameters() {
    let psi: Vec<f64> = (0..25).map(|k| ((k * 7 + 3) % 11) as f64 - 5.0 + if k % 6 == 0 { 9.0 } else { 0.0 }).collect();
    let theta = [0.5, -1.0, 2.0, 0.25, 1.5];
    let y: Vec<f64> = (0..5).map(|i| (0..5).map(|k| psi[5 * i + k] * theta[k]).sum()).collect();
    let (mut delta, mut cal_y) = (0.0, [0.0; 5]);
    assert_eq!(unsafe { smib_mix(psi.as_ptr(), y.as_ptr(), &mut delta, cal_y.as_mut_ptr()) }, SmibStatus::Ok);
    assert!(delta.abs() > 1.0);
    for k in 0..5 {
        assert!((cal_y[k] - delta * theta[k]).abs() <= 1e-9 * delta.abs());
    }
    assert_eq!(unsafe { smib_mix(ptr::null(), y.as_ptr(), &mut delta, cal_y.as_mut_ptr()) }, SmibStatus::NullPointer);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(smib_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn free_accepts_null() {
    unsafe {
        smib_scenario_free(ptr::null_mut());
        smib_trajectory_free(ptr::null_mut());
    }
}
