use std::ffi::{CStr, CString};
use std::ptr;

use gdln_ffi::*;

fn last_error() -> String {
    let p = gdln_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn dataset_dims_round_trip() {
    let name = CString::new("context3").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { gdln_dataset_new(name.as_ptr(), &mut ds) }, GdlnStatus::Ok);
    let (mut d, mut p, mut n) = (0, 0, 0);
    assert_eq!(unsafe { gdln_dataset_dims(ds, &mut d, &mut p, &mut n) }, GdlnStatus::Ok);
    assert_eq!((d, n), (11, 24));
    assert!(p > 0);
    unsafe { gdln_dataset_free(ds) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { gdln_dataset_new(ptr::null(), &mut ds) }, GdlnStatus::NullPointer);
    assert!(last_error().contains("task"));
    let bad = CString::new("nonsense").unwrap();
    assert_eq!(unsafe { gdln_dataset_new(bad.as_ptr(), &mut ds) }, GdlnStatus::InvalidArgument);
    assert!(ds.is_null());
    assert_eq!(
        unsafe { gdln_dataset_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        GdlnStatus::NullPointer
    );
    let mut out = 0.0;
    assert_eq!(unsafe { gdln_mode_strength(1.0, 0.0, 1e-3, 1.0, 1.0, &mut out) }, GdlnStatus::InvalidArgument);
    // Freeing null is a no-op.
    unsafe {
        gdln_dataset_free(ptr::null_mut());
        gdln_network_free(ptr::null_mut());
        gdln_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn train_xor_network_and_read_trajectory() {
    let task = CString::new("xor(1)").unwrap();
    let preset = CString::new("xor_linear").unwrap();
    let mut ds = ptr::null_mut();
    let mut net = ptr::null_mut();
    let mut traj = ptr::null_mut();
    unsafe {
        assert_eq!(gdln_dataset_new(task.as_ptr(), &mut ds), GdlnStatus::Ok);
        assert_eq!(gdln_network_new(preset.as_ptr(), ds, 16, &mut net), GdlnStatus::Ok);
        gdln_dataset_free(ds);
        assert_eq!(gdln_network_train(net, 0.1, 300, 0.01, 7, 10, &mut traj), GdlnStatus::Ok);
        let mut len = 0;
        assert_eq!(gdln_trajectory_len(traj, &mut len), GdlnStatus::Ok);
        assert_eq!(len, 31);
        let (mut e0, mut l0, mut e1, mut l1) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(gdln_trajectory_get(traj, 0, &mut e0, &mut l0), GdlnStatus::Ok);
        assert_eq!(gdln_trajectory_get(traj, len - 1, &mut e1, &mut l1), GdlnStatus::Ok);
        assert_eq!((e0, e1), (0.0, 300.0));
        assert!(l1 < l0);
        let mut now = 0.0;
        assert_eq!(gdln_network_loss(net, &mut now), GdlnStatus::Ok);
        assert!((now - l1).abs() < 1e-12);
        assert_eq!(gdln_trajectory_get(traj, len, &mut e1, &mut l1), GdlnStatus::OutOfRange);
        gdln_trajectory_free(traj);

        assert_eq!(gdln_network_train(net, 1e3, 50, 1.0, 0, 1, &mut traj), GdlnStatus::Diverged);
        assert!(last_error().contains("diverged"));
        gdln_network_free(net);
    }
}

#[test]
fn closed_form_matches_library() {
    assert!((gdln_crossover_delta() - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    let mut at0 = 0.0;
    let mut late = 0.0;
    unsafe {
        assert_eq!(gdln_mode_strength(2.0, 0.5, 1e-3, 1.0, 0.0, &mut at0), GdlnStatus::Ok);
        assert_eq!(gdln_mode_strength(2.0, 0.5, 1e-3, 1.0, 100.0, &mut late), GdlnStatus::Ok);
    }
    assert!((at0 - 1e-3).abs() < 1e-15);
    assert!((late - 4.0).abs() < 1e-9);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gdln.h")).unwrap();
    for f in [
        "gdln_last_error_message",
        "gdln_crossover_delta",
        "gdln_mode_strength",
        "gdln_dataset_new",
        "gdln_dataset_dims",
        "gdln_dataset_free",
        "gdln_network_new",
        "gdln_network_loss",
        "gdln_network_train",
        "gdln_network_free",
        "gdln_trajectory_len",
        "gdln_trajectory_get",
        "gdln_trajectory_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct GdlnNetwork GdlnNetwork;"));
}
