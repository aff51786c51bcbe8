//! The C ABI exercised from Rust.

use std::ffi::{CStr, CString};
use std::ptr;

use microgrid_svc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mg_last_error()) }.to_string_lossy().into_owned()
}

fn builtin(name: &str) -> *mut MgScenario {
    let name = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { mg_scenario_builtin(name.as_ptr(), &mut sc) }, MgStatus::Ok);
    sc
}

#[test]
fn run_and_read_back() {
    let sc = builtin("reference");
    unsafe {
        assert_eq!(mg_scenario_set_duration(sc, 1.3), MgStatus::Ok);
        assert_eq!(mg_scenario_set_seed(sc, 3), MgStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(mg_run(sc, &mut run), MgStatus::Ok);

        let mut n = 0;
        assert_eq!(mg_run_record_count(run, &mut n), MgStatus::Ok);
        assert_eq!(n, 13001);
        let mut t = vec![0.0; n];
        assert_eq!(mg_run_copy_time(run, t.as_mut_ptr(), n), MgStatus::Ok);
        assert!((t[n - 1] - 1.3).abs() < 1e-9);
        let mut v = vec![0.0; n];
        assert_eq!(mg_run_copy_signal(run, 3, MgSignal::VOd, v.as_mut_ptr(), n), MgStatus::Ok);
        assert!(v[n / 2] < 310.0 && (v[n - 1] - 311.0).abs() < 1.0, "{} {}", v[n / 2], v[n - 1]);

        assert_eq!(mg_run_copy_signal(run, 4, MgSignal::VOd, v.as_mut_ptr(), n), MgStatus::OutOfRange);
        assert!(last_error().contains("out of range"));
        assert_eq!(mg_run_copy_signal(run, 0, MgSignal::VOd, v.as_mut_ptr(), n - 1), MgStatus::OutOfRange);

        let mut wn = 0;
        assert_eq!(mg_run_window_count(run, &mut wn), MgStatus::Ok);
        assert_eq!(wn, 2);
        let mut w = MgWindow::default();
        assert_eq!(mg_run_window(run, 1, &mut w), MgStatus::Ok);
        assert_eq!((w.start, w.available, w.settled), (1.0, 1, 1));
        assert!(w.settling < 0.5 && w.max_peak_error < 1.0);
        assert_eq!(mg_run_window(run, 2, &mut w), MgStatus::OutOfRange);

        let mut violations = 99;
        assert_eq!(mg_run_check(run, &mut violations), MgStatus::Ok);
        assert_eq!(violations, 0);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("t.csv").to_str().unwrap()).unwrap();
        assert_eq!(mg_run_write_csv(run, path.as_ptr()), MgStatus::Ok);
        let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(csv.lines().count(), n + 1);

        mg_run_free(run);
        mg_scenario_free(sc);
    }
}

#[test]
fn invalid_edits_are_rejected_and_kept_out() {
    let sc = builtin("reference");
    unsafe {
        assert_eq!(mg_scenario_set_duration(sc, -1.0), MgStatus::Config);
        assert!(!last_error().is_empty());
        let mut n = 0;
        assert_eq!(mg_scenario_dg_count(sc, &mut n), MgStatus::Ok);
        assert_eq!(n, 4);
        assert_eq!(mg_scenario_set_noise_variance(sc, 0.1), MgStatus::Ok);
        assert_eq!(mg_scenario_set_observer(sc, 0), MgStatus::Ok);
        assert_eq!(mg_scenario_set_controller(sc, MgController::Baseline), MgStatus::Ok);
        mg_scenario_free(sc);
    }
}

#[test]
fn load_and_parse_report_errors() {
    unsafe {
        let mut sc = ptr::null_mut();
        let missing = CString::new("/nonexistent/x.toml").unwrap();
        assert_eq!(mg_scenario_load(missing.as_ptr(), &mut sc), MgStatus::Io);
        assert!(last_error().contains("x.toml"));
        let bad = CString::new("[simulation]\nduration = 1.0\nnonsense = 2\n").unwrap();
        assert_eq!(mg_scenario_parse(bad.as_ptr(), &mut sc), MgStatus::Config);
        assert!(last_error().contains("line"), "{}", last_error());
        assert!(sc.is_null());
        assert_eq!(mg_scenario_parse(ptr::null(), &mut sc), MgStatus::NullPointer);
        let not_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(mg_scenario_parse(not_utf8.as_ptr().cast(), &mut sc), MgStatus::InvalidUtf8);

        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/configs/tradeoff.toml\0");
        assert_eq!(mg_scenario_load(path.as_ptr().cast(), &mut sc), MgStatus::Ok);
        mg_scenario_free(sc);
    }
}

#[test]
fn blowup_still_returns_partial_run() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/configs/reference.toml"))
        .unwrap()
        .replace("preset = \"testbed-dg1\"", "preset = \"testbed-dg1\"\nk_pc = 1e4");
    let text = CString::new(text).unwrap();
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(mg_scenario_parse(text.as_ptr(), &mut sc), MgStatus::Ok);
        assert_eq!(mg_scenario_set_duration(sc, 0.2), MgStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(mg_run(sc, &mut run), MgStatus::Blowup);
        assert!(last_error().contains("blowup"));
        assert!(!run.is_null());
        let mut n = 0;
        assert_eq!(mg_run_record_count(run, &mut n), MgStatus::Ok);
        assert!(n > 0 && n < 2001);
        mg_run_free(run);
        mg_scenario_free(sc);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/microgrid_svc.h")).unwrap();
    for name in [
        "mg_last_error",
        "mg_scenario_builtin",
        "mg_scenario_free",
        "mg_run(",
        "mg_run_copy_signal",
        "mg_run_window",
        "typedef struct MgRun MgRun",
        "MG_STATUS_BLOWUP = 5",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
