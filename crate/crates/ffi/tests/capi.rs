use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use lsor_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> Option<String> {
    let p = lsor_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn scenario(model: &str) -> *mut LsorScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { lsor_scenario_new(c(model).as_ptr(), &mut s) }, LsorStatus::Ok);
    assert!(!s.is_null());
    s
}

fn column_index(t: *const LsorTrajectory, name: &str) -> Option<usize> {
    (0..unsafe { lsor_trajectory_column_count(t) }).find(|&i| {
        let p = unsafe { lsor_trajectory_column_name(t, i) };
        unsafe { CStr::from_ptr(p) }.to_str().unwrap() == name
    })
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(lsor_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn sag_voltage_follows_profile() {
    assert_eq!(lsor_sag_voltage(0.5, 0.8, 5.0, 1.0, 0.9), 1.0);
    assert_eq!(lsor_sag_voltage(1.0, 0.8, 5.0, 1.0, 0.9), 0.8);
    assert!((lsor_sag_voltage(1.0 + 5.0 / 60.0, 0.8, 5.0, 1.0, 0.9) - 0.9).abs() < 1e-12);
    assert!(lsor_sag_voltage(1.0, 1.5, 5.0, 1.0, 0.9).is_nan());
}

#[test]
fn unknown_model_reports_config_error() {
    let mut s = ptr::dangling_mut::<LsorScenario>();
    let status = unsafe { lsor_scenario_new(c("motor-z").as_ptr(), &mut s) };
    assert_eq!(status, LsorStatus::Config);
    assert!(s.is_null());
    assert!(last_error().unwrap().contains("motor-z"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut d = std::mem::MaybeUninit::<LsorDecision>::uninit();
    assert_eq!(unsafe { lsor_assess(ptr::null(), d.as_mut_ptr()) }, LsorStatus::NullPointer);
    assert_eq!(unsafe { lsor_scenario_new(ptr::null(), &mut ptr::null_mut()) }, LsorStatus::NullPointer);
    let s = scenario("motor-a");
    assert_eq!(unsafe { lsor_assess(s, ptr::null_mut()) }, LsorStatus::NullPointer);
    assert_eq!(unsafe { lsor_scenario_set_number(s, ptr::null(), 1.0) }, LsorStatus::NullPointer);
    assert_eq!(unsafe { lsor_trajectory_len(ptr::null()) }, 0);
    assert!(unsafe { lsor_trajectory_column_name(ptr::null(), 0) }.is_null());
    unsafe {
        lsor_scenario_free(s);
        lsor_scenario_free(ptr::null_mut());
        lsor_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    let mut s = ptr::null_mut();
    unsafe { lsor_scenario_new(c("nope").as_ptr(), &mut s) };
    assert!(last_error().is_some());
    let s = scenario("dera");
    assert!(last_error().is_none());
    unsafe { lsor_scenario_free(s) };
}

#[test]
fn settings_are_validated() {
    let s = scenario("motor-a");
    unsafe {
        assert_eq!(lsor_scenario_set_number(s, c("sag.a").as_ptr(), 0.7), LsorStatus::Ok);
        assert_eq!(lsor_scenario_set_number(s, c("no.such.key").as_ptr(), 1.0), LsorStatus::Config);
        assert_eq!(lsor_scenario_set_number(s, c("sag.a").as_ptr(), 2.0), LsorStatus::InvalidArgument);
        assert_eq!(lsor_scenario_set_number(s, c("t_end").as_ptr(), f64::NAN), LsorStatus::InvalidArgument);
        assert_eq!(lsor_scenario_set_string(s, c("solver.method").as_ptr(), c("stiff").as_ptr()), LsorStatus::Ok);
        assert_eq!(lsor_scenario_set_string(s, c("solver.method").as_ptr(), c("rk4").as_ptr()), LsorStatus::Config);
        lsor_scenario_free(s);
    }
}

#[test]
fn assess_reports_verdicts() {
    let mut d = std::mem::MaybeUninit::<LsorDecision>::uninit();
    let m = scenario("motor-a");
    assert_eq!(unsafe { lsor_assess(m, d.as_mut_ptr()) }, LsorStatus::Ok);
    let d1 = unsafe { d.assume_init() };
    assert_eq!(d1.verdict, LsorVerdict::QssOnly);
    assert!(d1.epsilon <= d1.eps_double_star);
    let r = scenario("dera");
    assert_eq!(unsafe { lsor_assess(r, d.as_mut_ptr()) }, LsorStatus::Ok);
    let d2 = unsafe { d.assume_init() };
    assert_eq!(d2.verdict, LsorVerdict::QssPlusBoundaryLayer);
    assert!(d2.eps_double_star < d2.epsilon && d2.epsilon <= d2.eps_star);
    unsafe {
        lsor_scenario_free(m);
        lsor_scenario_free(r);
    }
}

#[test]
fn simulate_exposes_columns() {
    let s = scenario("motor-b");
    let mut t = ptr::null_mut();
    unsafe {
        assert_eq!(lsor_scenario_set_number(s, c("t_end").as_ptr(), 1.5), LsorStatus::Ok);
        assert_eq!(lsor_simulate(s, c("full").as_ptr(), &mut t), LsorStatus::Ok);
        let n = lsor_trajectory_len(t);
        assert_eq!(n, 1501);
        assert_eq!(lsor_trajectory_column_count(t), 7);
        assert!(lsor_trajectory_column_name(t, 7).is_null());
        let mut times = vec![0.0; n];
        assert_eq!(lsor_trajectory_times(t, times.as_mut_ptr(), n), LsorStatus::Ok);
        assert_eq!(times[0], 0.0);
        assert!((times[n - 1] - 1.5).abs() < 1e-12);
        let mut p = vec![0.0; n];
        let ip = column_index(t, "P").unwrap();
        assert_eq!(lsor_trajectory_column(t, ip, p.as_mut_ptr(), n), LsorStatus::Ok);
        assert!((p[0] - p[500]).abs() < 1e-6);
        assert_eq!(lsor_trajectory_column(t, ip, p.as_mut_ptr(), n - 1), LsorStatus::InvalidArgument);
        assert_eq!(lsor_trajectory_column(t, 99, p.as_mut_ptr(), n), LsorStatus::InvalidArgument);
        assert_eq!(lsor_trajectory_column(t, ip, ptr::null_mut(), n), LsorStatus::NullPointer);
        assert_eq!(lsor_simulate(s, c("both").as_ptr(), &mut t), LsorStatus::InvalidArgument);
        assert!(t.is_null());
        lsor_scenario_free(s);
    }
}

#[test]
fn compare_summarizes_both_runs() {
    let s = scenario("dera");
    let mut r = std::mem::MaybeUninit::<LsorComparison>::uninit();
    assert_eq!(unsafe { lsor_compare(s, r.as_mut_ptr()) }, LsorStatus::Ok);
    let r = unsafe { r.assume_init() };
    assert!(r.mse_p >= 0.0 && r.mse_q >= 0.0);
    assert!(r.steps_full > r.steps_reduced);
    assert!((r.speedup - r.timing_full / r.timing_reduced).abs() <= 1e-12 * r.speedup);
    assert!(r.qss_max_residual <= 1e-8);
    assert_eq!(r.decision.verdict, LsorVerdict::QssPlusBoundaryLayer);
    unsafe { lsor_scenario_free(s) };
}

#[test]
fn export_and_config_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"t_end": 0.5, "grid": 0.01}"#).unwrap();
    let s = scenario("motor-c");
    let mut t = ptr::null_mut();
    let csv = dir.path().join("out.csv");
    unsafe {
        assert_eq!(lsor_scenario_load(s, c(cfg.to_str().unwrap()).as_ptr()), LsorStatus::Ok);
        assert_eq!(lsor_scenario_load(s, c("/no/such/file.json").as_ptr()), LsorStatus::Io);
        assert_eq!(lsor_simulate(s, c("reduced").as_ptr(), &mut t), LsorStatus::Ok);
        assert_eq!(lsor_trajectory_len(t), 51);
        let status = lsor_trajectory_export(t, c(csv.to_str().unwrap()).as_ptr(), c("csv").as_ptr());
        assert_eq!(status, LsorStatus::Ok);
        let bad = lsor_trajectory_export(t, c(csv.to_str().unwrap()).as_ptr(), c("xml").as_ptr());
        assert_eq!(bad, LsorStatus::Config);
        lsor_trajectory_free(t);
        lsor_scenario_free(s);
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,Eq_p,Ed_p,s,P,Q");
    assert_eq!(text.lines().count(), 52);
}

#[test]
fn errors_are_thread_local() {
    let mut s = ptr::null_mut();
    unsafe { lsor_scenario_new(c("bad").as_ptr(), &mut s) };
    let other = std::thread::spawn(|| lsor_last_error().is_null()).join().unwrap();
    assert!(other);
    assert!(last_error().is_some());
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("lsor.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "lsor_last_error",
        "lsor_version",
        "lsor_sag_voltage",
        "lsor_scenario_new",
        "lsor_scenario_free",
        "lsor_scenario_set_number",
        "lsor_scenario_set_string",
        "lsor_scenario_load",
        "lsor_assess",
        "lsor_compare",
        "lsor_simulate",
        "lsor_trajectory_free",
        "lsor_trajectory_len",
        "lsor_trajectory_column_count",
        "lsor_trajectory_column_name",
        "lsor_trajectory_times",
        "lsor_trajectory_column",
        "lsor_trajectory_export",
        "typedef struct LsorScenario LsorScenario",
        "LSOR_STATUS_NUMERICAL = 4",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

/// Directory holding the static library built alongside this test.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = artifact_dir().join("liblsor_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("c").join("smoke.c");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let build = Command::new(&cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap_or_else(|e| panic!("cannot run {cc}: {e}"));
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.starts_with("ok "), "{stdout}");
}

