use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use qcoex_ffi::*;

fn last_error() -> String {
    let p = qcoex_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn sprs_rate_matches_the_library() {
    let m = qcoex_model_new_default();
    let l = qcoex_link_new_installed();
    let mut got = 0.0;
    let s = unsafe { qcoex_sprs_rate(m, l, 1550.0, 3.0, 1300.0, 50.0, QcoexDirection::CounterPropagating, &mut got) };
    assert_eq!(s, QcoexStatus::Ok);
    let want = qcoex::raman::RamanGainTable::default()
        .sprs_rate_at_mw(
            1550.0,
            qcoex::units::dbm_to_mw(3.0),
            1300.0,
            50.0,
            &qcoex::network::FiberLink::installed_default(),
            qcoex::network::Direction::Counter,
        )
        .unwrap();
    assert_eq!(got, want);
    unsafe {
        qcoex_link_free(l);
        qcoex_model_free(m);
    }
}

#[test]
fn custom_link_and_table() {
    let nm = [1260.0, 1630.0];
    let db = [0.3, 0.3];
    let mut link = ptr::null_mut();
    assert_eq!(unsafe { qcoex_link_new(10.0, nm.as_ptr(), db.as_ptr(), 2, 0.5, &mut link) }, QcoexStatus::Ok);
    let mut loss = 0.0;
    assert_eq!(unsafe { qcoex_link_loss_db(link, 1400.0, &mut loss) }, QcoexStatus::Ok);
    assert!((loss - 3.5).abs() < 1e-12);

    let bad_db = [0.3, -1.0];
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { qcoex_link_new(10.0, nm.as_ptr(), bad_db.as_ptr(), 2, 0.0, &mut bad) }, QcoexStatus::Config);
    assert!(bad.is_null());

    let json = CString::new(qcoex::raman::RamanGainTable::default().to_json()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { qcoex_model_from_table_json(json.as_ptr(), &mut model) }, QcoexStatus::Ok);
    let mut g = 0.0;
    assert_eq!(unsafe { qcoex_gain_density(model, 13.2, &mut g) }, QcoexStatus::Ok);
    assert!(g > 0.0);

    let junk = CString::new("{").unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { qcoex_model_from_table_json(junk.as_ptr(), &mut none) }, QcoexStatus::Config);
    assert!(!last_error().is_empty());
    unsafe {
        qcoex_model_free(model);
        qcoex_link_free(link);
        qcoex_model_free(ptr::null_mut());
    }
}

#[test]
fn domain_errors_carry_messages() {
    let mut v = 0.0;
    assert_eq!(unsafe { qcoex_phonon_occupation(13.2, -1.0, &mut v) }, QcoexStatus::Domain);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { qcoex_filter_window_scaling(50.0, 0.0, 600.0, 600.0, &mut v) }, QcoexStatus::Domain);
    let src = QcoexSource { rep_rate_hz: 1e8, mu: -0.1 };
    let arm = QcoexArm { loss_db: 10.0, noise_cps: 0.0, efficiency: 0.9, dark_rate_cps: 0.0 };
    let mut r = QcoexRates::default();
    assert_eq!(unsafe { qcoex_coincidence_rates(&src, &arm, &arm, 600.0, &mut r) }, QcoexStatus::Domain);
    assert_eq!(unsafe { qcoex_coincidence_rates(&src, ptr::null(), &arm, 600.0, &mut r) }, QcoexStatus::NullPointer);
}

#[test]
fn rates_match_the_library() {
    let src = QcoexSource { rep_rate_hz: 416.7e6, mu: 0.02 };
    let a = QcoexArm { loss_db: 12.0, noise_cps: 5e4, efficiency: 0.92, dark_rate_cps: 100.0 };
    let b = QcoexArm { loss_db: 9.0, noise_cps: 0.0, efficiency: 0.92, dark_rate_cps: 100.0 };
    let mut r = QcoexRates::default();
    assert_eq!(unsafe { qcoex_coincidence_rates(&src, &a, &b, 600.0, &mut r) }, QcoexStatus::Ok);
    let arm = |x: &QcoexArm| qcoex::rates::ArmConfig {
        loss_db: x.loss_db,
        noise_cps: x.noise_cps,
        detector: qcoex::rates::DetectorModel { efficiency: x.efficiency, dark_rate_cps: x.dark_rate_cps, ..Default::default() },
    };
    let s = qcoex::source::EppSource { rep_rate_hz: src.rep_rate_hz, mu: src.mu, ..Default::default() };
    let p = qcoex::rates::coincidence_rates(&s, 1.0, &arm(&a), &arm(&b), &qcoex::rates::CoincidenceConfig { window_ps: 600.0 }).unwrap();
    assert_eq!(r.ccr, p.ccr);
    assert_eq!(r.visibility, p.visibility_hv);
    assert_eq!(r.car, p.car);
}

fn find_compiler() -> Option<String> {
    let candidates = [std::env::var("CC").ok(), Some("cc".into()), Some("gcc".into()), Some("clang".into())];
    candidates.into_iter().flatten().find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

/// target/<profile> directory holding the static library.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(cc) = find_compiler() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let lib = artifact_dir().join("libqcoex_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let o = Command::new(&cc)
        .arg(here.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(here.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}{}", String::from_utf8_lossy(&run.stdout), String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
