use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rydberg_ffi::*;

fn last_error() -> String {
    let p = rydberg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> *mut RydbergConfig {
    let t = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rydberg_config_from_toml(t.as_ptr(), &mut cfg) }, RydbergStatus::Ok);
    cfg
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(rydberg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn bad_config_sets_code_and_message() {
    let t = CString::new("[campaign]\ntrials = 0\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rydberg_config_from_toml(t.as_ptr(), &mut cfg) }, RydbergStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("trials"), "{}", last_error());

    let t = CString::new("[budget]\nn = 21\n").unwrap();
    assert_eq!(unsafe { rydberg_config_from_toml(t.as_ptr(), &mut cfg) }, RydbergStatus::Config);
}

#[test]
fn null_arguments_are_rejected() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rydberg_config_from_toml(ptr::null(), &mut cfg) }, RydbergStatus::NullPointer);
    assert_eq!(unsafe { rydberg_config_default(ptr::null_mut()) }, RydbergStatus::NullPointer);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rydberg_campaign_run(ptr::null(), ptr::null(), &mut out) }, RydbergStatus::NullPointer);
    assert_eq!(unsafe { rydberg_campaign_len(ptr::null()) }, 0);
    let mut v = 0.0;
    assert_eq!(unsafe { rydberg_surface_eval(ptr::null(), 1.0, 0.0, &mut v) }, RydbergStatus::NullPointer);
    // freeing NULL is a no-op
    unsafe {
        rydberg_config_free(ptr::null_mut());
        rydberg_surface_free(ptr::null_mut());
        rydberg_campaign_free(ptr::null_mut());
    }
}

#[test]
fn campaign_without_surface_runs_and_exports() {
    let cfg = config("[campaign]\nschemes = [\"UE\", \"ME\"]\nnoise = [0.0, 0.01]\ntrials = 50\n");
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { rydberg_campaign_run(cfg, ptr::null(), &mut run) }, RydbergStatus::Ok);
    assert_eq!(unsafe { rydberg_campaign_len(run) }, 4);
    let mut cell = std::mem::MaybeUninit::<RydbergCell>::uninit();
    assert_eq!(unsafe { rydberg_campaign_cell(run, 0, cell.as_mut_ptr()) }, RydbergStatus::Ok);
    let c = unsafe { cell.assume_init() };
    assert_eq!(c.scheme, RydbergScheme::Ue);
    assert_eq!((c.sigma0, c.trials, c.mse), (0.0, 50, 0.0));
    let mut cell = std::mem::MaybeUninit::<RydbergCell>::uninit();
    assert_eq!(unsafe { rydberg_campaign_cell(run, 3, cell.as_mut_ptr()) }, RydbergStatus::Ok);
    let c = unsafe { cell.assume_init() };
    assert_eq!(c.scheme, RydbergScheme::Me);
    assert!(c.mse > 0.0 && c.crlb > 0.0);
    assert_eq!(unsafe { rydberg_campaign_cell(run, 4, cell.as_mut_ptr()) }, RydbergStatus::InvalidArgument);

    let dir = tempfile::tempdir().unwrap();
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rydberg_campaign_write(run, cfg, d.as_ptr()) }, RydbergStatus::Ok);
    let csv = std::fs::read_to_string(dir.path().join("campaign.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    unsafe {
        rydberg_campaign_free(run);
        rydberg_config_free(cfg);
    }
}

#[test]
fn intensity_scheme_without_surface_is_a_config_error() {
    let cfg = config("[campaign]\nschemes = [\"IDD\"]\nsignals = [1.0]\n");
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { rydberg_campaign_run(cfg, ptr::null(), &mut run) }, RydbergStatus::Config);
    assert!(last_error().contains("surface"));
    unsafe { rydberg_config_free(cfg) };
}

#[test]
fn surface_round_trip_estimate_and_bounds() {
    let cfg = config("[surface]\nx_max = 4.0\nf_half = 4.0\n");
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rydberg_surface_build(cfg, &mut s) }, RydbergStatus::Ok);
    let mut g = 0.0;
    assert_eq!(unsafe { rydberg_surface_eval(s, 0.0, 0.0, &mut g) }, RydbergStatus::Ok);
    assert!((g - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { rydberg_surface_eval(s, 9.0, 0.0, &mut g) }, RydbergStatus::InvalidArgument);

    // noiseless readouts invert exactly
    let mut y = 0.0;
    assert_eq!(unsafe { rydberg_surface_eval(s, 1.5, 0.0, &mut y) }, RydbergStatus::Ok);
    let z = [y; 8];
    let mut x = 0.0;
    assert_eq!(unsafe { rydberg_estimate_idd(s, z.as_ptr(), z.len(), 0.2, 4.0, &mut x) }, RydbergStatus::Ok);
    assert!((x - 1.5).abs() < 1e-9, "{x}");
    assert_eq!(unsafe { rydberg_estimate_idd(s, z.as_ptr(), 0, 0.2, 4.0, &mut x) }, RydbergStatus::Estimator);

    let (mut b20, mut b40) = (0.0, 0.0);
    assert_eq!(unsafe { rydberg_crlb_idd(s, 1.0, 20, 0.01, &mut b20) }, RydbergStatus::Ok);
    assert_eq!(unsafe { rydberg_crlb_idd(s, 1.0, 40, 0.01, &mut b40) }, RydbergStatus::Ok);
    assert!((b20 / b40 - 2.0).abs() < 1e-12);
    assert_eq!(unsafe { rydberg_crlb_idd(s, 1.0, 20, -1.0, &mut b20) }, RydbergStatus::Crlb);

    let (mut r0, mut rx) = (0.0, 0.0);
    assert_eq!(unsafe { rydberg_ratios(cfg, s, 3.0, 3.0, &mut r0, &mut rx) }, RydbergStatus::Ok);
    assert!(r0 > 0.0 && rx > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rydberg_surface_save(s, d.as_ptr()) }, RydbergStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { rydberg_surface_load(d.as_ptr(), &mut back) }, RydbergStatus::Ok);
    let mut g2 = 0.0;
    unsafe {
        rydberg_surface_eval(s, 2.3, -1.1, &mut g);
        rydberg_surface_eval(back, 2.3, -1.1, &mut g2);
    }
    assert_eq!(g, g2);
    let missing = CString::new("/nonexistent/surface").unwrap();
    assert_eq!(unsafe { rydberg_surface_load(missing.as_ptr(), &mut back) }, RydbergStatus::Io);
    unsafe {
        rydberg_surface_free(s);
        rydberg_config_free(cfg);
    }
}

fn exported_names() -> Vec<String> {
    let src = include_str!("../src/lib.rs");
    src.lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap().to_string())
        .collect()
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rydberg.h")).unwrap();
    let names = exported_names();
    assert!(names.len() >= 15);
    for n in names {
        assert!(header.contains(&format!("{n}(")), "{n} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    std::fs::write(
        &src,
        "#include \"rydberg.h\"\nint main(void) {\n  RydbergConfig *c = 0;\n  \
         RydbergStatus s = rydberg_config_default(&c);\n  rydberg_config_free(c);\n  \
         return s == RYDBERG_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
