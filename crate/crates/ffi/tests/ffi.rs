use higgslab_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = hl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn torus_helmholtz_round_trip() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(hl_manifold_flat_torus(1, [1.0].as_ptr(), 1, 32, &mut m), HlStatus::Ok);
        let n = hl_manifold_len(m);
        assert_eq!(n, 32 * 32);
        assert!((hl_manifold_volume(m) - 1.0).abs() < 1e-12);
        let mut xy = vec![0.0; 2 * n];
        assert_eq!(hl_manifold_coords(m, xy.as_mut_ptr(), xy.len()), HlStatus::Ok);
        // cos(2πx) is an eigenfunction of the discrete Laplacian with this symbol
        let eps = 0.5;
        let h = 1.0 / 32.0;
        let sym = -(2.0 - 2.0 * (2.0 * std::f64::consts::PI * h).cos()) / (h * h);
        let f_exact: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * xy[2 * i]).cos()).collect();
        let psi: Vec<f64> = f_exact.iter().map(|f| (sym - eps) * f).collect();
        let mut f = vec![0.0; n];
        assert_eq!(hl_solve_helmholtz(m, psi.as_ptr(), n, eps, f.as_mut_ptr()), HlStatus::Ok);
        let err = f.iter().zip(&f_exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-7, "{err}");
        assert_eq!(hl_solve_helmholtz(m, psi.as_ptr(), n - 1, eps, f.as_mut_ptr()), HlStatus::InvalidArgument);
        assert!(last_error().contains("length"));
        hl_manifold_free(m);
    }
}

#[test]
fn perturbed_solve_on_cusp() {
    unsafe {
        let mut m = ptr::null_mut();
        let model = CString::new(r#"{"kind":"cusp_cylinder","tau_max":4.0,"radial_nodes":17,"angular_nodes":8}"#).unwrap();
        assert_eq!(hl_manifold_from_json(model.as_ptr(), &mut m), HlStatus::Ok);
        let mut b = ptr::null_mut();
        let preset = CString::new(r#"{"preset":"split_pair","c":0.5}"#).unwrap();
        assert_eq!(hl_bundle_from_json(m, preset.as_ptr(), &mut b), HlStatus::Ok);
        assert_eq!(hl_bundle_rank(b), 2);
        let (mut h, mut sup, mut res) = (ptr::null_mut(), f64::NAN, f64::NAN);
        assert_eq!(hl_solve_perturbed(m, b, 0.5, &mut h, &mut sup, &mut res), HlStatus::Ok);
        assert!(sup > 0.0 && sup.is_finite() && res < 1e-6);
        let n = hl_manifold_len(m);
        let mut entries = vec![0.0; 2 * 4 * n];
        assert_eq!(hl_metric_entries(h, entries.as_mut_ptr(), entries.len()), HlStatus::Ok);
        // h is diagonal, positive, real
        for i in 0..n {
            let e = &entries[8 * i..8 * i + 8];
            assert!(e[0] > 0.0 && e[6] > 0.0 && e[1].abs() + e[2].abs() + e[7].abs() < 1e-12);
        }
        assert_eq!(hl_metric_entries(h, entries.as_mut_ptr(), 3), HlStatus::InvalidArgument);
        assert_eq!(hl_solve_perturbed(m, b, -1.0, &mut h, ptr::null_mut(), ptr::null_mut()), HlStatus::InvalidArgument);
        assert!(h.is_null());
        hl_metric_free(h);
        hl_bundle_free(b);
        hl_manifold_free(m);
    }
}

#[test]
fn null_and_bad_input_are_reported() {
    unsafe {
        assert_eq!(hl_manifold_cusp(4.0, 8, 8, ptr::null_mut()), HlStatus::NullPointer);
        let mut m = ptr::null_mut();
        assert_eq!(hl_manifold_cusp(0.5, 8, 8, &mut m), HlStatus::InvalidArgument);
        assert!(m.is_null());
        let bad = CString::new(r#"{"kind":"klein_bottle"}"#).unwrap();
        assert_eq!(hl_manifold_from_json(bad.as_ptr(), &mut m), HlStatus::Config);
        assert!(last_error().contains("klein_bottle"));
        assert_eq!(hl_manifold_len(ptr::null()), 0);
        assert!(hl_manifold_volume(ptr::null()).is_nan());
        hl_manifold_free(ptr::null_mut());
        let v = CStr::from_ptr(hl_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn run_experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let cfg = CString::new(
        r#"{"experiment":"assumptions","model":{"kind":"cusp_cylinder","tau_max":4.0,"radial_nodes":17,"angular_nodes":8},"bundle":{"preset":"line_flat"}}"#,
    )
    .unwrap();
    let mut code = -1;
    unsafe {
        assert_eq!(hl_run_experiment(cfg.as_ptr(), out.as_ptr(), &mut code), HlStatus::Ok);
    }
    assert_eq!(code, 0);
    assert!(dir.path().join("report.json").exists() && dir.path().join("manifest.json").exists());
    let bad = CString::new(r#"{"experiment":"nope"}"#).unwrap();
    unsafe {
        assert_eq!(hl_run_experiment(bad.as_ptr(), out.as_ptr(), &mut code), HlStatus::Config);
    }
    assert_eq!(code, 2);
    assert!(last_error().contains("experiment"));
}

#[test]
fn header_declares_every_export() {
    let src = include_str!("../src/lib.rs");
    let header = include_str!("../include/higgslab.h");
    let names: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|r| r.split('(').next().unwrap())
        .collect();
    assert!(names.len() >= 14);
    for n in names {
        assert!(header.contains(&format!("{n}(")), "{n} missing from header");
    }
    assert!(header.contains("typedef struct HlManifold HlManifold;"));
    assert!(header.contains("HL_STATUS_PANIC = 7"));
}
