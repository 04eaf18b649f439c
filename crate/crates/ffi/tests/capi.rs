use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use gaugekit_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        gk_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn mesh(domain: u32, radius: f64) -> *mut GkMesh {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { gk_mesh_new(domain, radius, 6, 8, &mut m) }, GkStatus::Ok);
    m
}

#[test]
fn constant_potential_gauge_through_the_c_api() {
    unsafe {
        let m = mesh(2, 0.0);
        let n = gk_mesh_len(m);
        assert_eq!(n, 48);
        assert_eq!(gk_mesh_dim(m), 3);
        let mut g = ptr::null_mut();
        assert_eq!(gk_green_new(m, &mut g), GkStatus::Ok);

        let q = vec![2.0; n];
        let mut u = vec![0.0; n];
        let mut sum = GkSolveSummary { status: GkSolveStatus::Diverged, iterations: 0, residual: 0.0, l1_norm: 0.0, center_value: 0.0 };
        assert_eq!(gk_gauge_solve(m, g, q.as_ptr(), n, 1e-10, 10_000, u.as_mut_ptr(), &mut sum), GkStatus::Ok);
        assert_eq!(sum.status, GkSolveStatus::Converged);
        assert!(sum.residual < 1e-8);
        assert!(u.iter().all(|&v| v >= 1.0));

        // u - 1 = G(qu) by construction
        let qu: Vec<f64> = q.iter().zip(&u).map(|(a, b)| a * b).collect();
        let mut gqu = vec![0.0; n];
        assert_eq!(gk_green_apply(m, g, qu.as_ptr(), gqu.as_mut_ptr(), n), GkStatus::Ok);
        for (a, b) in u.iter().zip(&gqu) {
            assert!((a - 1.0 - b).abs() < 1e-7 * a);
        }

        let mut coords = vec![0.0; 3 * n];
        let mut w = vec![0.0; n];
        assert_eq!(gk_mesh_nodes(m, coords.as_mut_ptr(), w.as_mut_ptr()), GkStatus::Ok);
        let vol: f64 = w.iter().sum();
        assert!((vol - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-9);
        assert!(coords.chunks(3).all(|p| p.iter().map(|x| x * x).sum::<f64>() < 1.0));

        gk_green_free(g);
        gk_mesh_free(m);
    }
}

#[test]
fn divergent_series_is_reported_not_raised() {
    unsafe {
        let m = mesh(1, 0.0);
        let n = gk_mesh_len(m);
        let mut g = ptr::null_mut();
        assert_eq!(gk_green_new(m, &mut g), GkStatus::Ok);
        let q = vec![50.0; n];
        let mut u = vec![0.0; n];
        let mut sum = GkSolveSummary { status: GkSolveStatus::Converged, iterations: 0, residual: 0.0, l1_norm: 0.0, center_value: 0.0 };
        assert_eq!(gk_gauge_solve(m, g, q.as_ptr(), n, 1e-10, 10_000, u.as_mut_ptr(), &mut sum), GkStatus::Ok);
        assert_eq!(sum.status, GkSolveStatus::Diverged);
        assert!(u.iter().all(|v| v.is_nan()));
        gk_green_free(g);
        gk_mesh_free(m);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(gk_mesh_new(7, 0.0, 6, 8, &mut m), GkStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(last_error().contains("domain code 7"));

        assert_eq!(gk_mesh_new(2, 0.0, 1, 1, &mut m), GkStatus::InvalidArgument);
        assert_eq!(gk_mesh_new(2, 0.0, 6, 8, ptr::null_mut()), GkStatus::NullPointer);
        assert_eq!(gk_mesh_len(ptr::null()), 0);

        let m = mesh(2, 0.0);
        let mut g = ptr::null_mut();
        assert_eq!(gk_green_new(m, &mut g), GkStatus::Ok);
        let short = [1.0; 3];
        let mut out = [0.0; 3];
        assert_eq!(gk_green_apply(m, g, short.as_ptr(), out.as_mut_ptr(), 3), GkStatus::MeshMismatch);
        assert!(last_error().contains("48"));

        // matrix assembled on a different mesh
        let other = mesh(1, 0.0);
        let n = gk_mesh_len(other);
        let f = vec![1.0; n];
        let mut out = vec![0.0; n];
        assert_ne!(gk_green_apply(other, g, f.as_ptr(), out.as_mut_ptr(), n), GkStatus::Ok);

        gk_green_free(g);
        gk_mesh_free(m);
        gk_mesh_free(other);
        gk_mesh_free(ptr::null_mut());
        gk_green_free(ptr::null_mut());
    }
}

#[test]
fn run_config_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(
        "[domain]\nkind = unit_disk_2d\n[mesh]\nn_radial = 6\nn_angular = 8\n[potential]\nfamily = constant\nlambda = 1\n[run]\nstages = solve\ntiming = false\n",
    )
    .unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let status = unsafe { gk_run_config(cfg.as_ptr(), out.as_ptr()) };
    assert_eq!(status, GkStatus::Ok, "{}", last_error());
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("report.json").exists());

    let bad = CString::new("[mesh]\nbogus = 1\n").unwrap();
    assert_eq!(unsafe { gk_run_config(bad.as_ptr(), out.as_ptr()) }, GkStatus::Config);
    assert!(last_error().contains("line 2"));
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(gk_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gaugekit.h");
    let Ok(out) = Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header]).output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
