//! C interface to gaugekit.
//!
//! Every fallible call returns a [`GkStatus`]; on failure the message is kept
//! per thread and can be copied out with [`gk_last_error_message`]. Objects
//! cross the boundary as opaque pointers and are released with their
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gaugekit::assembly::{assemble_green_matrix, KernelMatrix};
use gaugekit::config::parse_config_str;
use gaugekit::domain::{DomainKind, ModelDomain};
use gaugekit::mesh::{build_volume_mesh, VolumeMesh};
use gaugekit::operators::{apply_green, Potential};
use gaugekit::report::{emit_reports, ReportFormat};
use gaugekit::run::{run_scenario, RunContext};
use gaugekit::solver::{gauge, riesz_solve, SolveOptions, SolveStatus};
use gaugekit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Unsupported = 3,
    MeshMismatch = 4,
    DegenerateKernel = 5,
    SingularSystem = 6,
    InvariantViolation = 7,
    SeriesDiverged = 8,
    CacheInvalid = 9,
    Config = 10,
    Io = 11,
    /// A run finished but at least one stage reported an error.
    Incomplete = 12,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkSolveStatus {
    Converged = 0,
    Diverged = 1,
    IterationCap = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GkSolveSummary {
    pub status: GkSolveStatus,
    pub iterations: usize,
    /// `sup |u - (Tu + Gq) - 1|`, NaN when no solution was produced.
    pub residual: f64,
    pub l1_norm: f64,
    pub center_value: f64,
}

/// Quadrature mesh on a model domain.
pub struct GkMesh(VolumeMesh);

/// Dense Green matrix bound to the mesh it was assembled on.
pub struct GkGreen(KernelMatrix);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> GkStatus {
    match e {
        Error::InvalidArgument(_) => GkStatus::InvalidArgument,
        Error::Unsupported { .. } => GkStatus::Unsupported,
        Error::MeshMismatch(_) => GkStatus::MeshMismatch,
        Error::DegenerateKernel(_) => GkStatus::DegenerateKernel,
        Error::SingularSystem { .. } => GkStatus::SingularSystem,
        Error::InvariantViolation(_) => GkStatus::InvariantViolation,
        Error::SeriesDiverged { .. } => GkStatus::SeriesDiverged,
        Error::CacheInvalid { .. } => GkStatus::CacheInvalid,
        Error::ConfigParse { .. } | Error::Config(_) => GkStatus::Config,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => GkStatus::Io,
    }
}

enum Failure {
    Status(GkStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn fail(status: GkStatus, msg: impl Into<String>) -> Failure {
    Failure::Status(status, msg.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            GkStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
        Ok(Err(Failure::Status(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside gaugekit".into());
            GkStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(GkStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(GkStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(fail(GkStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(GkStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(GkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got != want {
        return Err(fail(GkStatus::MeshMismatch, format!("{what} has length {got}, mesh has {want} nodes")));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` with a trailing
/// NUL and returns the full message length in bytes (without the NUL).
/// Passing a null `buf` or `cap == 0` only queries the length.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gk_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a mesh. `domain` is 1 for the unit disk, 2 for the unit ball and
/// 3 for whole space, which also reads `truncation_radius`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn gk_mesh_new(
    domain: u32,
    truncation_radius: f64,
    n_radial: usize,
    n_angular: usize,
    out: *mut *mut GkMesh,
) -> GkStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(GkStatus::NullPointer, "out is null"));
        }
        let kind = DomainKind::from_code(domain)
            .ok_or_else(|| fail(GkStatus::InvalidArgument, format!("unknown domain code {domain}")))?;
        let dom = ModelDomain::new(kind, truncation_radius)?;
        let mesh = build_volume_mesh(dom, n_radial, n_angular)?;
        *out = Box::into_raw(Box::new(GkMesh(mesh)));
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a handle from [`gk_mesh_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_mesh_free(mesh: *mut GkMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Number of nodes, 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gk_mesh_len(mesh: *const GkMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.len())
}

/// Spatial dimension, 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gk_mesh_dim(mesh: *const GkMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.dim())
}

/// Writes node coordinates as `len * 3` doubles (z is 0 in the plane) and
/// the quadrature weights as `len` doubles. Either output may be null.
///
/// # Safety
/// Non-null outputs must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_mesh_nodes(mesh: *const GkMesh, coords: *mut f64, weights: *mut f64) -> GkStatus {
    guard(|| {
        let m = &borrow(mesh, "mesh")?.0;
        if !coords.is_null() {
            let out = slice_mut(coords, 3 * m.len(), "coords")?;
            for (chunk, p) in out.chunks_exact_mut(3).zip(&m.nodes) {
                chunk.copy_from_slice(&p.0);
            }
        }
        if !weights.is_null() {
            slice_mut(weights, m.len(), "weights")?.copy_from_slice(&m.weights);
        }
        Ok(())
    })
}

/// Assembles the Green matrix of the mesh (Newtonian kernel on whole space).
///
/// # Safety
/// `mesh` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_green_new(mesh: *const GkMesh, out: *mut *mut GkGreen) -> GkStatus {
    guard(|| {
        let m = &borrow(mesh, "mesh")?.0;
        if out.is_null() {
            return Err(fail(GkStatus::NullPointer, "out is null"));
        }
        *out = Box::into_raw(Box::new(GkGreen(assemble_green_matrix(m)?)));
        Ok(())
    })
}

/// # Safety
/// `green` must be null or a handle from [`gk_green_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_green_free(green: *mut GkGreen) {
    if !green.is_null() {
        drop(Box::from_raw(green));
    }
}

/// `out = G f` where both arrays have one entry per mesh node.
///
/// # Safety
/// Handles must be live; `f` and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_green_apply(
    mesh: *const GkMesh,
    green: *const GkGreen,
    f: *const f64,
    out: *mut f64,
    len: usize,
) -> GkStatus {
    guard(|| {
        let m = &borrow(mesh, "mesh")?.0;
        let g = &borrow(green, "green")?.0;
        check_len(len, m.len(), "f")?;
        let f = m.field(slice(f, len, "f")?.to_vec())?;
        let gf = apply_green(g, &f)?;
        slice_mut(out, len, "out")?.copy_from_slice(&gf.values);
        Ok(())
    })
}

/// Gauge `u = 1 + G(qu)` by the Neumann series, with potential values `q`
/// at the mesh nodes. On whole space the potential must vanish near the
/// truncation sphere. A diverged or capped series is not an error: the
/// summary says so and `u` is filled with NaN.
///
/// # Safety
/// Handles must be live; `q` and `u` must hold `len` doubles and `summary`
/// must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn gk_gauge_solve(
    mesh: *const GkMesh,
    green: *const GkGreen,
    q: *const f64,
    len: usize,
    tol_series: f64,
    j_max: usize,
    u: *mut f64,
    summary: *mut GkSolveSummary,
) -> GkStatus {
    guard(|| {
        let m = &borrow(mesh, "mesh")?.0;
        let g = &borrow(green, "green")?.0;
        check_len(len, m.len(), "q")?;
        let q = Potential::custom(m.field(slice(q, len, "q")?.to_vec())?)?;
        let out = slice_mut(u, len, "u")?;
        let opts = SolveOptions { tol_series, j_max };
        let report = if m.domain.is_bounded() { gauge(m, g, &q, &opts)? } else { riesz_solve(m, g, &q, &opts)? };
        match &report.solution {
            Some(s) => out.copy_from_slice(&s.values),
            None => out.fill(f64::NAN),
        }
        if let Some(sum) = summary.as_mut() {
            *sum = GkSolveSummary {
                status: match report.status {
                    SolveStatus::Converged => GkSolveStatus::Converged,
                    SolveStatus::DivergenceDetected => GkSolveStatus::Diverged,
                    SolveStatus::IterationCapReached => GkSolveStatus::IterationCap,
                },
                iterations: report.iterations_used,
                residual: report.residual,
                l1_norm: report.l1_norm,
                center_value: if report.solution.is_some() { report.center_value(m) } else { f64::NAN },
            };
        }
        Ok(())
    })
}

/// Runs the scenario described by `config` (the text of a scenario file)
/// and writes `report.csv` and `report.json` into `out_dir`. Returns
/// `GK_STATUS_INCOMPLETE` when a stage failed; the reports are still written.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gk_run_config(config: *const c_char, out_dir: *const c_char) -> GkStatus {
    guard(|| {
        let scenario = parse_config_str(text(config, "config")?)?;
        let dir = Path::new(text(out_dir, "out_dir")?);
        let record = run_scenario(&scenario, &RunContext::default());
        emit_reports(std::slice::from_ref(&record), dir, &[ReportFormat::Csv, ReportFormat::Json])?;
        if !record.complete() {
            let first = record.errors.first().map(|e| format!("{} stage: {}", e.stage, e.message));
            return Err(fail(GkStatus::Incomplete, first.unwrap_or_else(|| "run incomplete".into())));
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_error_maps_to_a_nonzero_code() {
        let errs = [
            Error::InvalidArgument("x".into()),
            Error::Config("x".into()),
            Error::Io(std::io::Error::other("x")),
            Error::SingularSystem { sigma_min: 0.0 },
        ];
        for e in &errs {
            assert_ne!(status_of(e), GkStatus::Ok);
        }
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), GkStatus::Panic);
        let n = unsafe { gk_last_error_message(ptr::null_mut(), 0) };
        assert!(n > 0);
    }
}
