//! C ABI over `higgslab`.
//!
//! Objects cross the boundary as opaque handles released by the matching
//! `hl_*_free`. Every fallible call
//! returns an [`HlStatus`]; the message of the last failure on the calling
//! thread is available from [`hl_last_error`]. Panics are caught at the
//! boundary and reported as `HL_STATUS_PANIC`.

use higgslab::cli::{parse_config, run_experiment, CliError};
use higgslab::continuation::{solve_perturbed_he, SolveVia};
use higgslab::field::MetricField;
use higgslab::flow::ImplicitConfig;
use higgslab::geometry::{build_cusp_cylinder, build_flat_torus, GridManifold, Model};
use higgslab::poisson::{conformal_trace_normalize, solve_helmholtz, Boundary, SolveOptions};
use higgslab::presets::Preset;
use higgslab::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NoConvergence = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

pub struct HlManifold(GridManifold);

pub struct HlBundle {
    inner: higgslab::bundle::HiggsBundleData,
    nodes: usize,
}

pub struct HlMetric(MetricField);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HlStatus {
    match e {
        Error::InvalidModel(_)
        | Error::InvalidArgument(_)
        | Error::RankMismatch(..)
        | Error::LengthMismatch { .. }
        | Error::InvalidProjector(_)
        | Error::EmptyDomain(_)
        | Error::IncompatibleSource { .. }
        | Error::BoundaryViolation(_) => HlStatus::InvalidArgument,
        Error::Config(_) => HlStatus::Config,
        Error::NoConvergence { .. } | Error::NoLimit { .. } | Error::StepCollapse { .. } => HlStatus::NoConvergence,
        Error::NotPositive { .. } | Error::NotHermitian { .. } | Error::NonFinite(_) => HlStatus::Numerical,
        Error::Level { source, .. } => status_of(source),
        Error::Io(_) => HlStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (HlStatus, String)>) -> HlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            HlStatus::Panic
        }
    }
}

fn lib(e: Error) -> (HlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HlStatus, String) {
    (HlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (HlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut *mut T, what: &str) -> Result<&'a mut *mut T, (HlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    *p = ptr::null_mut();
    Ok(&mut *p)
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn hl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Flat torus of complex dimension `dim` with `nperiods` periods (one per real axis, or one for all).
///
/// # Safety
/// `periods` must point to `nperiods` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_manifold_flat_torus(
    dim: usize,
    periods: *const f64,
    nperiods: usize,
    nodes_per_side: usize,
    out: *mut *mut HlManifold,
) -> HlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if periods.is_null() {
            return Err(null("periods"));
        }
        let p = std::slice::from_raw_parts(periods, nperiods);
        let m = build_flat_torus(dim, p, nodes_per_side).map_err(lib)?;
        *out = Box::into_raw(Box::new(HlManifold(m)));
        Ok(())
    })
}

/// Truncated cusp `τ ∈ [1, tau_max]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_manifold_cusp(tau_max: f64, radial_nodes: usize, angular_nodes: usize, out: *mut *mut HlManifold) -> HlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = build_cusp_cylinder(tau_max, radial_nodes, angular_nodes).map_err(lib)?;
        *out = Box::into_raw(Box::new(HlManifold(m)));
        Ok(())
    })
}

/// Manifold from a JSON model block, e.g. `{"kind":"cusp_cylinder",...}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_manifold_from_json(json: *const c_char, out: *mut *mut HlManifold) -> HlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model: Model = serde_json::from_str(str_arg(json, "json")?).map_err(|e| (HlStatus::Config, e.to_string()))?;
        let m = model.build().map_err(lib)?;
        *out = Box::into_raw(Box::new(HlManifold(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_manifold_free(m: *mut HlManifold) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Node count, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_manifold_len(m: *const HlManifold) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// Quadrature volume, or NaN for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_manifold_volume(m: *const HlManifold) -> f64 {
    m.as_ref().map_or(f64::NAN, |m| m.0.volume())
}

/// Writes the real coordinates of every node into `out`, one per real axis, node-major.
///
/// # Safety
/// `m` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_manifold_coords(m: *const HlManifold, out: *mut f64, cap: usize) -> HlStatus {
    guard(|| {
        let m = &m.as_ref().ok_or_else(|| null("manifold"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = m.axes().len();
        if cap < m.len() * d {
            return Err((HlStatus::InvalidArgument, format!("buffer holds {cap} doubles, need {}", m.len() * d)));
        }
        let o = std::slice::from_raw_parts_mut(out, m.len() * d);
        for i in 0..m.len() {
            m.coords_into(i, &mut o[i * d..(i + 1) * d]);
        }
        Ok(())
    })
}

/// Bundle from a JSON preset block, e.g. `{"preset":"split_pair","c":0.5}`.
///
/// # Safety
/// `m` must be a live handle, `json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_bundle_from_json(m: *const HlManifold, json: *const c_char, out: *mut *mut HlBundle) -> HlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = &m.as_ref().ok_or_else(|| null("manifold"))?.0;
        let preset: Preset = serde_json::from_str(str_arg(json, "json")?).map_err(|e| (HlStatus::Config, e.to_string()))?;
        let b = preset.build(m).map_err(lib)?;
        *out = Box::into_raw(Box::new(HlBundle { inner: b, nodes: m.len() }));
        Ok(())
    })
}

/// # Safety
/// `b` must be NULL or a handle from this library that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_bundle_free(b: *mut HlBundle) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Rank, or 0 for NULL.
///
/// # Safety
/// `b` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_bundle_rank(b: *const HlBundle) -> usize {
    b.as_ref().map_or(0, |b| b.inner.rank)
}

/// # Safety
/// `m` must be NULL or a handle from this library that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_metric_free(m: *mut HlMetric) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Writes the metric as interleaved (re, im) pairs, node-major then row-major: `2·len·r²` doubles.
///
/// # Safety
/// `h` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_metric_entries(h: *const HlMetric, out: *mut f64, cap: usize) -> HlStatus {
    guard(|| {
        let h = &h.as_ref().ok_or_else(|| null("metric"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = h.field().as_slice();
        if cap < 2 * v.len() {
            return Err((HlStatus::InvalidArgument, format!("buffer holds {cap} doubles, need {}", 2 * v.len())));
        }
        let o = std::slice::from_raw_parts_mut(out, 2 * v.len());
        for (k, z) in v.iter().enumerate() {
            o[2 * k] = z.re;
            o[2 * k + 1] = z.im;
        }
        Ok(())
    })
}

/// Solves `(Δ̃ − ε)f = ψ` on the closed model; `psi` and `f` hold one value per node.
///
/// # Safety
/// `m` must be a live handle; `psi` and `f` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_solve_helmholtz(m: *const HlManifold, psi: *const f64, n: usize, epsilon: f64, f: *mut f64) -> HlStatus {
    guard(|| {
        let m = &m.as_ref().ok_or_else(|| null("manifold"))?.0;
        if psi.is_null() || f.is_null() {
            return Err(null("psi/f"));
        }
        if n != m.len() {
            return Err(lib(Error::LengthMismatch { got: n, want: m.len() }));
        }
        let src = std::slice::from_raw_parts(psi, n);
        let (sol, _) = solve_helmholtz(m, src, epsilon, &Boundary::Closed, &SolveOptions::default()).map_err(lib)?;
        std::slice::from_raw_parts_mut(f, n).copy_from_slice(&sol);
        Ok(())
    })
}

/// Perturbed Hermitian–Einstein metric at `epsilon > 0` against the trace-normalized identity.
/// `sup_log_h` and `residual` may be NULL.
///
/// # Safety
/// `m` and `b` must be live handles built together; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_solve_perturbed(
    m: *const HlManifold,
    b: *const HlBundle,
    epsilon: f64,
    out: *mut *mut HlMetric,
    sup_log_h: *mut f64,
    residual: *mut f64,
) -> HlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = &m.as_ref().ok_or_else(|| null("manifold"))?.0;
        let b = b.as_ref().ok_or_else(|| null("bundle"))?;
        if b.nodes != m.len() {
            return Err(lib(Error::LengthMismatch { got: b.nodes, want: m.len() }));
        }
        let b = &b.inner;
        let id = MetricField::identity(m.len(), b.rank);
        let (_, k, _) = conformal_trace_normalize(m, b, &id, &SolveOptions::default()).map_err(lib)?;
        let sol = solve_perturbed_he(m, b, &k, epsilon, &SolveVia::Flow {}, &ImplicitConfig::default(), None).map_err(lib)?;
        if !sol.converged {
            return Err((HlStatus::NoConvergence, format!("stationary solve stopped at residual {:e}", sol.residual)));
        }
        if let Some(s) = sup_log_h.as_mut() {
            *s = sol.sup_log_h;
        }
        if let Some(r) = residual.as_mut() {
            *r = sol.residual;
        }
        *out = Box::into_raw(Box::new(HlMetric(sol.h)));
        Ok(())
    })
}

/// Runs a full experiment config (the CLI's JSON) into `out_dir`; `out_dir` may be NULL
/// to use the config's `output_dir`. `exit_code` (may be NULL) receives the CLI exit code.
///
/// # Safety
/// `config_json` and `out_dir` must be NUL-terminated strings or NULL where allowed.
#[no_mangle]
pub unsafe extern "C" fn hl_run_experiment(config_json: *const c_char, out_dir: *const c_char, exit_code: *mut i32) -> HlStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let dir = if out_dir.is_null() { None } else { Some(Path::new(str_arg(out_dir, "out_dir")?)) };
        let res = parse_config(text).and_then(|cfg| run_experiment(&cfg, dir));
        if let Some(c) = exit_code.as_mut() {
            *c = res.as_ref().map_or_else(CliError::exit_code, |_| 0);
        }
        res.map(|_| ()).map_err(|e| match e {
            CliError::Config(s) => (HlStatus::Config, s),
            CliError::Run(e) => lib(e),
        })
    })
}
