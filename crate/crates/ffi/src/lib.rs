//! C ABI over the `smallgain` example system.
//!
//! Objects are opaque handles created by `sg_*_new` and released with the
//! matching `sg_*_free`. Every fallible call returns an [`SgStatus`]; on
//! failure, [`sg_last_error_message`] copies a description of the most
//! recent error raised on the calling thread. Panics never cross the
//! boundary: they are reported as [`SgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use smallgain::density::{divergence, DensityFn};
use smallgain::example_system::{example_model, increasing_intervals, Example, ExampleParams};
use smallgain::iss_model::SystemModel;
use smallgain::scalar_fn::DEFAULT_REFINE_TOL;
use smallgain::sim::{integrate, IntegrateOptions, Trajectory};
use smallgain::SgcAnalysis;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Numerical = 4,
    Panic = 5,
}

/// Density used by [`sg_divergence`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgDensity {
    /// `exp(-(x1 + x2))`
    ExpSum = 0,
    /// `exp(-(|x1| + |x2|))`
    ExpAbsSum = 1,
}

/// One interval of an [`SgAnalysis`]. `right_open` marks an interval that
/// was still open at the scan bound.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgInterval {
    pub lo: f64,
    pub hi: f64,
    pub right_open: bool,
}

/// The example interconnection for fixed `n`, input bounds and `δ`.
pub struct SgModel {
    example: Arc<Example>,
    model: SystemModel,
}

/// Intervals on which `g` is increasing in floating point.
pub struct SgAnalysis(SgcAnalysis);

/// A recorded RK4 trajectory.
pub struct SgTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SgStatus, msg: impl Into<String>) -> SgStatus {
    set_error(msg);
    status
}

fn status_of(err: &smallgain::Error) -> SgStatus {
    use smallgain::Error as E;
    match err {
        E::Domain { .. } | E::OutOfRange { .. } | E::IndexOutOfRange { .. } => SgStatus::OutOfRange,
        E::NonFinite { .. } | E::NonMonotone { .. } | E::DensityNotPositive { .. } => SgStatus::Numerical,
        _ => SgStatus::InvalidArgument,
    }
}

/// Runs `body`, turning errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), SgStatus>) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SgStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SgStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lift<T>(r: smallgain::Result<T>) -> Result<T, SgStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, SgStatus> {
    // SAFETY: the caller passes a handle from the matching constructor or null.
    unsafe { p.as_ref() }.ok_or_else(|| fail(SgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), SgStatus> {
    if out.is_null() {
        return Err(fail(SgStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and, per the API contract, valid for writes.
    unsafe { out.write(v) };
    Ok(())
}

/// Version of this library as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length excluding the
/// terminator, or 0 when no error has been recorded. `buf` may be null to
/// query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: `buf` holds at least `len > n` bytes.
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Builds the example with `n` summands (`n < 0` selects the infinite sum
/// evaluated on `[0, 100]`), input bounds `u1`, `u2` and gain parameter
/// `delta` in `(0, 1)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_model_new(n: i32, u1: f64, u2: f64, delta: f64, out: *mut *mut SgModel) -> SgStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SgStatus::NullPointer, "out is null"));
        }
        let params = if n < 0 {
            ExampleParams { n: smallgain::example_system::Terms::Infinite { range: 100.0 }, ..ExampleParams::new(0) }
        } else {
            ExampleParams::new(n as u32)
        };
        let example = Arc::new(lift(Example::new(params.with_inputs(u1, u2)))?);
        let model = lift(example_model(&example, delta))?;
        // SAFETY: checked non-null above.
        unsafe { write(out, Box::into_raw(Box::new(SgModel { example, model })), "out") }
    })
}

/// # Safety
/// `model` must be null or a handle from [`sg_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_model_free(model: *mut SgModel) {
    if !model.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// The odd profile `g(r)`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_g(model: *const SgModel, r: f64, out: *mut f64) -> SgStatus {
    guard(|| unsafe {
        let m = deref(model, "model")?;
        write(out, m.example.g(r), "out")
    })
}

/// The coupling term `h(r)`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_h(model: *const SgModel, r: f64, out: *mut f64) -> SgStatus {
    guard(|| unsafe {
        let m = deref(model, "model")?;
        write(out, m.example.h(r), "out")
    })
}

/// Vector field at `(x1, x2)` with inputs `(u1, u2)`, written to `out[0..2]`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for two writes.
#[no_mangle]
pub unsafe extern "C" fn sg_field(
    model: *const SgModel,
    x1: f64,
    x2: f64,
    u1: f64,
    u2: f64,
    out: *mut f64,
) -> SgStatus {
    guard(|| unsafe {
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(fail(SgStatus::NullPointer, "out is null"));
        }
        let mut f = [0.0; 2];
        m.model.field(&[x1, x2], [u1, u2], &mut f);
        std::slice::from_raw_parts_mut(out, 2).copy_from_slice(&f);
        Ok(())
    })
}

/// `div(ρ f)` at `(x1, x2)` with inputs `(u1, u2)`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_divergence(
    model: *const SgModel,
    density: SgDensity,
    x1: f64,
    x2: f64,
    u1: f64,
    u2: f64,
    out: *mut f64,
) -> SgStatus {
    guard(|| unsafe {
        let m = deref(model, "model")?;
        let rho = match density {
            SgDensity::ExpSum => DensityFn::exp_sum(),
            SgDensity::ExpAbsSum => DensityFn::exp_abs_sum(),
        };
        let d = lift(divergence(&rho, &m.model, &[x1, x2], [u1, u2]))?;
        write(out, d, "out")
    })
}

/// Number of equilibria `r_k` of `g` inside the evaluation range.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_equilibrium_count(model: *const SgModel, out: *mut usize) -> SgStatus {
    guard(|| unsafe {
        let m = deref(model, "model")?;
        write(out, m.example.equilibria().len(), "out")
    })
}

/// The `index`-th equilibrium `r_k` (0-based).
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_equilibrium(model: *const SgModel, index: usize, out: *mut f64) -> SgStatus {
    guard(|| unsafe {
        let m = deref(model, "model")?;
        let eqs = m.example.equilibria();
        let r = *eqs
            .get(index)
            .ok_or_else(|| fail(SgStatus::OutOfRange, format!("equilibrium {index} of {}", eqs.len())))?;
        write(out, r, "out")
    })
}

/// Locates the intervals on which `g` increases in floating point over
/// `[0, scan_bound]`. Non-positive `scan_bound` or `grid_step` select the
/// defaults (`1.1 a` and `scan_bound / 1000`).
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_sgc_new(
    model: *const SgModel,
    scan_bound: f64,
    grid_step: f64,
    out: *mut *mut SgAnalysis,
) -> SgStatus {
    guard(|| unsafe {
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(fail(SgStatus::NullPointer, "out is null"));
        }
        let sb = if scan_bound > 0.0 { scan_bound } else { m.example.scan_bound() };
        let step = if grid_step > 0.0 { grid_step } else { 1e-3 * sb };
        let a = lift(increasing_intervals(&m.example, sb, step, DEFAULT_REFINE_TOL))?;
        write(out, Box::into_raw(Box::new(SgAnalysis(a))), "out")
    })
}

/// # Safety
/// `analysis` must be null or a handle from [`sg_sgc_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_sgc_free(analysis: *mut SgAnalysis) {
    if !analysis.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(analysis) });
    }
}

/// # Safety
/// `analysis` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_sgc_count(analysis: *const SgAnalysis, out: *mut usize) -> SgStatus {
    guard(|| unsafe {
        let a = deref(analysis, "analysis")?;
        write(out, a.0.len(), "out")
    })
}

/// # Safety
/// `analysis` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_sgc_interval(analysis: *const SgAnalysis, index: usize, out: *mut SgInterval) -> SgStatus {
    guard(|| unsafe {
        let a = deref(analysis, "analysis")?;
        let iv =
            a.0.intervals
                .get(index)
                .ok_or_else(|| fail(SgStatus::OutOfRange, format!("interval {index} of {}", a.0.len())))?;
        write(out, SgInterval { lo: iv.lo, hi: iv.hi, right_open: iv.right_open }, "out")
    })
}

/// Integrates from `(x1, x2)` with constant inputs `(u1, u2)` over
/// `[0, t_end]` with RK4 step `dt`, keeping every `stride`-th state (and
/// the last). A trajectory that leaves the escape ball ends early; see
/// [`sg_trajectory_escaped`].
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_integrate(
    model: *const SgModel,
    x1: f64,
    x2: f64,
    u1: f64,
    u2: f64,
    t_end: f64,
    dt: f64,
    stride: usize,
    out: *mut *mut SgTrajectory,
) -> SgStatus {
    guard(|| unsafe {
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(fail(SgStatus::NullPointer, "out is null"));
        }
        let opts = IntegrateOptions { record_stride: stride, error_estimate: false, ..Default::default() };
        let t = lift(integrate(&m.model, &[x1, x2], [u1, u2], t_end, dt, opts))?;
        write(out, Box::into_raw(Box::new(SgTrajectory(t))), "out")
    })
}

/// # Safety
/// `traj` must be null or a handle from [`sg_integrate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_free(traj: *mut SgTrajectory) {
    if !traj.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(traj) });
    }
}

/// Number of recorded states.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_len(traj: *const SgTrajectory, out: *mut usize) -> SgStatus {
    guard(|| unsafe {
        let t = deref(traj, "trajectory")?;
        write(out, t.0.len(), "out")
    })
}

/// Time and state of the `index`-th recorded sample.
///
/// # Safety
/// `traj` must be a live handle; `t`, `x1` and `x2` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_point(
    traj: *const SgTrajectory,
    index: usize,
    t: *mut f64,
    x1: *mut f64,
    x2: *mut f64,
) -> SgStatus {
    guard(|| unsafe {
        let tr = deref(traj, "trajectory")?;
        if index >= tr.0.len() {
            return Err(fail(SgStatus::OutOfRange, format!("sample {index} of {}", tr.0.len())));
        }
        let s = tr.0.state(index);
        write(t, tr.0.times[index], "t")?;
        write(x1, s[0], "x1")?;
        write(x2, s[1], "x2")
    })
}

/// Writes whether the trajectory left the escape ball.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_escaped(traj: *const SgTrajectory, out: *mut bool) -> SgStatus {
    guard(|| unsafe {
        let t = deref(traj, "trajectory")?;
        write(out, t.0.escaped_at.is_some(), "out")
    })
}
