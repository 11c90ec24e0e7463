//! C ABI over the `carleson` crate.
//!
//! Spaces and filtrations are opaque heap handles released with their
//! `_free` functions. Every call returns a [`CarlesonStatus`]; on failure the
//! message is kept per thread and read with
//! [`carleson_last_error_message`]. Strings returned through out-parameters
//! are owned by the caller and released with [`carleson_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use carleson::carleson::{carleson_sum_cubes, EstimatorConfig};
use carleson::cli::{generate_set, Kind};
use carleson::cubes::{build_filtration, build_nets, default_scale_range, validate_filtration, Filtration};
use carleson::jns::{verify_jns, JnsInstance};
use carleson::{Error, MetricMeasureSpace};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarlesonStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NotAMetric = 3,
    Degenerate = 4,
    OutOfRange = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

/// A finite metric space with point masses.
pub struct CarlesonSpace {
    inner: MetricMeasureSpace,
}

/// A cube filtration built on a space.
pub struct CarlesonFiltration {
    inner: Filtration,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CarlesonStatus {
    match e {
        Error::IndexOutOfRange { .. } => CarlesonStatus::OutOfRange,
        Error::InvalidInput(_) | Error::EmptySet(_) => CarlesonStatus::InvalidInput,
        Error::NotAMetric(_) => CarlesonStatus::NotAMetric,
        Error::Degenerate(_) => CarlesonStatus::Degenerate,
        Error::Parse { .. } | Error::Json(_) => CarlesonStatus::Parse,
        Error::Io { .. } => CarlesonStatus::Io,
    }
}

struct Fail(CarlesonStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CarlesonStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CarlesonStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CarlesonStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            CarlesonStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn space_ref<'a>(p: *const CarlesonSpace) -> Result<&'a MetricMeasureSpace, Fail> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| null("space"))
}

unsafe fn filtration_ref<'a>(p: *const CarlesonFiltration) -> Result<&'a Filtration, Fail> {
    p.as_ref().map(|f| &f.inner).ok_or_else(|| null("filtration"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CarlesonStatus::InvalidInput, format!("{what} is not UTF-8")))
}

fn give_string(s: String, out: &mut *mut c_char) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(CarlesonStatus::InvalidInput, "string holds a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn carleson_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Euclidean space from `n * dim` row-major coordinates and `n` weights.
///
/// # Safety
/// `coords` and `weights` must point to `n * dim` and `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn carleson_space_euclidean(
    dim: usize,
    n: usize,
    coords: *const f64,
    weights: *const f64,
    out: *mut *mut CarlesonSpace,
) -> CarlesonStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if coords.is_null() || weights.is_null() {
            return Err(null("coords or weights"));
        }
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Fail(CarlesonStatus::InvalidInput, "n * dim overflows".into()))?;
        let c = std::slice::from_raw_parts(coords, len).to_vec();
        let w = std::slice::from_raw_parts(weights, n).to_vec();
        let inner = MetricMeasureSpace::euclidean(dim, c, w)?;
        *out = Box::into_raw(Box::new(CarlesonSpace { inner }));
        Ok(())
    })
}

/// Generated space: `kind` is one of segment, circle, lipschitz, koch,
/// cantor, bpli; `size` is the point count (level for koch, generation for
/// cantor).
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_space_generate(
    kind: *const c_char,
    size: u32,
    seed: u64,
    out: *mut *mut CarlesonSpace,
) -> CarlesonStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let kind = match str_arg(kind, "kind")? {
            "segment" => Kind::Segment,
            "circle" => Kind::Circle,
            "lipschitz" => Kind::Lipschitz,
            "koch" => Kind::Koch,
            "cantor" => Kind::Cantor,
            "bpli" => Kind::Bpli,
            other => return Err(Fail(CarlesonStatus::InvalidInput, format!("unknown kind {other:?}"))),
        };
        let (inner, _) = generate_set(kind, size, 1.0, std::f64::consts::FRAC_PI_3, 0.5, seed)?;
        *out = Box::into_raw(Box::new(CarlesonSpace { inner }));
        Ok(())
    })
}

/// # Safety
/// `space` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn carleson_space_free(space: *mut CarlesonSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of points, 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn carleson_space_len(space: *const CarlesonSpace) -> usize {
    space.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_space_diameter(space: *const CarlesonSpace, out: *mut f64) -> CarlesonStatus {
    guard(|| {
        *out_ref(out, "out")? = space_ref(space)?.diameter();
        Ok(())
    })
}

/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_distance(space: *const CarlesonSpace, i: usize, j: usize, out: *mut f64) -> CarlesonStatus {
    guard(|| {
        *out_ref(out, "out")? = space_ref(space)?.distance(i, j)?;
        Ok(())
    })
}

/// Triangle excess of three points.
///
/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_excess_delta(
    space: *const CarlesonSpace,
    i: usize,
    j: usize,
    k: usize,
    out: *mut f64,
) -> CarlesonStatus {
    guard(|| {
        *out_ref(out, "out")? = space_ref(space)?.excess_delta(i, j, k)?;
        Ok(())
    })
}

/// Builds shifted filtration `shift` (1-based) over `scales` scales; 0 scales
/// means the default range.
///
/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_filtration_build(
    space: *const CarlesonSpace,
    scales: usize,
    shift: usize,
    seed: u64,
    out: *mut *mut CarlesonFiltration,
) -> CarlesonStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let s = space_ref(space)?;
        let (k0, k1) = default_scale_range(s, (scales > 0).then_some(scales));
        let inner = build_filtration(s, &build_nets(s, k0, k1, seed)?, shift)?;
        *out = Box::into_raw(Box::new(CarlesonFiltration { inner }));
        Ok(())
    })
}

/// # Safety
/// `filtration` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn carleson_filtration_free(filtration: *mut CarlesonFiltration) {
    if !filtration.is_null() {
        drop(Box::from_raw(filtration));
    }
}

/// Number of cubes, 0 for a null handle.
///
/// # Safety
/// `filtration` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn carleson_filtration_cube_count(filtration: *const CarlesonFiltration) -> usize {
    filtration.as_ref().map_or(0, |f| f.inner.cubes.len())
}

fn matched<'a>(s: &MetricMeasureSpace, f: &'a Filtration) -> Result<&'a Filtration, Fail> {
    if f.point_count != s.len() {
        return Err(Fail(
            CarlesonStatus::InvalidInput,
            format!("filtration has {} points, space has {}", f.point_count, s.len()),
        ));
    }
    Ok(f)
}

/// Number of invariant violations found by validation.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_filtration_violation_count(
    space: *const CarlesonSpace,
    filtration: *const CarlesonFiltration,
    out: *mut usize,
) -> CarlesonStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let s = space_ref(space)?;
        let f = matched(s, filtration_ref(filtration)?)?;
        *out = validate_filtration(s, f).len();
        Ok(())
    })
}

unsafe fn root_report(
    space: *const CarlesonSpace,
    filtration: *const CarlesonFiltration,
    exact_cutoff: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<carleson::carleson::CarlesonReport, Fail> {
    let s = space_ref(space)?;
    let f = matched(s, filtration_ref(filtration)?)?;
    let config = EstimatorConfig {
        exact_cutoff,
        mc_samples,
        seed,
        repeats: 1,
    };
    let root = f
        .root()
        .ok_or_else(|| Fail(CarlesonStatus::InvalidInput, "filtration has no single root".into()))?;
    Ok(carleson_sum_cubes(s, f, root, &config)?)
}

/// Carleson total and ratio over the whole filtration.
///
/// # Safety
/// Handles must be live; `total` and `ratio` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_sum_cubes_root(
    space: *const CarlesonSpace,
    filtration: *const CarlesonFiltration,
    exact_cutoff: usize,
    mc_samples: usize,
    seed: u64,
    total: *mut f64,
    ratio: *mut f64,
) -> CarlesonStatus {
    guard(|| {
        let total = out_ref(total, "total")?;
        let ratio = out_ref(ratio, "ratio")?;
        let r = root_report(space, filtration, exact_cutoff, mc_samples, seed)?;
        *total = r.total;
        *ratio = r.ratio;
        Ok(())
    })
}

/// The full root report as JSON; release with `carleson_string_free`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_sum_cubes_json(
    space: *const CarlesonSpace,
    filtration: *const CarlesonFiltration,
    exact_cutoff: usize,
    mc_samples: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> CarlesonStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let r = root_report(space, filtration, exact_cutoff, mc_samples, seed)?;
        give_string(serde_json::to_string(&r).map_err(Error::from)?, out)
    })
}

/// Verifies a JSON instance `{tree, alpha, N, eta}` and returns the report
/// as JSON; release with `carleson_string_free`.
///
/// # Safety
/// `instance_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carleson_jns_verify_json(instance_json: *const c_char, out: *mut *mut c_char) -> CarlesonStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let text = str_arg(instance_json, "instance_json")?;
        let instance: JnsInstance = serde_json::from_str(text).map_err(Error::from)?;
        let report = verify_jns(&instance)?;
        give_string(serde_json::to_string(&report).map_err(Error::from)?, out)
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn carleson_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
