//! C ABI over the `ctsynth` evaluation toolkit.
//!
//! Every fallible function returns a [`CtsStatus`] code. On failure the
//! message is kept per thread and can be read with
//! [`ctsynth_last_error_message`]. Objects are opaque handles released by
//! their `_free` function; strings returned to the caller are released with
//! [`ctsynth_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ctsynth::frechet::{fid_between_sets, frechet_distance, load_features, FeatureMatrix, GaussianSummary, Matrix};
use ctsynth::histogram::{hist_correlation, hist_intersection, kl_divergence, Histogram};
use ctsynth::imaging::window::window_value;
use ctsynth::imaging::{assign_layers, load_manifest, ImageSet, LayerOverrides};
use ctsynth::stratified::{evaluate_sets, export_report, Baseline, EvalConfig, EvaluationReport, FeaturePair};
use ctsynth::survey::{chi_squared_test, ContingencyTable};
use ctsynth::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtsStatus {
    Ok = 0,
    UnsupportedEncoding = 1,
    MalformedInput = 2,
    InvalidParameter = 3,
    DegenerateDistribution = 4,
    NotPositiveSemidefinite = 5,
    InsufficientSamples = 6,
    DegenerateBaseline = 7,
    MissingFeature = 8,
    DegenerateTable = 9,
    IoError = 10,
    NullPointer = 11,
    InvalidUtf8 = 12,
    Panic = 13,
}

impl From<&Error> for CtsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::UnsupportedEncoding { .. } => CtsStatus::UnsupportedEncoding,
            Error::MalformedInput { .. } => CtsStatus::MalformedInput,
            Error::InvalidParameter(_) => CtsStatus::InvalidParameter,
            Error::DegenerateDistribution(_) => CtsStatus::DegenerateDistribution,
            Error::NotPositiveSemidefinite { .. } => CtsStatus::NotPositiveSemidefinite,
            Error::InsufficientSamples { .. } => CtsStatus::InsufficientSamples,
            Error::DegenerateBaseline { .. } => CtsStatus::DegenerateBaseline,
            Error::MissingFeature(_) => CtsStatus::MissingFeature,
            Error::DegenerateTable(_) => CtsStatus::DegenerateTable,
            Error::Io { .. } => CtsStatus::IoError,
        }
    }
}

/// A layered image set loaded from a manifest.
pub struct CtsImageSet(ImageSet);

/// A feature matrix loaded from a feature file.
pub struct CtsFeatures(FeatureMatrix);

/// The outcome of an evaluation.
pub struct CtsReport(EvaluationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CtsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(CtsStatus::from(&e), format!("{}: {e}", e.kind()))
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> CtsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CtsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside ctsynth".into());
            CtsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CtsStatus::NullPointer, format!("NullPointer: {what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> FfiResult<PathBuf> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CtsStatus::InvalidUtf8, format!("InvalidUtf8: {what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn opt_path(p: *const c_char, what: &str) -> FfiResult<Option<PathBuf>> {
    if p.is_null() {
        Ok(None)
    } else {
        path_arg(p, what).map(Some)
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ctsynth_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ctsynth_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a manifest and assigns axial layers, optionally from an overrides file.
///
/// # Safety
/// `manifest` must be a NUL-terminated path; `layers` may be NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_image_set_load(
    manifest: *const c_char,
    layers: *const c_char,
    out: *mut *mut CtsImageSet,
) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(manifest, "manifest")?;
        let overrides = opt_path(layers, "layers")?.map(LayerOverrides::load).transpose()?;
        let set = assign_layers(load_manifest(path)?, overrides.as_ref())?;
        *out = Box::into_raw(Box::new(CtsImageSet(set)));
        Ok(())
    })
}

/// Number of slices in the set, 0 for NULL.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_image_set_num_slices(set: *const CtsImageSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.num_slices())
}

/// # Safety
/// `set` must be NULL or a handle from [`ctsynth_image_set_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_image_set_free(set: *mut CtsImageSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Loads a feature file and its sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated path and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_features_load(path: *const c_char, out: *mut *mut CtsFeatures) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = load_features(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CtsFeatures(f)));
        Ok(())
    })
}

/// Writes the row count and dimension of a feature matrix.
///
/// # Safety
/// `f` must be a live handle; `n` and `d` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_features_shape(f: *const CtsFeatures, n: *mut usize, d: *mut usize) -> CtsStatus {
    guard(|| {
        let f = handle(f, "features")?;
        *out_arg(n, "n")? = f.0.n();
        *out_arg(d, "d")? = f.0.d();
        Ok(())
    })
}

/// # Safety
/// `f` must be NULL or a handle from [`ctsynth_features_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_features_free(f: *mut CtsFeatures) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Fréchet distance between two Gaussians of dimension `d`. Means have `d`
/// entries, covariances `d*d` row-major.
///
/// # Safety
/// Array arguments must hold the stated number of elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_frechet_distance(
    d: usize,
    mean1: *const f64,
    cov1: *const f64,
    mean2: *const f64,
    cov2: *const f64,
    eps: f64,
    out: *mut f64,
) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = |m: *const f64, c: *const f64| -> FfiResult<GaussianSummary> {
            let mean = slice_arg(m, d, "mean")?.to_vec();
            let cov = Matrix::from_rows(d, slice_arg(c, d * d, "cov")?.to_vec())?;
            Ok(GaussianSummary::new(mean, cov)?)
        };
        *out = frechet_distance(&g(mean1, cov1)?, &g(mean2, cov2)?, eps)?;
        Ok(())
    })
}

/// FID between two loaded feature matrices.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_fid(real: *const CtsFeatures, synth: *const CtsFeatures, out: *mut f64) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = fid_between_sets(&handle(real, "real")?.0, &handle(synth, "synth")?.0)?;
        Ok(())
    })
}

unsafe fn density(p: *const f64, n: usize, what: &str) -> FfiResult<Histogram> {
    let d = slice_arg(p, n, what)?.to_vec();
    let edges = (0..=n).map(|i| i as f64).collect();
    Ok(Histogram::from_density(edges, d)?)
}

/// KL divergence D(p‖q) in nats of two `n`-bin densities summing to 1.
///
/// # Safety
/// `p` and `q` must hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_kl_divergence(
    p: *const f64,
    q: *const f64,
    n: usize,
    epsilon: f64,
    out: *mut f64,
) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = kl_divergence(&density(p, n, "p")?, &density(q, n, "q")?, epsilon)?;
        Ok(())
    })
}

/// Pearson correlation of two `n`-bin densities.
///
/// # Safety
/// `a` and `b` must hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_hist_correlation(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut f64,
) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = hist_correlation(&density(a, n, "a")?, &density(b, n, "b")?)?;
        Ok(())
    })
}

/// Intersection of two `n`-bin densities.
///
/// # Safety
/// `a` and `b` must hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_hist_intersection(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut f64,
) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = hist_intersection(&density(a, n, "a")?, &density(b, n, "b")?)?;
        Ok(())
    })
}

/// Maps `len` calibrated values to 8-bit display levels for a window.
///
/// # Safety
/// `values` and `out` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_window(
    values: *const f32,
    len: usize,
    center: f64,
    width: f64,
    out: *mut u8,
) -> CtsStatus {
    guard(|| {
        if width.is_nan() || width <= 0.0 || !center.is_finite() {
            return Err(Error::invalid(format!("window width must be positive, got {width}")).into());
        }
        let v = slice_arg(values, len, "values")?;
        if len > 0 && out.is_null() {
            return Err(null("out"));
        }
        let dst = if len == 0 { &mut [][..] } else { std::slice::from_raw_parts_mut(out, len) };
        for (d, &x) in dst.iter_mut().zip(v) {
            *d = window_value(f64::from(x), center, width);
        }
        Ok(())
    })
}

/// Pearson Chi-squared test of independence on a `rows` x `cols` table given row-major.
///
/// # Safety
/// `counts` must hold `rows*cols` values; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_chi_squared(
    counts: *const u64,
    rows: usize,
    cols: usize,
    yates: bool,
    statistic: *mut f64,
    dof: *mut usize,
    p_value: *mut f64,
) -> CtsStatus {
    guard(|| {
        let c = slice_arg(counts, rows * cols, "counts")?;
        if cols == 0 {
            return Err(Error::DegenerateTable("table has no columns".into()).into());
        }
        let table = ContingencyTable::from_counts(c.chunks(cols).map(<[u64]>::to_vec).collect())?;
        let r = chi_squared_test(&table, yates)?;
        *out_arg(statistic, "statistic")? = r.statistic;
        *out_arg(dof, "dof")? = r.dof;
        *out_arg(p_value, "p_value")? = r.p_value;
        Ok(())
    })
}

/// Layer-wise evaluation with default settings. `baseline`, `real_features`
/// and `synth_features` may be NULL; features go together.
///
/// # Safety
/// Handles must be live or NULL where allowed; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_evaluate(
    real: *const CtsImageSet,
    synth: *const CtsImageSet,
    baseline: *const c_char,
    real_features: *const CtsFeatures,
    synth_features: *const CtsFeatures,
    out: *mut *mut CtsReport,
) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let real = handle(real, "real")?;
        let synth = handle(synth, "synth")?;
        let baseline = opt_path(baseline, "baseline")?.map(Baseline::load).transpose()?;
        let pair = match (real_features.as_ref(), synth_features.as_ref()) {
            (Some(r), Some(s)) => Some(FeaturePair { real: &r.0, synth: &s.0 }),
            (None, None) => None,
            _ => return Err(Error::invalid("real and synthetic features go together").into()),
        };
        let report = evaluate_sets(&real.0, &synth.0, baseline.as_ref(), pair, &EvalConfig::default())?;
        *out = Box::into_raw(Box::new(CtsReport(report)));
        Ok(())
    })
}

/// The report as JSON. Release with [`ctsynth_string_free`].
///
/// # Safety
/// `report` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_report_json(report: *const CtsReport, out: *mut *mut c_char) -> CtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let json = handle(report, "report")?.0.to_json();
        *out = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// Writes report.json, scores.csv and the per-metric charts into `dir`.
///
/// # Safety
/// `report` must be live; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_report_write(report: *const CtsReport, dir: *const c_char) -> CtsStatus {
    guard(|| {
        let r = handle(report, "report")?;
        export_report(&r.0, path_arg(dir, "dir")?)?;
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle from [`ctsynth_evaluate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctsynth_report_free(report: *mut CtsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
