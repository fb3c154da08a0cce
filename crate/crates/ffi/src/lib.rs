//! C interface to the trajectory encoder and the clustering metrics.
//!
//! Every fallible function returns a `PtStatus`; on failure a description is
//! available from `pt_last_error` on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use phenotraj::clustering::{adjusted_rand_index, kmeans, silhouette, KMeansConfig};
use phenotraj::data::{FeatureKind, Triplet};
use phenotraj::encoder::Encoder;
use phenotraj::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    /// The quantity is undefined for the input (e.g. silhouette with one cluster).
    Undefined = 6,
    Panic = 7,
}

/// Opaque encoder handle.
pub struct PtEncoder {
    inner: Encoder,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> PtStatus {
    match e {
        Error::Io(_) => PtStatus::Io,
        Error::Format(_) | Error::Parse { .. } | Error::Csv(_) | Error::Schema(_) => PtStatus::Format,
        Error::Numerical(_) | Error::DegenerateFeature(_) => PtStatus::Numerical,
        _ => PtStatus::InvalidArgument,
    }
}

/// Runs `f`, records any error and converts panics into `PtStatus::Panic`.
fn guard(f: impl FnOnce() -> Result<(), (PtStatus, String)>) -> PtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PtStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (PtStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PtStatus, String) {
    (PtStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> (PtStatus, String) {
    (PtStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], (PtStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or valid for `len` writes.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (PtStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `points` must hold `n * dim` doubles, row-major.
unsafe fn rows(points: *const f64, n: usize, dim: usize) -> Result<Vec<Vec<f64>>, (PtStatus, String)> {
    let len = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows"))?;
    let flat = slice(points, len, "points")?;
    if dim == 0 {
        return Err(invalid("dim must be positive"));
    }
    Ok(flat.chunks(dim).map(<[f64]>::to_vec).collect())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a saved encoder. On success `*out` owns a handle that must be
/// released with `pt_encoder_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pt_encoder_load(path: *const c_char, out: *mut *mut PtEncoder) -> PtStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let p = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let inner = Encoder::load(Path::new(p)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PtEncoder { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `enc` must come from `pt_encoder_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pt_encoder_free(enc: *mut PtEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// Writes the width of the encoding and of the demographic input.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pt_encoder_dims(
    enc: *const PtEncoder,
    encoding_dim: *mut usize,
    demographics_dim: *mut usize,
) -> PtStatus {
    guard(|| {
        let enc = enc.as_ref().ok_or_else(|| null("enc"))?;
        if encoding_dim.is_null() || demographics_dim.is_null() {
            return Err(null("output"));
        }
        let c = enc.inner.config();
        *encoding_dim = c.d();
        *demographics_dim = c.demo_width;
        Ok(())
    })
}

/// Encodes one series of `n` triplets into `out` (length `out_len`, which
/// must equal the encoding dimension). Feature codes are 0..=6 in the order
/// systolic, diastolic, SpO2, respiratory rate, temperature, pulse,
/// supplemental oxygen. Values are expected already standardized.
///
/// # Safety
/// Arrays must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pt_encoder_encode(
    enc: *const PtEncoder,
    times: *const f64,
    features: *const u32,
    values: *const f64,
    n: usize,
    demographics: *const f64,
    demographics_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PtStatus {
    guard(|| {
        let enc = enc.as_ref().ok_or_else(|| null("enc"))?;
        let t = slice(times, n, "times")?;
        let f = slice(features, n, "features")?;
        let v = slice(values, n, "values")?;
        let demo = slice(demographics, demographics_len, "demographics")?;
        let out = slice_mut(out, out_len, "out")?;
        let d = enc.inner.config().d();
        if out_len != d {
            return Err(invalid(format!("out_len is {out_len}, encoding has {d} entries")));
        }
        let triplets = (0..n)
            .map(|i| {
                let feature = FeatureKind::from_code(f[i] as usize)
                    .ok_or_else(|| invalid(format!("feature code {} out of range", f[i])))?;
                Ok(Triplet { t: t[i], feature, value: v[i] })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let e = enc.inner.encode(&triplets, demo).map_err(lib_err)?;
        out.copy_from_slice(&e.e_e);
        Ok(())
    })
}

/// k-means with k-means++ seeding and ten restarts. `points` is row-major
/// `n x dim`; `labels` receives `n` cluster ids in `0..k`.
///
/// # Safety
/// Arrays must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pt_kmeans(
    points: *const f64,
    n: usize,
    dim: usize,
    k: usize,
    seed: u64,
    labels: *mut i64,
) -> PtStatus {
    guard(|| {
        let pts = rows(points, n, dim)?;
        let out = slice_mut(labels, n, "labels")?;
        let cfg = KMeansConfig {
            k,
            seed,
            ..KMeansConfig::default()
        };
        let r = kmeans(&pts, &cfg).map_err(lib_err)?;
        out.copy_from_slice(&r.assignment.labels);
        Ok(())
    })
}

/// Mean silhouette over non-noise points (label -1 is noise). Returns
/// `PtStatus::Undefined` when fewer than two clusters remain.
///
/// # Safety
/// Arrays must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pt_silhouette(
    points: *const f64,
    n: usize,
    dim: usize,
    labels: *const i64,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        let pts = rows(points, n, dim)?;
        let l = slice(labels, n, "labels")?;
        if out.is_null() {
            return Err(null("out"));
        }
        match silhouette(&pts, l).map_err(lib_err)? {
            Some(s) => {
                *out = s;
                Ok(())
            }
            None => Err((PtStatus::Undefined, "silhouette needs at least two clusters".into())),
        }
    })
}

/// Adjusted Rand index between two labelings of `n` points; points with
/// label -1 in `labels` are left out.
///
/// # Safety
/// Arrays must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pt_adjusted_rand_index(
    labels: *const i64,
    truth: *const i64,
    n: usize,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        let a = slice(labels, n, "labels")?;
        let b = slice(truth, n, "truth")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = adjusted_rand_index(a, b).map_err(lib_err)?;
        Ok(())
    })
}
