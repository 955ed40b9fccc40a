//! C ABI for `kinvlap`.
//!
//! Every fallible call returns a [`KinvlapStatus`]; on failure the message is
//! available from [`kinvlap_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kinvlap::binfmt::Dtype;
use kinvlap::cli::{resolve_epsilon, GenerateConfig};
use kinvlap::convergence::{run_sweep, ConvergenceConfig};
use kinvlap::dataset::{generate, Dataset};
use kinvlap::error::Error;
use kinvlap::oracle::{compare_spectra, dense_laplacian, EXACT_TOL, QUADRATURE_TOL};
use kinvlap::spectral::{full_spectrum, SpectralBundle};

/// Status codes; the non-zero values match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KinvlapStatus {
    Ok = 0,
    /// A required pointer was null or a string was not valid UTF-8.
    InvalidArgument = 1,
    Input = 2,
    Integrity = 3,
    Mismatch = 4,
    Numerical = 5,
    /// The library panicked; this is a bug.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KinvlapDtype {
    Complex128 = 0,
    Complex64 = 1,
}

/// Opaque dataset handle.
pub struct KinvlapDataset(Dataset);

/// Opaque spectrum handle.
pub struct KinvlapSpectrum(SpectralBundle);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> KinvlapStatus {
    match e.exit_code() {
        3 => KinvlapStatus::Integrity,
        4 => KinvlapStatus::Mismatch,
        5 => KinvlapStatus::Numerical,
        _ => KinvlapStatus::Input,
    }
}

struct Failure(KinvlapStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(KinvlapStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KinvlapStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KinvlapStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            KinvlapStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a NUL-terminated string valid for reads.
unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(invalid(&format!("{name} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid(&format!("{name} is not valid UTF-8")))
}

/// # Safety
/// `p` must be null or valid for a write of `T`.
unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(&format!("{name} is null")))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn kinvlap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn kinvlap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Samples a dataset from a `generate` config given as JSON text.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_dataset_generate(config_json: *const c_char, out: *mut *mut KinvlapDataset) -> KinvlapStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let out = out_arg(out, "out")?;
        let c: GenerateConfig = serde_json::from_str(text).map_err(|e| Failure(KinvlapStatus::Input, format!("config: {e}")))?;
        c.manifold.validate()?;
        let group = c
            .group
            .clone()
            .unwrap_or_else(|| c.manifold.default_group(c.quadrature_order, None));
        let ds = generate(&c.manifold, c.n, c.seed, &group)?;
        *out = Box::into_raw(Box::new(KinvlapDataset(ds)));
        Ok(())
    })
}

/// Reads a bundle directory (`points.csv`, `group.json`, optional `meta.json`).
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_dataset_load(dir: *const c_char, out: *mut *mut KinvlapDataset) -> KinvlapStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let out = out_arg(out, "out")?;
        let ds = Dataset::load_bundle(&dir)?;
        *out = Box::into_raw(Box::new(KinvlapDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_dataset_save(ds: *const KinvlapDataset, dir: *const c_char) -> KinvlapStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| invalid("ds is null"))?;
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        ds.0.save_bundle(&dir)?;
        Ok(())
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_dataset_len(ds: *const KinvlapDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Copies the 64-character hex hash plus NUL into `buf` (at least 65 bytes).
///
/// # Safety
/// `ds` must be a live handle and `buf` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_dataset_hash(ds: *const KinvlapDataset, buf: *mut c_char, len: usize) -> KinvlapStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| invalid("ds is null"))?;
        if buf.is_null() {
            return Err(invalid("buf is null"));
        }
        let h = ds.0.hash();
        if len < h.len() + 1 {
            return Err(invalid(&format!("buffer of {len} bytes is too small, need {}", h.len() + 1)));
        }
        ptr::copy_nonoverlapping(h.as_ptr().cast::<c_char>(), buf, h.len());
        *buf.add(h.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_dataset_free(ds: *mut KinvlapDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn epsilon_arg(ds: &Dataset, epsilon: f64) -> Result<kinvlap::affinity::AffinityParams, Failure> {
    // non-positive selects the median heuristic
    let e = (epsilon > 0.0 || epsilon.is_nan()).then_some(epsilon);
    Ok(resolve_epsilon(ds, e)?.0)
}

/// Full block spectrum. `epsilon ≤ 0` selects the median squared distance;
/// `lmax < 0` keeps every irrep the group carries.
///
/// # Safety
/// `ds` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_spectrum_compute(
    ds: *const KinvlapDataset,
    epsilon: f64,
    lmax: i64,
    normalized: bool,
    out: *mut *mut KinvlapSpectrum,
) -> KinvlapStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| invalid("ds is null"))?.0;
        let out = out_arg(out, "out")?;
        let p = epsilon_arg(ds, epsilon)?;
        let lmax = usize::try_from(lmax).ok();
        let b = full_spectrum(ds, &p, lmax, normalized)?;
        *out = Box::into_raw(Box::new(KinvlapSpectrum(b)));
        Ok(())
    })
}

/// Number of eigenvalues counted with multiplicity `dim E_ℓ`.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_spectrum_len(s: *const KinvlapSpectrum) -> usize {
    s.as_ref()
        .map_or(0, |s| s.0.pairs.iter().map(|p| p.irrep.dim).sum())
}

/// Writes the ascending eigenvalues (with multiplicity) into `buf`. `written`
/// receives the number copied, at most `cap`.
///
/// # Safety
/// `s` must be a live handle, `buf` writable for `cap` doubles, `written` writable.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_spectrum_values(
    s: *const KinvlapSpectrum,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> KinvlapStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| invalid("spectrum is null"))?;
        let written = out_arg(written, "written")?;
        if buf.is_null() && cap > 0 {
            return Err(invalid("buf is null"));
        }
        let v = s.0.expanded_values();
        let n = v.len().min(cap);
        if n > 0 {
            ptr::copy_nonoverlapping(v.as_ptr(), buf, n);
        }
        *written = n;
        Ok(())
    })
}

/// Writes `spectrum.csv` and the eigenvector files into `dir`.
///
/// # Safety
/// `s` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_spectrum_export(s: *const KinvlapSpectrum, dir: *const c_char, dtype: KinvlapDtype) -> KinvlapStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| invalid("spectrum is null"))?;
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let dtype = match dtype {
            KinvlapDtype::Complex128 => Dtype::Complex128,
            KinvlapDtype::Complex64 => Dtype::Complex64,
        };
        s.0.export(&dir, dtype)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_spectrum_free(s: *mut KinvlapSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Compares the block spectrum with the dense oracle. `tol ≤ 0` selects the
/// default (1e-8 for finite groups, 1e-6 otherwise). Returns `Mismatch` when the
/// deviation exceeds it; `max_abs_dev` (if non-null) receives the deviation.
///
/// # Safety
/// `ds` must be a live handle; `max_abs_dev` null or writable.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_validate(
    ds: *const KinvlapDataset,
    epsilon: f64,
    normalized: bool,
    tol: f64,
    max_abs_dev: *mut f64,
) -> KinvlapStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| invalid("ds is null"))?.0;
        let p = epsilon_arg(ds, epsilon)?;
        let tol = if tol > 0.0 {
            tol
        } else if ds.group().kind().is_finite() {
            EXACT_TOL
        } else {
            QUADRATURE_TOL
        };
        let dense = dense_laplacian(ds, &p)?.spectrum(normalized)?;
        let bundle = full_spectrum(ds, &p, None, normalized)?;
        let r = compare_spectra(&dense, &bundle, tol);
        if let Some(m) = max_abs_dev.as_mut() {
            *m = r.max_abs_dev;
        }
        if r.passed {
            Ok(())
        } else {
            Err(Failure(
                KinvlapStatus::Mismatch,
                format!("max eigenvalue deviation {:e} exceeds {tol:e}", r.max_abs_dev),
            ))
        }
    })
}

/// Runs a convergence sweep from JSON config text and writes the report files
/// into `out_dir`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn kinvlap_converge(config_json: *const c_char, out_dir: *const c_char) -> KinvlapStatus {
    guard(|| {
        let c = ConvergenceConfig::from_json(str_arg(config_json, "config_json")?)?;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        run_sweep(&c)?.write(&dir)?;
        Ok(())
    })
}
