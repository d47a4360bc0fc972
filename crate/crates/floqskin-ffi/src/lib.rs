//! C ABI for floqskin.
//!
//! Objects cross the boundary as opaque handles created by `fqs_*_new` or
//! `fqs_*_compute` and released by the matching `fqs_*_free`. Every fallible
//! function returns an [`FqsStatus`]; on failure the message is available
//! from [`fqs_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use floqskin::dynamics::{self, EvolveSettings, InitialState};
use floqskin::floquet::{self, FloquetSettings};
use floqskin::harness::{self, ExperimentConfig};
use floqskin::spectra::{self, SpectrumResult};
use floqskin::{Boundary, Error, ModelParams};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FqsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad parameters or configuration.
    Config = 3,
    /// The numerics failed (defective propagator, non-finite state, ...).
    Numerical = 4,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 5,
    OutOfRange = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FqsBoundary {
    Periodic = 0,
    Open = 1,
}

/// Chain parameters.
pub struct FqsModel {
    params: ModelParams,
}

/// Floquet spectrum of a finite chain.
pub struct FqsSpectrum {
    inner: SpectrumResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> FqsStatus {
    if err.is_config() {
        FqsStatus::Config
    } else if matches!(err, Error::Io(_) | Error::Csv(_)) {
        FqsStatus::Io
    } else {
        FqsStatus::Numerical
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F>(f: F) -> FqsStatus
where
    F: FnOnce() -> Result<(), (FqsStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FqsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside floqskin");
            FqsStatus::Panic
        }
    }
}

fn lib(err: Error) -> (FqsStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (FqsStatus, String) {
    (FqsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (FqsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (FqsStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn model_ref<'a>(m: *const FqsModel) -> Result<&'a FqsModel, (FqsStatus, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

/// Writes `values` into `out[..cap]` and the count into `len`.
unsafe fn write_slice(values: &[f64], out: *mut f64, cap: usize, len: *mut usize) -> Result<(), (FqsStatus, String)> {
    if len.is_null() {
        return Err(null("len"));
    }
    *len = values.len();
    if values.len() > cap {
        return Err((FqsStatus::BufferTooSmall, format!("need {} elements, buffer holds {cap}", values.len())));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fqs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn fqs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// The reference chain: `q = 3`, `u = v = 1`, `Omega = 0.4`, loss `-1.2`
/// on the first site of each cell, 100 cells, periodic boundary.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn fqs_model_reference(out: *mut *mut FqsModel) -> FqsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(FqsModel { params: ModelParams::reference() }));
        Ok(())
    })
}

/// Parses a model from its JSON document and validates it.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fqs_model_from_json(json: *const c_char, out: *mut *mut FqsModel) -> FqsStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let params: ModelParams =
            serde_json::from_str(text).map_err(|e| (FqsStatus::Config, format!("model: {e}")))?;
        params.validate().map_err(lib)?;
        *out = Box::into_raw(Box::new(FqsModel { params }));
        Ok(())
    })
}

/// Serializes the model to JSON. The returned string must be released with
/// [`fqs_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fqs_model_to_json(model: *const FqsModel, out: *mut *mut c_char) -> FqsStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&m.params).map_err(|e| (FqsStatus::Numerical, e.to_string()))?;
        *out = CString::new(text).map_err(|e| (FqsStatus::Numerical, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Number of lattice sites.
///
/// # Safety
/// `model` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn fqs_model_n_sites(model: *const FqsModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.n_sites())
}

/// Sets the boundary condition.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fqs_model_set_boundary(model: *mut FqsModel, boundary: FqsBoundary) -> FqsStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        m.params.boundary = match boundary {
            FqsBoundary::Periodic => Boundary::Pbc,
            FqsBoundary::Open => Boundary::Obc,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn fqs_model_free(model: *mut FqsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Quasienergies of the Bloch block at momentum `k`, principal branch.
/// `re` and `im` receive `len` values each (the number of bands).
///
/// # Safety
/// `re` and `im` must hold `cap` doubles; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fqs_bloch_quasienergies(
    model: *const FqsModel,
    k: f64,
    n_steps: usize,
    re: *mut f64,
    im: *mut f64,
    cap: usize,
    len: *mut usize,
) -> FqsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let h = floquet::bloch_floquet(&m.params, k, &FloquetSettings::with_steps(n_steps)).map_err(lib)?;
        let (r, i): (Vec<f64>, Vec<f64>) = h.quasienergies.iter().map(|e| (e.re, e.im)).unzip();
        write_slice(&r, re, cap, len)?;
        write_slice(&i, im, cap, len)
    })
}

/// Diagonalizes the one-period propagator of the finite chain.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fqs_spectrum_compute(
    model: *const FqsModel,
    boundary: FqsBoundary,
    n_steps: usize,
    out: *mut *mut FqsSpectrum,
) -> FqsStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let b = match boundary {
            FqsBoundary::Periodic => Boundary::Pbc,
            FqsBoundary::Open => Boundary::Obc,
        };
        let inner = spectra::realspace_floquet_spectrum(
            &m.params,
            b,
            &FloquetSettings::with_steps(n_steps),
            spectra::DEFAULT_DENSE_CAP,
        )
        .map_err(lib)?;
        *out = Box::into_raw(Box::new(FqsSpectrum { inner }));
        Ok(())
    })
}

/// Number of eigenstates.
///
/// # Safety
/// `spectrum` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn fqs_spectrum_len(spectrum: *const FqsSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.inner.len())
}

/// Quasienergy of state `index`, sorted by real then imaginary part.
///
/// # Safety
/// `spectrum` must be a live handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fqs_spectrum_eigenvalue(
    spectrum: *const FqsSpectrum,
    index: usize,
    re: *mut f64,
    im: *mut f64,
) -> FqsStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let e = *s.inner.eigenvalues.get(index).ok_or((FqsStatus::OutOfRange, format!("state {index}")))?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        *re = e.re;
        *im = e.im;
        Ok(())
    })
}

/// `|phi(x)|^2` of state `index`, one value per site.
///
/// # Safety
/// `out` must hold `cap` doubles; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fqs_spectrum_density(
    spectrum: *const FqsSpectrum,
    index: usize,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> FqsStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        if index >= s.inner.len() {
            return Err((FqsStatus::OutOfRange, format!("state {index}")));
        }
        write_slice(&s.inner.density(index), out, cap, len)
    })
}

/// # Safety
/// `spectrum` must come from this library and not be used afterwards. NULL
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn fqs_spectrum_free(spectrum: *mut FqsSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Evolves the initial state given as JSON (e.g.
/// `{"kind":"delta","x0":150}`) and fits the centre-of-mass drift after
/// discarding the first `burn_in` fraction. The velocity is in unit cells
/// per unit time.
///
/// # Safety
/// `model` must be a live handle, `initial_json` NUL-terminated, and
/// `velocity`, `r_squared` writable.
#[no_mangle]
pub unsafe extern "C" fn fqs_drift_velocity(
    model: *const FqsModel,
    initial_json: *const c_char,
    n_periods: usize,
    burn_in: f64,
    velocity: *mut f64,
    r_squared: *mut f64,
) -> FqsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let psi0: InitialState = serde_json::from_str(str_arg(initial_json, "initial_json")?)
            .map_err(|e| (FqsStatus::Config, format!("initial state: {e}")))?;
        if velocity.is_null() || r_squared.is_null() {
            return Err(null("velocity/r_squared"));
        }
        let rec = dynamics::evolve(&m.params, &psi0, n_periods, &EvolveSettings::default()).map_err(lib)?;
        let fit = dynamics::velocity_fit(&rec, burn_in).map_err(lib)?;
        *velocity = fit.velocity;
        *r_squared = fit.r_squared;
        Ok(())
    })
}

/// Runs one experiment configuration (the JSON accepted by the command-line
/// tool) or a preset name into `out_dir`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fqs_run(config_or_preset: *const c_char, out_dir: *const c_char) -> FqsStatus {
    guard(|| {
        let spec = str_arg(config_or_preset, "config_or_preset")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let config = match harness::find_preset(spec) {
            Some(p) => p.config(),
            None => ExperimentConfig::from_json(spec).map_err(lib)?,
        };
        harness::run(&config, Path::new(dir)).map_err(lib)?;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn fqs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
