//! C interface to the online sparse GP model.
//!
//! Every function returns a [`PoamStatus`]. On failure a description is
//! available from [`poam_last_error_message`] on the same thread until the
//! next call. Inputs are row-major `n x dim` arrays of doubles in raw units.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use poam::gp::{Dataset, FieldPredictor};
use poam::numkit::Matrix;
use poam::online::{EmConfig, KernelConfig, Method, OnlineModel};
use poam::Error;

/// Opaque model handle.
pub struct PoamModel {
    inner: OnlineModel,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PoamStatus {
    match e {
        Error::Io { .. } => PoamStatus::Io,
        e if e.is_user_input() => PoamStatus::InvalidArgument,
        Error::Shape(_) | Error::InvalidRank { .. } | Error::OutOfBounds { .. } => PoamStatus::InvalidArgument,
        _ => PoamStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PoamStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PoamStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            PoamStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            PoamStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PoamStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn model_mut<'a>(m: *mut PoamModel) -> Result<&'a mut OnlineModel, Failure> {
    m.as_mut().map(|m| &mut m.inner).ok_or(Failure::Null("model"))
}

unsafe fn model_ref<'a>(m: *const PoamModel) -> Result<&'a OnlineModel, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or(Failure::Null("model"))
}

unsafe fn inputs(x: *const f64, n: usize, dim: usize) -> Result<Matrix, Failure> {
    if n == 0 {
        return Ok(Matrix::zeros(0, dim));
    }
    if x.is_null() {
        return Err(Failure::Null("x"));
    }
    let data = std::slice::from_raw_parts(x, n * dim).to_vec();
    Ok(Matrix::from_vec(n, dim, data)?)
}

unsafe fn dataset(model: &OnlineModel, x: *const f64, y: *const f64, n: usize) -> Result<Dataset, Failure> {
    let xm = inputs(x, n, model.input_dim())?;
    if n > 0 && y.is_null() {
        return Err(Failure::Null("y"));
    }
    let yv = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(y, n).to_vec() };
    Ok(Dataset::new(xm, yv)?)
}

/// Creates a model. `method` is a method name such as `"poam"`;
/// `config_json` is an optional JSON object of EM settings (may be null).
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn poam_model_create(
    method: *const c_char,
    input_dim: usize,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut PoamModel,
) -> PoamStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ptr::null_mut();
        if input_dim == 0 {
            return Err(Failure::Arg("input_dim must be positive".into()));
        }
        let method = Method::parse(text(method, "method")?)?;
        let cfg: EmConfig = if config_json.is_null() {
            EmConfig::default()
        } else {
            EmConfig::from_json(text(config_json, "config_json")?)?
        };
        let inner = OnlineModel::from_config(method, cfg, &KernelConfig::default(), input_dim, seed)?;
        *out = Box::into_raw(Box::new(PoamModel { inner }));
        Ok(())
    })
}

/// Fits the normalizer on the pilot data and runs the first update.
///
/// # Safety
/// `x` must hold `n * input_dim` doubles and `y` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn poam_model_pilot(model: *mut PoamModel, x: *const f64, y: *const f64, n: usize) -> PoamStatus {
    guard(|| {
        let m = model_mut(model)?;
        let data = dataset(m, x, y, n)?;
        Ok(m.pilot(&data)?)
    })
}

/// One E-step and M-step on a batch of raw observations.
///
/// # Safety
/// As for [`poam_model_pilot`].
#[no_mangle]
pub unsafe extern "C" fn poam_model_update(model: *mut PoamModel, x: *const f64, y: *const f64, n: usize) -> PoamStatus {
    guard(|| {
        let m = model_mut(model)?;
        let data = dataset(m, x, y, n)?;
        Ok(m.update(&data)?)
    })
}

/// Predictive mean and variance at `n` raw inputs. With `include_noise`
/// nonzero the variance is that of a new observation, otherwise of the
/// latent field.
///
/// # Safety
/// `x` must hold `n * input_dim` doubles; `mean` and `var` `n` writable
/// doubles each.
#[no_mangle]
pub unsafe extern "C" fn poam_model_predict(
    model: *const PoamModel,
    x: *const f64,
    n: usize,
    include_noise: i32,
    mean: *mut f64,
    var: *mut f64,
) -> PoamStatus {
    guard(|| {
        let m = model_ref(model)?;
        if n > 0 && (mean.is_null() || var.is_null()) {
            return Err(Failure::Null("output buffer"));
        }
        let xm = inputs(x, n, m.input_dim())?;
        let p = if include_noise != 0 { m.predict_observed(&xm)? } else { m.predict_raw(&xm)? };
        if n > 0 {
            std::slice::from_raw_parts_mut(mean, n).copy_from_slice(&p.mean);
            std::slice::from_raw_parts_mut(var, n).copy_from_slice(&p.var);
        }
        Ok(())
    })
}

/// Current number of inducing points.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn poam_model_num_inducing(model: *const PoamModel, out: *mut usize) -> PoamStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = m.num_inducing();
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn poam_model_save(model: *const PoamModel, path: *const c_char) -> PoamStatus {
    guard(|| {
        let m = model_ref(model)?;
        Ok(m.save(Path::new(text(path, "path")?))?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poam_model_load(path: *const c_char, out: *mut *mut PoamModel) -> PoamStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ptr::null_mut();
        let inner = OnlineModel::load(Path::new(text(path, "path")?))?;
        *out = Box::into_raw(Box::new(PoamModel { inner }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn poam_model_free(model: *mut PoamModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn poam_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
