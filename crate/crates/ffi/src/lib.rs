//! C interface to the `aeris` toolkit.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `_free` function. Every fallible call returns an
//! [`AerisStatus`]; on failure the message is available from
//! [`aeris_last_error`] on the same thread. Output pointers are written only
//! on success. Panics are caught and reported as [`AerisStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aeris::cli::{load_forecaster, prepare, read_frame, synth_data, RunConfig, RunPaths};
use aeris::data::{clean, CleaningConfig, TimeSeriesFrame};
use aeris::eval::{metrics, Forecaster};
use aeris::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AerisStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Data = 5,
    Model = 6,
    Checkpoint = 7,
    Config = 8,
    Undefined = 9,
    Panic = 99,
}

impl From<&Error> for AerisStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => Self::Io,
            Error::Parse { .. } | Error::Csv(_) | Error::DuplicateTimestamp(_) => Self::Parse,
            Error::UnknownColumn(_) | Error::MissingColumn(_) | Error::InsufficientData(_) => Self::Data,
            Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => Self::InvalidArgument,
            Error::RankDeficient { .. }
            | Error::NonConvergence { .. }
            | Error::NonFiniteLoss { .. }
            | Error::NotFitted => Self::Model,
            Error::Undefined(_) => Self::Undefined,
            Error::Checkpoint(_) => Self::Checkpoint,
            Error::Config(_) => Self::Config,
        }
    }
}

/// Accuracy of one forecast vector. `r2_defined` is 0 when the truth is
/// constant, in which case `r2` is NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AerisMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub r2_defined: i32,
    pub n: usize,
}

/// An hourly table; missing cells read back as NaN.
pub struct AerisFrame(TimeSeriesFrame);

/// A trained and cleaned run directory opened for forecasting.
pub struct AerisRun {
    frame: TimeSeriesFrame,
    test_start: usize,
    names: Vec<CString>,
    models: Vec<Box<dyn Forecaster>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(AerisStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(AerisStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AerisStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(message: String) -> Failure {
    Failure(AerisStatus::InvalidArgument, message)
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> AerisStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AerisStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            AerisStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

/// # Safety
/// `p` is null or points to a live `T`.
unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(null(what))
    } else {
        Ok(p)
    }
}

/// # Safety
/// `p` is null or valid for `len` reads.
unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aeris_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn aeris_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a `;`-separated hourly station file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn aeris_frame_read(path: *const c_char, out: *mut *mut AerisFrame) -> AerisStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let frame = read_frame(&path)?;
        *out = Box::into_raw(Box::new(AerisFrame(frame)));
        Ok(())
    })
}

/// Generates the seeded synthetic station table, spikes and gaps included.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn aeris_frame_synth(seed: u64, hours: usize, out: *mut *mut AerisFrame) -> AerisStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let data = synth_data(seed, hours)?;
        *out = Box::into_raw(Box::new(AerisFrame(data.frame)));
        Ok(())
    })
}

/// Releases a frame; null is ignored.
///
/// # Safety
/// `frame` is null or came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aeris_frame_free(frame: *mut AerisFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// # Safety
/// `frame` is a live frame; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn aeris_frame_rows(frame: *const AerisFrame, out: *mut usize) -> AerisStatus {
    guard(|| {
        let frame = ref_arg(frame, "frame")?;
        *out_arg(out, "out")? = frame.0.n_rows();
        Ok(())
    })
}

/// Copies one column into `buf`, writing NaN for missing cells. `len` must
/// equal the row count.
///
/// # Safety
/// `frame` is a live frame; `name` is a NUL-terminated string; `buf` is
/// valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn aeris_frame_column(
    frame: *const AerisFrame,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> AerisStatus {
    guard(|| {
        let frame = ref_arg(frame, "frame")?;
        let column = frame.0.column(str_arg(name, "name")?)?;
        if len != column.len() {
            return Err(invalid(format!("buffer holds {len} values, column has {}", column.len())));
        }
        let buf = std::slice::from_raw_parts_mut(out_arg(buf, "buf")?, len);
        for (dst, src) in buf.iter_mut().zip(column) {
            *dst = src.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Removes outliers, interpolates gaps and clamps pollutants at zero.
/// `threshold <= 0` or `span == 0` selects the default for that setting.
/// `outliers`, when not null, receives the total number of removed values.
///
/// # Safety
/// `frame` is a live frame; `out` is writable; `outliers` is null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn aeris_frame_clean(
    frame: *const AerisFrame,
    threshold: f64,
    span: usize,
    out: *mut *mut AerisFrame,
    outliers: *mut usize,
) -> AerisStatus {
    guard(|| {
        let frame = ref_arg(frame, "frame")?;
        let out = out_arg(out, "out")?;
        let mut config = CleaningConfig::default();
        if threshold > 0.0 {
            config.outlier_threshold = threshold;
        } else if threshold.is_nan() {
            return Err(invalid("threshold is NaN".into()));
        }
        if span > 0 {
            config.ewma_span = span;
        }
        let (cleaned, counts) = clean(&frame.0, &config)?;
        if !outliers.is_null() {
            *outliers = counts.values().sum();
        }
        *out = Box::into_raw(Box::new(AerisFrame(cleaned)));
        Ok(())
    })
}

/// MAE, RMSE and R² of `y_pred` against `y_true`, both of length `n`.
///
/// # Safety
/// Both arrays are valid for `n` reads; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn aeris_metrics(
    y_true: *const f64,
    y_pred: *const f64,
    n: usize,
    out: *mut AerisMetrics,
) -> AerisStatus {
    guard(|| {
        let m = metrics(slice_arg(y_true, n, "y_true")?, slice_arg(y_pred, n, "y_pred")?)?;
        *out_arg(out, "out")? = AerisMetrics {
            mae: m.mae,
            rmse: m.rmse,
            r2: m.r2.unwrap_or(f64::NAN),
            r2_defined: i32::from(m.r2.is_some()),
            n: m.n,
        };
        Ok(())
    })
}

/// Opens a run directory written by `aeris train` (or `aeris all`) and
/// loads every checkpointed model.
///
/// # Safety
/// `dir` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn aeris_run_open(dir: *const c_char, out: *mut *mut AerisRun) -> AerisStatus {
    guard(|| {
        let paths = RunPaths::new(str_arg(dir, "dir")?);
        let out = out_arg(out, "out")?;
        let cfg = RunConfig::load(&paths.config())?;
        let prep = prepare(&read_frame(&paths.clean())?, &cfg)?;
        let mut models = Vec::new();
        for m in cfg.models.iter().filter(|m| paths.checkpoint(&m.name()).exists()) {
            let path = paths.checkpoint(&m.name());
            let text = std::fs::read_to_string(&path).map_err(|e| Failure(AerisStatus::Io, format!("{}: {e}", path.display())))?;
            models.push(load_forecaster(&text)?);
        }
        if models.is_empty() {
            return Err(Failure(AerisStatus::Config, format!("no checkpoints under {}", paths.checkpoints().display())));
        }
        let names = models
            .iter()
            .map(|m| CString::new(m.name()).map_err(|_| invalid("model name contains NUL".into())))
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(AerisRun {
            frame: prep.frame,
            test_start: prep.test_start,
            names,
            models,
        }));
        Ok(())
    })
}

/// # Safety
/// `run` is null or came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aeris_run_free(run: *mut AerisRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of loaded models, their rows of history, and the first test row.
///
/// # Safety
/// `run` is a live run; each output is null or writable.
#[no_mangle]
pub unsafe extern "C" fn aeris_run_info(
    run: *const AerisRun,
    models: *mut usize,
    rows: *mut usize,
    test_start: *mut usize,
) -> AerisStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        for (p, v) in [(models, run.models.len()), (rows, run.frame.n_rows()), (test_start, run.test_start)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Name of model `index`, owned by the run; null when out of range.
///
/// # Safety
/// `run` is null or a live run.
#[no_mangle]
pub unsafe extern "C" fn aeris_run_model_name(run: *const AerisRun, index: usize) -> *const c_char {
    run.as_ref()
        .and_then(|r| r.names.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Forecast of the target `horizon` hours after row `anchor`, in the
/// target's units. Only history up to `anchor` is read, except that
/// ARIMA models with exogenous regressors read them up to the forecast hour.
///
/// # Safety
/// `run` is a live run; `model` is a NUL-terminated string; `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn aeris_run_forecast(
    run: *const AerisRun,
    model: *const c_char,
    anchor: usize,
    horizon: usize,
    out: *mut f64,
) -> AerisStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        let name = str_arg(model, "model")?;
        let out = out_arg(out, "out")?;
        let forecaster = run
            .models
            .iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| invalid(format!("no model named `{name}`")))?;
        if horizon == 0 || anchor + horizon >= run.frame.n_rows() {
            return Err(invalid(format!(
                "anchor {anchor} with horizon {horizon} is outside the {} rows",
                run.frame.n_rows()
            )));
        }
        let values = forecaster.forecast(&run.frame, &[anchor], &[horizon])?;
        *out = values[0][0];
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_is_thread_local() {
        let status = unsafe { aeris_frame_rows(ptr::null(), ptr::null_mut()) };
        assert_eq!(status, AerisStatus::NullPointer);
        assert!(!aeris_last_error().is_null());
        std::thread::spawn(|| assert!(aeris_last_error().is_null())).join().unwrap();
    }

    #[test]
    fn panics_become_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, AerisStatus::Panic);
        let msg = unsafe { CStr::from_ptr(aeris_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"), "{msg}");
    }

    #[test]
    fn status_mapping() {
        assert_eq!(AerisStatus::from(&Error::NotFitted), AerisStatus::Model);
        assert_eq!(AerisStatus::from(&Error::Config("x".into())), AerisStatus::Config);
        assert_eq!(AerisStatus::from(&Error::UnknownColumn("x".into())), AerisStatus::Data);
    }
}
