//! C ABI for the qpnls pipeline.
//!
//! Configurations and measure tables are opaque heap handles owned by the
//! caller and released with the matching `_free` function. Every entry point
//! returns a [`QpnlsStatus`]; the message of the last failure on the calling
//! thread is available through [`qpnls_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use qpnls::cantor::{cantor_measure_sweep, MeasureTable, Unperturbed};
use qpnls::config::RunConfig;
use qpnls::error::Error;
use qpnls::harness::{self, Overrides, Status, Subcommand};

/// Status codes; the nonzero values 1 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpnlsStatus {
    Ok = 0,
    Failed = 1,
    EmptyCantorSet = 2,
    Divergence = 3,
    ConfigError = 4,
    NullArgument = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpnlsSubcommand {
    Solve = 0,
    Reduce = 1,
    Measure = 2,
    Stability = 3,
    VerifyNorms = 4,
}

impl From<QpnlsSubcommand> for Subcommand {
    fn from(s: QpnlsSubcommand) -> Self {
        match s {
            QpnlsSubcommand::Solve => Subcommand::Solve,
            QpnlsSubcommand::Reduce => Subcommand::Reduce,
            QpnlsSubcommand::Measure => Subcommand::Measure,
            QpnlsSubcommand::Stability => Subcommand::Stability,
            QpnlsSubcommand::VerifyNorms => Subcommand::VerifyNorms,
        }
    }
}

/// Opaque run configuration.
pub struct QpnlsConfig(RunConfig);

/// Opaque Cantor-set measure table.
pub struct QpnlsMeasure(MeasureTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(QpnlsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e.root() {
            Error::EmptyCantorSet => QpnlsStatus::EmptyCantorSet,
            Error::Divergence { .. } => QpnlsStatus::Divergence,
            Error::Config { .. } => QpnlsStatus::ConfigError,
            _ => QpnlsStatus::Failed,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QpnlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QpnlsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside qpnls".into());
            QpnlsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(QpnlsStatus::NullArgument, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(QpnlsStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn cfg_mut<'a>(cfg: *mut QpnlsConfig) -> Result<&'a mut RunConfig, Fail> {
    cfg.as_mut().map(|c| &mut c.0).ok_or_else(|| null("config"))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn apply(cfg: &mut RunConfig, ov: Overrides) -> Result<(), Fail> {
    *cfg = ov.apply(cfg.clone())?;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qpnls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn qpnls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Built-in desk configuration.
#[no_mangle]
pub extern "C" fn qpnls_config_default() -> *mut QpnlsConfig {
    Box::into_raw(Box::new(QpnlsConfig(RunConfig::default())))
}

/// Parses a TOML or JSON document (`format` is "toml" or "json").
///
/// # Safety
/// `text` and `format` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qpnls_config_parse(
    text: *const c_char,
    format: *const c_char,
    out: *mut *mut QpnlsConfig,
) -> QpnlsStatus {
    guard(|| {
        let cfg = RunConfig::parse(str_arg(text, "text")?, str_arg(format, "format")?)?;
        write_out(out, Box::into_raw(Box::new(QpnlsConfig(cfg))), "out")
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn qpnls_config_free(cfg: *mut QpnlsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qpnls_config_set_epsilon(cfg: *mut QpnlsConfig, epsilon: f64) -> QpnlsStatus {
    guard(|| {
        apply(
            cfg_mut(cfg)?,
            Overrides {
                epsilon: Some(epsilon),
                ..Default::default()
            },
        )
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qpnls_config_set_seed(cfg: *mut QpnlsConfig, seed: u64) -> QpnlsStatus {
    guard(|| {
        apply(
            cfg_mut(cfg)?,
            Overrides {
                seed: Some(seed),
                ..Default::default()
            },
        )
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qpnls_config_set_truncation(cfg: *mut QpnlsConfig, nphi: usize, nx: usize) -> QpnlsStatus {
    guard(|| {
        apply(
            cfg_mut(cfg)?,
            Overrides {
                truncation: Some((nphi, nx)),
                ..Default::default()
            },
        )
    })
}

/// # Safety
/// `cfg` must be a live handle and `gammas` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qpnls_config_set_gamma_list(cfg: *mut QpnlsConfig, gammas: *const f64, len: usize) -> QpnlsStatus {
    guard(|| {
        let cfg = cfg_mut(cfg)?;
        if gammas.is_null() {
            return Err(null("gammas"));
        }
        let list = std::slice::from_raw_parts(gammas, len).to_vec();
        apply(
            cfg,
            Overrides {
                gamma_list: Some(list),
                ..Default::default()
            },
        )
    })
}

/// Copies the TOML snapshot into `buf` (NUL-terminated, truncated to `cap`)
/// and stores the full length, without the NUL, in `len`.
///
/// # Safety
/// `cfg` must be a live handle; `buf` must hold `cap` bytes or be NULL with `cap` 0.
#[no_mangle]
pub unsafe extern "C" fn qpnls_config_to_toml(cfg: *const QpnlsConfig, buf: *mut c_char, cap: usize, len: *mut usize) -> QpnlsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("config"))?;
        let text = cfg.0.to_toml()?;
        if !buf.is_null() && cap > 0 {
            let n = text.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        write_out(len, text.len(), "len")
    })
}

/// Runs one subcommand and writes its run directory to `out_dir`.
///
/// # Safety
/// `cfg` must be a live handle and `out_dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn qpnls_run(cfg: *const QpnlsConfig, subcommand: QpnlsSubcommand, out_dir: *const c_char) -> QpnlsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("config"))?;
        let dir = str_arg(out_dir, "out_dir")?;
        let outcome = harness::run(subcommand.into(), &cfg.0, Path::new(dir))?;
        match outcome.status {
            Status::Ok => Ok(()),
            Status::EmptyCantorSet => Err(Fail(QpnlsStatus::EmptyCantorSet, outcome.summary)),
        }
    })
}

/// Excluded-parameter measure over the configured gamma list, for the
/// unperturbed eigenvalues of the configured truncation.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qpnls_measure_sweep(cfg: *const QpnlsConfig, out: *mut *mut QpnlsMeasure) -> QpnlsStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(|| null("config"))?.0;
        let src = Unperturbed::new(cfg.truncation.nx);
        let t = cantor_measure_sweep(&src, &cfg.model.omega_bar, &cfg.measure.gamma_list, &cfg.measure.measure_config())?;
        write_out(out, Box::into_raw(Box::new(QpnlsMeasure(t))), "out")
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn qpnls_measure_free(m: *mut QpnlsMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of gamma rows, 0 for NULL.
///
/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn qpnls_measure_len(m: *const QpnlsMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows.len())
}

/// Least-squares slope of ln(measure) against ln(gamma), NaN for NULL.
///
/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn qpnls_measure_fit_exponent(m: *const QpnlsMeasure) -> f64 {
    m.as_ref().map_or(f64::NAN, |m| m.0.fit_exponent)
}

/// Row `i`: gamma and excluded measure.
///
/// # Safety
/// `m` must be a live handle; `gamma` and `measure` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qpnls_measure_row(m: *const QpnlsMeasure, i: usize, gamma: *mut f64, measure: *mut f64) -> QpnlsStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        let row = m.0.rows.get(i).ok_or_else(|| {
            Fail(QpnlsStatus::Failed, format!("row {i} out of range ({} rows)", m.0.rows.len()))
        })?;
        write_out(gamma, row.gamma, "gamma")?;
        write_out(measure, row.excluded_measure, "measure")
    })
}
