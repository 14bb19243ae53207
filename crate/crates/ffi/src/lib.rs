//! C ABI over `phenokit`.
//!
//! Every fallible function returns a [`PkStatus`]; on failure a message is
//! stored per thread and can be read with [`pk_last_error`]. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`pk_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chrono::FixedOffset;
use phenokit::battery::{fit_battery_model, predict_battery_life, BatteryFit, DischargeObservation, IrlsOptions};
use phenokit::completeness::scheduled_count;
use phenokit::ingest::{hash_device_id, is_phone_device, parse_scan_log, HashConfig};
use phenokit::mobility::lomb_scargle;
use phenokit::model::{ScanEvent, StudySchedule};
use phenokit::report::{build_report, to_stable_json, ReportOptions};
use phenokit::stats::{cronbach_alpha, RepeatedMeasures};
use phenokit::synth::DEFAULT_START;
use phenokit::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An input record or value failed validation.
    InvalidInput = 3,
    /// Not enough data for the requested analysis.
    InsufficientData = 4,
    /// The input is degenerate for the analysis (e.g. zero variance).
    Degenerate = 5,
    /// The schedule is malformed or empty.
    InvalidSchedule = 6,
    /// An unexpected internal failure.
    Internal = 7,
}

/// Parsed, validated scan log.
pub struct PkDataset {
    events: Vec<ScanEvent>,
    rejected: usize,
}

/// Rate-space battery model: discharge %/h = intercept + slope * scans/h.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PkBatteryFit {
    pub intercept: f64,
    pub slope: f64,
    pub iterations: u32,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> PkStatus {
    match e {
        Error::InsufficientData(_) => PkStatus::InsufficientData,
        Error::Degenerate(_) | Error::NonPositiveRate(_) => PkStatus::Degenerate,
        Error::Schedule(_) | Error::EmptySchedule => PkStatus::InvalidSchedule,
        Error::Io(_) => PkStatus::Internal,
        _ => PkStatus::InvalidInput,
    }
}

struct Failure(PkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> PkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PkStatus::Internal
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(PkStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PkStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(PkStatus::Internal, "output contains a NUL byte".into()))
}

fn hash_config(salt: Option<&str>) -> FfiResult<HashConfig> {
    Ok(match salt {
        Some(s) => HashConfig::salted(s)?,
        None => HashConfig::unsalted(),
    })
}

fn schedule_arg(json: Option<&str>) -> FfiResult<StudySchedule> {
    match json {
        None => Ok(StudySchedule::four_week(DEFAULT_START)),
        Some(s) => serde_json::from_str(s).map_err(|e| Failure(PkStatus::InvalidSchedule, format!("schedule: {e}"))),
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a JSONL scan log. `salt` may be null for unsalted hashing. With
/// `skip_invalid` false any bad line fails the call and the message names
/// the line; otherwise bad lines are counted and dropped.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pk_dataset_parse(
    jsonl: *const c_char,
    salt: *const c_char,
    filter_phones: bool,
    skip_invalid: bool,
    out: *mut *mut PkDataset,
) -> PkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(jsonl, "jsonl")?;
        let cfg = hash_config(opt_str_arg(salt, "salt")?)?;
        let parsed = parse_scan_log(text.as_bytes(), &cfg, filter_phones)?;
        if let (false, Some(first)) = (skip_invalid, parsed.errors.first()) {
            return Err(Failure(PkStatus::InvalidInput, format!("line {}: {}", first.line, first.reason)));
        }
        let ds = PkDataset {
            events: parsed.events,
            rejected: parsed.errors.len(),
        };
        out.write(Box::into_raw(Box::new(ds)));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must come from [`pk_dataset_parse`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pk_dataset_free(ds: *mut PkDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of accepted events.
///
/// # Safety
/// `ds` must be a live dataset; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pk_dataset_event_count(ds: *const PkDataset, out: *mut usize) -> PkStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        write_out(out, ds.events.len(), "out")
    })
}

/// Number of lines dropped as invalid.
///
/// # Safety
/// `ds` must be a live dataset; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pk_dataset_rejected_count(ds: *const PkDataset, out: *mut usize) -> PkStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        write_out(out, ds.rejected, "out")
    })
}

/// Scheduled scans per participant. A null schedule selects the default
/// four-week design.
///
/// # Safety
/// `schedule_json` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pk_scheduled_count(schedule_json: *const c_char, out: *mut u64) -> PkStatus {
    guard(|| {
        let schedule = schedule_arg(opt_str_arg(schedule_json, "schedule_json")?)?;
        write_out(out, scheduled_count(&schedule), "out")
    })
}

/// Full feature report as JSON. A null schedule selects the default design;
/// `tz_offset_seconds` is east of UTC.
///
/// # Safety
/// `ds` must be a live dataset; `schedule_json` null or NUL-terminated;
/// `out` writable. Free the result with [`pk_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pk_dataset_report_json(
    ds: *const PkDataset,
    schedule_json: *const c_char,
    tz_offset_seconds: i32,
    out: *mut *mut c_char,
) -> PkStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let schedule = schedule_arg(opt_str_arg(schedule_json, "schedule_json")?)?;
        let tz = FixedOffset::east_opt(tz_offset_seconds)
            .ok_or_else(|| Failure(PkStatus::InvalidInput, format!("tz offset {tz_offset_seconds} s is out of range")))?;
        let report = build_report(&ds.events, &ReportOptions::new(schedule, tz))?;
        out.write(into_c_string(to_stable_json(&report))?);
        Ok(())
    })
}

/// Hex SHA-256 of salt followed by the 6-byte identifier. `salt` may be null.
///
/// # Safety
/// `mac` must point to `len` bytes; `salt` null or NUL-terminated; `out`
/// writable. Free the result with [`pk_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pk_hash_device_id(
    mac: *const u8,
    len: usize,
    salt: *const c_char,
    out: *mut *mut c_char,
) -> PkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mac = slice_arg(mac, len, "mac")?;
        let cfg = hash_config(opt_str_arg(salt, "salt")?)?;
        out.write(into_c_string(hash_device_id(mac, &cfg)?)?);
        Ok(())
    })
}

/// True when the Bluetooth class-of-device marks a phone.
#[no_mangle]
pub extern "C" fn pk_is_phone_device(class_of_device: u32) -> bool {
    is_phone_device(class_of_device)
}

/// Robust straight-line fit of discharge rate (%/h) on scan rate (scans/h).
///
/// # Safety
/// `scan_rates` and `discharge_rates` must each point to `n` doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn pk_fit_battery_model(
    scan_rates: *const f64,
    discharge_rates: *const f64,
    n: usize,
    out: *mut PkBatteryFit,
) -> PkStatus {
    guard(|| {
        let x = slice_arg(scan_rates, n, "scan_rates")?;
        let y = slice_arg(discharge_rates, n, "discharge_rates")?;
        let obs: Vec<DischargeObservation> = x
            .iter()
            .zip(y)
            .map(|(&scan_rate, &discharge_rate)| DischargeObservation {
                device_id: String::new(),
                week: 0,
                scan_rate,
                discharge_rate,
                n_intervals: 1,
                hours: 1.0,
            })
            .collect();
        let fit = fit_battery_model(&obs, &IrlsOptions::default())?;
        let result = PkBatteryFit {
            intercept: fit.intercept,
            slope: fit.slope,
            iterations: fit.iterations as u32,
            converged: fit.converged,
        };
        write_out(out, result, "out")
    })
}

/// Hours from full to empty at `scan_rate` scans/h.
///
/// # Safety
/// `fit` must be readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_predict_battery_life(fit: *const PkBatteryFit, scan_rate: f64, out: *mut f64) -> PkStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        let full = BatteryFit {
            intercept: fit.intercept,
            slope: fit.slope,
            weights: Vec::new(),
            iterations: fit.iterations as usize,
            converged: fit.converged,
            ols_fallback: false,
            scale: 0.0,
        };
        write_out(out, predict_battery_life(&full, scan_rate)?, "out")
    })
}

/// Normalized Lomb-Scargle power at `nf` frequencies (cycles/hour) for `n`
/// samples at `times_h` hours. Writes `nf` values to `power`.
///
/// # Safety
/// Array arguments must point to the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn pk_lomb_scargle(
    times_h: *const f64,
    values: *const f64,
    n: usize,
    freqs: *const f64,
    nf: usize,
    power: *mut f64,
) -> PkStatus {
    guard(|| {
        let t = slice_arg(times_h, n, "times_h")?;
        let v = slice_arg(values, n, "values")?;
        let f = slice_arg(freqs, nf, "freqs")?;
        if nf > 0 && power.is_null() {
            return Err(null("power"));
        }
        let p = lomb_scargle(t, v, f)?;
        if nf > 0 {
            std::slice::from_raw_parts_mut(power, nf).copy_from_slice(&p.power);
        }
        Ok(())
    })
}

/// Cronbach's alpha over a row-major `n_subjects` x `n_conditions` matrix,
/// with a 95% Feldt interval. `ci_lower` and `ci_upper` may be null.
///
/// # Safety
/// `data` must point to `n_subjects * n_conditions` doubles; `alpha` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pk_cronbach_alpha(
    data: *const f64,
    n_subjects: usize,
    n_conditions: usize,
    alpha: *mut f64,
    ci_lower: *mut f64,
    ci_upper: *mut f64,
) -> PkStatus {
    guard(|| {
        let len = n_subjects
            .checked_mul(n_conditions)
            .ok_or_else(|| Failure(PkStatus::InvalidInput, "matrix size overflows".into()))?;
        let data = slice_arg(data, len, "data")?;
        let rows: Vec<Vec<f64>> = data.chunks(n_conditions.max(1)).map(<[f64]>::to_vec).collect();
        let a = cronbach_alpha(&RepeatedMeasures::new(&rows)?, Some(0.95))?;
        write_out(alpha, a.alpha, "alpha")?;
        if let Some((lo, hi)) = a.ci {
            if !ci_lower.is_null() {
                ci_lower.write(lo);
            }
            if !ci_upper.is_null() {
                ci_upper.write(hi);
            }
        }
        Ok(())
    })
}
