use std::ffi::{CStr, CString};
use std::ptr;

use phenokit_ffi::*;

fn last_error() -> String {
    let p = pk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const GOOD: &str = r#"{"participant_id":"p1","device_os":"ios","timestamp":"2019-03-05T10:00:00+10:00","kind":"gps","payload":{"latitude":-33.9,"longitude":151.2}}"#;
const BAD: &str = r#"{"participant_id":"p1","device_os":"ios","timestamp":"2019-03-05T10:05:00+10:00","kind":"gps","payload":{"latitude":-133.9,"longitude":151.2}}"#;

fn parse(text: &str, skip_invalid: bool) -> (PkStatus, *mut PkDataset) {
    let text = CString::new(text).unwrap();
    let mut ds = ptr::null_mut();
    let status = unsafe { pk_dataset_parse(text.as_ptr(), ptr::null(), true, skip_invalid, &mut ds) };
    (status, ds)
}

#[test]
fn dataset_lifecycle_and_report() {
    let (status, ds) = parse(&format!("{GOOD}\n{BAD}\n"), true);
    assert_eq!(status, PkStatus::Ok);
    let (mut n, mut rejected) = (0usize, 0usize);
    unsafe {
        assert_eq!(pk_dataset_event_count(ds, &mut n), PkStatus::Ok);
        assert_eq!(pk_dataset_rejected_count(ds, &mut rejected), PkStatus::Ok);
    }
    assert_eq!((n, rejected), (1, 1));

    let mut json = ptr::null_mut();
    let status = unsafe { pk_dataset_report_json(ds, ptr::null(), 36_000, &mut json) };
    assert_eq!(status, PkStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["participants"], 1);
    assert_eq!(v["schedule"]["scheduled_per_participant"], 9156);
    unsafe {
        pk_string_free(json);
        pk_dataset_free(ds);
        pk_dataset_free(ptr::null_mut());
        pk_string_free(ptr::null_mut());
    }
}

#[test]
fn strict_parse_names_the_line() {
    let (status, ds) = parse(&format!("{GOOD}\n{BAD}\n"), false);
    assert_eq!(status, PkStatus::InvalidInput);
    assert!(ds.is_null());
    assert!(last_error().starts_with("line 2: "), "{}", last_error());
}

#[test]
fn null_and_utf8_arguments() {
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { pk_dataset_parse(ptr::null(), ptr::null(), true, true, &mut ds) },
        PkStatus::NullPointer
    );
    assert!(last_error().contains("jsonl"));
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { pk_dataset_parse(bad.as_ptr().cast(), ptr::null(), true, true, &mut ds) },
        PkStatus::InvalidUtf8
    );
    let mut n = 0usize;
    assert_eq!(unsafe { pk_dataset_event_count(ptr::null(), &mut n) }, PkStatus::NullPointer);
}

#[test]
fn schedules() {
    let mut n = 0u64;
    assert_eq!(unsafe { pk_scheduled_count(ptr::null(), &mut n) }, PkStatus::Ok);
    assert_eq!(n, 9156);
    let one = CString::new(
        r#"{"weeks":[{"start":"2019-03-04T00:00:00+10:00","end":"2019-03-05T00:00:00+10:00","interval_minutes":60}]}"#,
    )
    .unwrap();
    assert_eq!(unsafe { pk_scheduled_count(one.as_ptr(), &mut n) }, PkStatus::Ok);
    assert_eq!(n, 24);
    let bad = CString::new(r#"{"weeks":[{"start":"x"}]}"#).unwrap();
    assert_eq!(unsafe { pk_scheduled_count(bad.as_ptr(), &mut n) }, PkStatus::InvalidSchedule);
}

#[test]
fn hashing_matches_core() {
    let mac = [0xa4u8, 0xc1, 0x38, 0x00, 0x11, 0x22];
    let salt = CString::new("pepper").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pk_hash_device_id(mac.as_ptr(), 6, salt.as_ptr(), &mut out) }, PkStatus::Ok);
    let got = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { pk_string_free(out) };
    let cfg = phenokit::ingest::HashConfig::salted("pepper").unwrap();
    assert_eq!(got, phenokit::ingest::hash_device_id(&mac, &cfg).unwrap());

    let empty = CString::new("").unwrap();
    assert_eq!(
        unsafe { pk_hash_device_id(mac.as_ptr(), 6, empty.as_ptr(), &mut out) },
        PkStatus::InvalidInput
    );
    assert!(pk_is_phone_device(0x5A020C));
    assert!(!pk_is_phone_device(0x240404));
}

#[test]
fn battery_model() {
    let x = [0.0, 12.0];
    let y = [100.0 / 21.3, 100.0 / 18.8];
    let mut fit = PkBatteryFit::default();
    assert_eq!(unsafe { pk_fit_battery_model(x.as_ptr(), y.as_ptr(), 2, &mut fit) }, PkStatus::Ok);
    let mut life = 0.0;
    assert_eq!(unsafe { pk_predict_battery_life(&fit, 0.0, &mut life) }, PkStatus::Ok);
    assert!((life - 21.3).abs() < 1e-9);

    let falling = PkBatteryFit { intercept: 1.0, slope: -1.0, iterations: 0, converged: true };
    assert_eq!(unsafe { pk_predict_battery_life(&falling, 2.0, &mut life) }, PkStatus::Degenerate);
    assert_eq!(unsafe { pk_fit_battery_model(x.as_ptr(), y.as_ptr(), 1, &mut fit) }, PkStatus::InsufficientData);
}

#[test]
fn periodogram_and_alpha() {
    let t: Vec<f64> = (0..96).map(|i| i as f64 * 0.5).collect();
    let v: Vec<f64> = t.iter().map(|h| (std::f64::consts::TAU * h / 24.0).cos()).collect();
    let f = [1.0 / 24.0, 1.0 / 5.0];
    let mut p = [0.0; 2];
    let status = unsafe { pk_lomb_scargle(t.as_ptr(), v.as_ptr(), t.len(), f.as_ptr(), 2, p.as_mut_ptr()) };
    assert_eq!(status, PkStatus::Ok);
    let direct = phenokit::mobility::lomb_scargle(&t, &v, &f).unwrap();
    assert_eq!(p.to_vec(), direct.power);
    assert!(p[0] > 100.0 * p[1]);

    let data = [1.0, 2.0, 2.0, 3.0, 3.0, 5.0, 4.0, 4.0, 5.0, 6.0];
    let (mut a, mut lo, mut hi) = (0.0, 0.0, 0.0);
    let status = unsafe { pk_cronbach_alpha(data.as_ptr(), 5, 2, &mut a, &mut lo, &mut hi) };
    assert_eq!(status, PkStatus::Ok);
    assert!(lo < a && a < hi);
    assert_eq!(unsafe { pk_cronbach_alpha(data.as_ptr(), 5, 2, &mut a, ptr::null_mut(), ptr::null_mut()) }, PkStatus::Ok);
    let flat = [1.0; 6];
    assert_eq!(unsafe { pk_cronbach_alpha(flat.as_ptr(), 3, 2, &mut a, ptr::null_mut(), ptr::null_mut()) }, PkStatus::Degenerate);
}

#[test]
fn errors_are_per_thread() {
    let (status, _) = parse(BAD, false);
    assert_eq!(status, PkStatus::InvalidInput);
    let here = last_error();
    std::thread::spawn(|| assert!(pk_last_error().is_null())).join().unwrap();
    assert_eq!(last_error(), here);
}
