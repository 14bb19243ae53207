//! Scan-log parsing and deidentification.
//!
//! Input is line-delimited JSON, one record per line:
//!
//! ```json
//! {"participant_id":"p01","device_os":"android","device_model":"Pixel 3",
//!  "timestamp":"2019-03-04T00:00:00Z","kind":"bluetooth",
//!  "payload":{"sightings":[{"mac":"00:11:22:33:44:55","class_of_device":512}]}}
//! ```
//!
//! Bluetooth sightings carry either a raw `mac` (hashed here) or an already
//! hashed `hashed_device_id`. `class_of_device` may be an integer or a
//! `0x`-prefixed hex string. Unknown keys are ignored.

use std::fmt;
use std::io::BufRead;

use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    is_hashed_id, parse_timestamp, validate_event, BatterySample, BluetoothScan,
    BluetoothSighting, DeviceOs, GpsFix, Payload, ScanEvent, ScanKind,
};

/// Major device class field of the Class of Device (bits 12..8).
const MAJOR_CLASS_MASK: u32 = 0x1F00;
const MAJOR_CLASS_PHONE: u32 = 0x0200;

/// Keyed SHA-256 over raw device identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashConfig {
    salt: Vec<u8>,
}

impl HashConfig {
    pub fn salted(salt: impl Into<Vec<u8>>) -> Result<Self> {
        let salt = salt.into();
        if salt.is_empty() {
            return Err(Error::EmptySalt);
        }
        Ok(HashConfig { salt })
    }

    /// Plain SHA-256 of the identifier, for datasets hashed without a key.
    pub fn unsalted() -> Self {
        HashConfig { salt: Vec::new() }
    }

    pub fn is_salted(&self) -> bool {
        !self.salt.is_empty()
    }
}

/// Lowercase hex of `SHA-256(salt || mac)`.
pub fn hash_device_id(mac: &[u8], cfg: &HashConfig) -> Result<String> {
    if mac.len() != 6 {
        return Err(Error::IdentifierLength(mac.len()));
    }
    let mut h = Sha256::new();
    h.update(&cfg.salt);
    h.update(mac);
    Ok(hex::encode(h.finalize()))
}

/// Parses `00:11:22:33:44:55`, `00-11-22-33-44-55` or `001122334455`.
pub fn parse_mac(s: &str) -> Result<[u8; 6]> {
    let digits: String = s.chars().filter(|c| *c != ':' && *c != '-').collect();
    let bytes = hex::decode(&digits).map_err(|_| Error::invalid("mac", "is not hex", s))?;
    <[u8; 6]>::try_from(bytes.as_slice()).map_err(|_| Error::IdentifierLength(bytes.len()))
}

/// True when the major device class is Phone.
pub fn is_phone_device(class_of_device: u32) -> bool {
    class_of_device & MAJOR_CLASS_MASK == MAJOR_CLASS_PHONE
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<ScanEvent>,
    pub errors: Vec<LineError>,
}

#[derive(Deserialize)]
struct RawRecord {
    participant_id: String,
    device_os: DeviceOs,
    #[serde(default)]
    device_model: Option<String>,
    timestamp: String,
    kind: ScanKind,
    payload: Value,
}

#[derive(Deserialize)]
struct RawBluetooth {
    sightings: Vec<RawSighting>,
}

#[derive(Deserialize)]
struct RawSighting {
    #[serde(default)]
    mac: Option<String>,
    #[serde(default)]
    hashed_device_id: Option<String>,
    class_of_device: ClassValue,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ClassValue {
    Int(u64),
    Text(String),
}

impl ClassValue {
    fn resolve(&self) -> std::result::Result<u32, String> {
        let v = match self {
            ClassValue::Int(v) => *v,
            ClassValue::Text(s) => {
                let t = s.trim();
                let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                    Some(h) => u64::from_str_radix(h, 16),
                    None => t.parse(),
                };
                parsed.map_err(|_| format!("class_of_device is not a number (got {s:?})"))?
            }
        };
        if v >= 1 << 24 {
            return Err(format!("class_of_device exceeds 24 bits (got {v:#x})"));
        }
        Ok(v as u32)
    }
}

fn payload_shape(v: &Value) -> Option<ScanKind> {
    let obj = v.as_object()?;
    if obj.contains_key("sightings") {
        Some(ScanKind::Bluetooth)
    } else if obj.contains_key("latitude") || obj.contains_key("longitude") {
        Some(ScanKind::Gps)
    } else if obj.contains_key("level_pct") {
        Some(ScanKind::Battery)
    } else {
        None
    }
}

fn convert_bluetooth(
    raw: RawBluetooth,
    cfg: &HashConfig,
    filter_phones: bool,
) -> std::result::Result<BluetoothScan, String> {
    let mut sightings = Vec::with_capacity(raw.sightings.len());
    for s in raw.sightings {
        let class_of_device = s.class_of_device.resolve()?;
        let hashed_device_id = match (s.mac, s.hashed_device_id) {
            (Some(mac), _) => {
                let bytes = parse_mac(&mac).map_err(|e| e.to_string())?;
                hash_device_id(&bytes, cfg).map_err(|e| e.to_string())?
            }
            (None, Some(h)) => {
                let h = h.to_ascii_lowercase();
                if !is_hashed_id(&h) {
                    return Err(format!("hashed_device_id is not 64 hex characters (got {h:?})"));
                }
                h
            }
            (None, None) => return Err("sighting has neither mac nor hashed_device_id".into()),
        };
        if filter_phones && !is_phone_device(class_of_device) {
            continue;
        }
        sightings.push(BluetoothSighting {
            hashed_device_id,
            class_of_device,
        });
    }
    Ok(BluetoothScan { sightings })
}

/// Parses one line into a validated event. `Err` carries the diagnostic.
pub fn parse_line(
    line: &str,
    cfg: &HashConfig,
    filter_phones: bool,
) -> std::result::Result<ScanEvent, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let timestamp = parse_timestamp(&raw.timestamp).map_err(|e| e.to_string())?;

    let parsed = match raw.kind {
        ScanKind::Bluetooth => serde_json::from_value::<RawBluetooth>(raw.payload.clone())
            .map_err(|e| e.to_string())
            .and_then(|b| convert_bluetooth(b, cfg, filter_phones).map(Payload::Bluetooth)),
        ScanKind::Gps => serde_json::from_value::<GpsFix>(raw.payload.clone())
            .map(Payload::Gps)
            .map_err(|e| e.to_string()),
        ScanKind::Battery => serde_json::from_value::<BatterySample>(raw.payload.clone())
            .map(Payload::Battery)
            .map_err(|e| e.to_string()),
    };
    let payload = match parsed {
        Ok(p) => p,
        Err(reason) => {
            return Err(match payload_shape(&raw.payload) {
                Some(shape) if shape != raw.kind => Error::KindMismatch {
                    kind: raw.kind.as_str(),
                    payload: shape.as_str(),
                }
                .to_string(),
                _ => format!("invalid {} payload: {reason}", raw.kind),
            })
        }
    };

    validate_event(ScanEvent {
        participant_id: raw.participant_id,
        device_os: raw.device_os,
        device_model: raw.device_model,
        timestamp,
        kind: raw.kind,
        payload,
    })
    .map_err(|e| e.to_string())
}

/// Parses a whole log. Bad lines are collected, never fatal; only an
/// unreadable stream aborts.
pub fn parse_scan_log<R: BufRead>(
    mut reader: R,
    cfg: &HashConfig,
    filter_phones: bool,
) -> Result<ParsedLog> {
    let mut out = ParsedLog::default();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t,
            Err(_) => {
                out.errors.push(LineError {
                    line: line_no,
                    reason: "line is not valid UTF-8".into(),
                });
                continue;
            }
        };
        if text.trim().is_empty() {
            continue;
        }
        match parse_line(text, cfg, filter_phones) {
            Ok(ev) => out.events.push(ev),
            Err(reason) => out.errors.push(LineError {
                line: line_no,
                reason,
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference digests computed with Python's hashlib.
    const SALT_S_MAC_001122334455: &str =
        "ecb28d6d260b219d7967dda2d33ae4ff0c0326e57f38dc72b4fc1bca3fd6a436";
    const UNSALTED_MAC_001122334455: &str =
        "48f4634d1002f9f3c7570cb43e00dd869b22c79538e9b4adc7e402de1189cfe1";
    const STUDY_SALT_MAC_AABBCCDDEEFF: &str =
        "4b1591aaa44ec26daf48869a1797201def5a0bbf9c43729cc1ff3f557da4222c";

    fn salt(s: &str) -> HashConfig {
        HashConfig::salted(s.as_bytes()).unwrap()
    }

    #[test]
    fn hash_matches_reference_vectors() {
        let mac = parse_mac("00:11:22:33:44:55").unwrap();
        assert_eq!(hash_device_id(&mac, &salt("s")).unwrap(), SALT_S_MAC_001122334455);
        assert_eq!(
            hash_device_id(&mac, &HashConfig::unsalted()).unwrap(),
            UNSALTED_MAC_001122334455
        );
        let mac = parse_mac("AA-BB-CC-DD-EE-FF").unwrap();
        assert_eq!(
            hash_device_id(&mac, &salt("study-salt")).unwrap(),
            STUDY_SALT_MAC_AABBCCDDEEFF
        );
    }

    #[test]
    fn hash_is_deterministic() {
        let cfg = salt("s");
        let mac = [1, 2, 3, 4, 5, 6];
        assert_eq!(hash_device_id(&mac, &cfg).unwrap(), hash_device_id(&mac, &cfg).unwrap());
    }

    #[test]
    fn hash_rejects_wrong_length() {
        assert_eq!(
            hash_device_id(&[1, 2, 3], &salt("s")),
            Err(Error::IdentifierLength(3))
        );
        assert!(parse_mac("00:11:22:33:44").is_err());
        assert!(HashConfig::salted(Vec::new()).is_err());
    }

    #[test]
    fn single_byte_changes_alter_hash() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = salt("s");
        for _ in 0..1000 {
            let a: [u8; 6] = rng.gen();
            let mut b = a;
            let i = rng.gen_range(0..6);
            b[i] ^= rng.gen_range(1..=255u8);
            assert_ne!(hash_device_id(&a, &cfg).unwrap(), hash_device_id(&b, &cfg).unwrap());
        }
    }

    #[test]
    fn phone_class_mask() {
        assert!(is_phone_device(0x000200));
        assert!(!is_phone_device(0x000100));
        assert!(is_phone_device(0x00020C));
        assert!(is_phone_device(0x5A020C));
        assert!(!is_phone_device(0x240404));
        assert!(!is_phone_device(0x000000));
    }

    fn bt_line(n: usize) -> String {
        format!(
            r#"{{"participant_id":"p1","device_os":"ios","timestamp":"2019-03-04T00:0{n}:00Z","kind":"bluetooth","payload":{{"sightings":[]}}}}"#
        )
    }

    #[test]
    fn empty_input() {
        let out = parse_scan_log("".as_bytes(), &salt("s"), true).unwrap();
        assert!(out.events.is_empty() && out.errors.is_empty());
    }

    #[test]
    fn malformed_line_is_isolated() {
        let text = format!("{}\n{}\n{}\n{{not json\n", bt_line(1), bt_line(2), bt_line(3));
        let out = parse_scan_log(text.as_bytes(), &salt("s"), true).unwrap();
        assert_eq!(out.events.len(), 3);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 4);
        assert!(out.errors[0].to_string().starts_with("line 4: "));
    }

    #[test]
    fn blank_lines_are_skipped_but_numbered() {
        let text = format!("\n{}\n   \nnope\n", bt_line(1));
        let out = parse_scan_log(text.as_bytes(), &salt("s"), true).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.errors[0].line, 4);
    }

    #[test]
    fn phone_filter_drops_headset() {
        let line = r#"{"participant_id":"p1","device_os":"android","timestamp":"2019-03-04T00:00:00Z","kind":"bluetooth","payload":{"sightings":[{"mac":"00:11:22:33:44:55","class_of_device":512},{"mac":"00:11:22:33:44:66","class_of_device":"0x404"}]}}"#;
        let cfg = salt("s");
        let on = parse_scan_log(line.as_bytes(), &cfg, true).unwrap();
        let scan = on.events[0].bluetooth().unwrap();
        assert_eq!(scan.sightings.len(), 1);
        assert_eq!(scan.sightings[0].hashed_device_id, SALT_S_MAC_001122334455);
        assert_eq!(scan.sightings[0].class_of_device, 0x200);

        let off = parse_scan_log(line.as_bytes(), &cfg, false).unwrap();
        assert_eq!(off.events[0].bluetooth().unwrap().sightings.len(), 2);
    }

    #[test]
    fn prehashed_ids_pass_through() {
        let line = format!(
            r#"{{"participant_id":"p1","device_os":"android","timestamp":"2019-03-04T00:00:00Z","kind":"bluetooth","payload":{{"sightings":[{{"hashed_device_id":"{}","class_of_device":512}}]}}}}"#,
            SALT_S_MAC_001122334455.to_uppercase()
        );
        let out = parse_scan_log(line.as_bytes(), &salt("other"), true).unwrap();
        assert_eq!(
            out.events[0].bluetooth().unwrap().sightings[0].hashed_device_id,
            SALT_S_MAC_001122334455
        );
    }

    #[test]
    fn kind_payload_mismatch_is_reported() {
        let line = r#"{"participant_id":"p1","device_os":"android","timestamp":"2019-03-04T00:00:00Z","kind":"gps","payload":{"sightings":[]}}"#;
        let out = parse_scan_log(line.as_bytes(), &salt("s"), true).unwrap();
        assert!(out.errors[0].reason.contains("kind/payload mismatch"), "{}", out.errors[0]);
    }

    #[test]
    fn range_errors_name_the_field() {
        let line = r#"{"participant_id":"p1","device_os":"android","timestamp":"2019-03-04T00:00:00+10:00","kind":"gps","payload":{"latitude":91.0,"longitude":0.0},"extra":1}"#;
        let out = parse_scan_log(line.as_bytes(), &salt("s"), true).unwrap();
        assert!(out.errors[0].reason.contains("latitude out of range"));
    }

    #[test]
    fn invalid_utf8_is_a_line_error() {
        let mut bytes = bt_line(1).into_bytes();
        bytes.extend_from_slice(b"\n\xff\xfe\n");
        let out = parse_scan_log(bytes.as_slice(), &salt("s"), true).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.errors[0].line, 2);
    }

    proptest! {
        #[test]
        fn events_plus_errors_equals_nonempty_lines(
            lines in proptest::collection::vec(
                prop_oneof![
                    (0usize..10).prop_map(bt_line),
                    Just(String::new()),
                    Just("{}".to_string()),
                    "[a-z ]{0,12}",
                ],
                0..30,
            )
        ) {
            let text = lines.join("\n");
            let non_empty = lines.iter().filter(|l| !l.trim().is_empty()).count();
            let out = parse_scan_log(text.as_bytes(), &salt("s"), true).unwrap();
            prop_assert_eq!(out.events.len() + out.errors.len(), non_empty);
            let again = parse_scan_log(text.as_bytes(), &salt("s"), true).unwrap();
            prop_assert_eq!(out, again);
        }

        #[test]
        fn hashing_is_a_function(mac in any::<[u8; 6]>(), s in "[a-z]{1,8}") {
            let cfg = salt(&s);
            let a = hash_device_id(&mac, &cfg).unwrap();
            prop_assert_eq!(a.len(), 64);
            prop_assert_eq!(a, hash_device_id(&mac, &cfg).unwrap());
        }
    }
}
