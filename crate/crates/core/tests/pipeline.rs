use std::collections::BTreeSet;

use phenokit::battery::{discharge_observations, fit_battery_model, predict_battery_life, DischargeOptions, IrlsOptions};
use phenokit::ingest::{hash_device_id, parse_mac, parse_scan_log, HashConfig};
use phenokit::model::{ScanEvent, ScanKind};
use phenokit::report::{build_report, group_by_participant, to_stable_json, ReportOptions, REPORT_SCHEMA};
use phenokit::social::{classify_devices, DEFAULT_MIN_DAYS};
use phenokit::synth::{generate, ClusterPlan, SynthConfig, SynthOutput};

fn parse(out: &SynthOutput, cfg: &HashConfig) -> Vec<ScanEvent> {
    let parsed = parse_scan_log(out.log.as_bytes(), cfg, true).unwrap();
    assert!(parsed.errors.is_empty());
    parsed.events
}

#[test]
fn known_devices_match_manifest() {
    let cfg = SynthConfig {
        seed: 21,
        n_participants: 6,
        ..Default::default()
    };
    let out = generate(&cfg).unwrap();
    let hash = HashConfig::salted("study").unwrap();
    let groups = group_by_participant(&parse(&out, &hash));
    for truth in &out.manifest.participants {
        let events = &groups[&truth.participant_id];
        let partition = classify_devices(events, DEFAULT_MIN_DAYS, cfg.tz);
        let expected: BTreeSet<String> = truth
            .known_device_macs
            .iter()
            .map(|m| hash_device_id(&parse_mac(m).unwrap(), &hash).unwrap())
            .collect();
        assert_eq!(partition.known, expected, "{}", truth.participant_id);
    }
}

#[test]
fn battery_lives_within_two_percent_of_planted() {
    let cfg = SynthConfig {
        seed: 5,
        n_participants: 20,
        ..Default::default()
    };
    let out = generate(&cfg).unwrap();
    let groups = group_by_participant(&parse(&out, &HashConfig::unsalted()));
    let obs: Vec<_> = groups
        .values()
        .flat_map(|evs| discharge_observations(evs, &cfg.schedule, &DischargeOptions::default()))
        .collect();
    let fit = fit_battery_model(&obs, &IrlsOptions::default()).unwrap();

    let n = out.manifest.participants.len() as f64;
    let c0 = out.manifest.participants.iter().map(|p| p.battery.c0).sum::<f64>() / n;
    let k = out.manifest.battery.k;
    for rate in [0.0, 7.5, 12.0, 15.0, 20.0] {
        let planted = 100.0 / (c0 + k * rate);
        let got = predict_battery_life(&fit, rate).unwrap();
        assert!((got - planted).abs() / planted < 0.02, "rate {rate}: {got} vs {planted}");
    }
}

#[test]
fn ingest_counts_match_manifest() {
    let cfg = SynthConfig {
        seed: 8,
        n_participants: 5,
        ..Default::default()
    };
    let out = generate(&cfg).unwrap();
    let parsed = parse_scan_log(out.log.as_bytes(), &HashConfig::unsalted(), false).unwrap();
    assert!(parsed.errors.is_empty());
    for truth in &out.manifest.participants {
        for kind in [ScanKind::Bluetooth, ScanKind::Gps, ScanKind::Battery] {
            let n = parsed
                .events
                .iter()
                .filter(|e| e.participant_id == truth.participant_id && e.kind == kind)
                .count() as u64;
            assert_eq!(n, truth.emitted.get(kind));
            assert!(n <= truth.scheduled.get(kind));
        }
    }
}

#[test]
fn report_validates_against_schema() {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();

    let cfg = SynthConfig {
        seed: 3,
        n_participants: 6,
        clusters: ClusterPlan::Range { min: 1, max: 5 },
        ..Default::default()
    };
    let out = generate(&cfg).unwrap();
    let events = parse(&out, &HashConfig::unsalted());
    let report = build_report(&events, &ReportOptions::new(cfg.schedule.clone(), cfg.tz)).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&to_stable_json(&report)).unwrap();
    if let Err(errors) = compiled.validate(&doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{}", msgs.join("\n"));
    }

    let empty = build_report(&[], &ReportOptions::new(cfg.schedule.clone(), cfg.tz)).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&to_stable_json(&empty)).unwrap();
    assert!(compiled.is_valid(&doc));

    let mut broken = doc.clone();
    broken["participants"] = serde_json::json!(-1);
    assert!(!compiled.is_valid(&broken));
}
