use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use hijackguard_core::config::EngineConfig;
use hijackguard_core::events::EngineEvent;
use hijackguard_core::feed::SourceId;
use hijackguard_core::replay::{replay, ReplayMode, ReplayOutcome, Trace};
use serde_json::Value;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/traces")
}

fn run(config: &EngineConfig, text: &str) -> ReplayOutcome {
    replay(
        config,
        vec![Trace::new(SourceId::new("trace"), text.as_bytes())],
        ReplayMode::Instant,
    )
    .unwrap()
}

#[test]
fn alert_sets_match_the_oracle() {
    let config = EngineConfig::load(&dir().join("config.toml")).unwrap();
    let expected: BTreeMap<String, Vec<Value>> =
        serde_json::from_str(&fs::read_to_string(dir().join("expected.json")).unwrap()).unwrap();
    assert_eq!(expected.len(), 20);

    for (name, want) in &expected {
        let text = fs::read_to_string(dir().join(format!("{name}.ndjson"))).unwrap();
        let outcome = run(&config, &text);
        let raised: Vec<_> = outcome
            .events
            .iter()
            .filter_map(|e| match e {
                EngineEvent::AlertRaised(r) => Some(r),
                _ => None,
            })
            .collect();
        let got: Vec<(String, u32, String, String, f64)> = raised
            .iter()
            .map(|r| {
                (
                    r.prefix.to_string(),
                    r.offending_origin.value(),
                    r.kind.to_string(),
                    r.observed_prefix.to_string(),
                    r.detected_at,
                )
            })
            .collect();
        let want: Vec<(String, u32, String, String, f64)> = want
            .iter()
            .map(|a| {
                (
                    a["prefix"].as_str().unwrap().to_string(),
                    a["offending_origin"].as_u64().unwrap() as u32,
                    a["kind"].as_str().unwrap().to_string(),
                    a["observed_prefix"].as_str().unwrap().to_string(),
                    a["detected_at"].as_f64().unwrap(),
                )
            })
            .collect();
        assert_eq!(got, want, "{name}");
        assert_eq!(outcome.exit_code(), if want.is_empty() { 0 } else { 2 }, "{name}");
        if name.contains("out-of-order") {
            assert_eq!(outcome.stats.late_arrivals, 0, "{name}: disorder exceeds the window");
        }
        if name.contains("duplicates") {
            assert!(outcome.stats.duplicates > 0, "{name}");
        }
    }
}

#[test]
fn replaying_twice_gives_identical_logs() {
    let config = EngineConfig::load(&dir().join("config.toml")).unwrap();
    for entry in fs::read_dir(dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("ndjson") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            run(&config, &text).log(),
            run(&config, &text).log(),
            "{}",
            path.display()
        );
    }
}
