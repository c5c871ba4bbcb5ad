use std::fs;
use std::path::PathBuf;

use hijackguard_core::config::EngineConfig;
use hijackguard_core::feed::{parse_stream_message, RouteUpdate, SourceId, StreamError};
use hijackguard_core::replay::{replay, ReplayMode, Trace};
use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

#[test]
fn every_message_parses_to_the_expected_observations() {
    let messages = fs::read_to_string(fixture("stream/messages.ndjson")).unwrap();
    let expected: Vec<Value> =
        serde_json::from_str(&fs::read_to_string(fixture("stream/expected.json")).unwrap()).unwrap();
    let lines: Vec<&str> = messages.lines().collect();
    assert_eq!(lines.len(), expected.len());
    let source = SourceId::new("ris");

    for (i, (line, want)) in lines.iter().zip(&expected).enumerate() {
        let got = parse_stream_message(line, &source, 7.0);
        match want.get("error").and_then(Value::as_str) {
            Some("schema_violation") => match got {
                Err(StreamError::SchemaViolation { field, .. }) => {
                    assert_eq!(field, want["field"].as_str().unwrap(), "message {i}")
                }
                other => panic!("message {i}: expected schema violation, got {other:?}"),
            },
            Some("empty_update") => assert_eq!(got, Err(StreamError::EmptyUpdate), "message {i}"),
            Some(other) => panic!("unknown expectation {other}"),
            None => {
                let got = got.unwrap_or_else(|e| panic!("message {i}: {e}"));
                let want = want["observations"].as_array().unwrap();
                assert_eq!(got.len(), want.len(), "message {i}");
                for (obs, w) in got.iter().zip(want) {
                    assert_eq!(obs.source.as_str(), w["source"].as_str().unwrap());
                    assert_eq!(obs.vantage_point, w["vantage_point"].as_str().unwrap());
                    assert_eq!(obs.prefix.to_string(), w["prefix"].as_str().unwrap());
                    assert_eq!(obs.timestamp, w["timestamp"].as_f64().unwrap());
                    assert_eq!(obs.received_at, 7.0);
                    match (&obs.update, &w["path"]) {
                        (RouteUpdate::Withdraw, Value::Null) => {}
                        (RouteUpdate::Announce(path), Value::Array(hops)) => {
                            let hops: Vec<u32> = hops.iter().map(|h| h.as_u64().unwrap() as u32).collect();
                            let got: Vec<u32> = path.hops().iter().map(|a| a.value()).collect();
                            assert_eq!(got, hops, "message {i}");
                        }
                        (update, path) => panic!("message {i}: {update:?} vs {path}"),
                    }
                }
            }
        }
    }
}

#[test]
fn malformed_messages_do_not_stop_the_pipeline() {
    let messages = fs::read_to_string(fixture("stream/messages.ndjson")).unwrap();
    let expected: Vec<Value> =
        serde_json::from_str(&fs::read_to_string(fixture("stream/expected.json")).unwrap()).unwrap();
    let json_lines: Vec<(&str, &Value)> = messages
        .lines()
        .zip(&expected)
        .filter(|(l, _)| serde_json::from_str::<Value>(l).is_ok())
        .collect();
    let text: String = json_lines.iter().map(|(l, _)| format!("{l}\n")).collect();
    let violations = json_lines
        .iter()
        .filter(|(_, w)| w.get("error").and_then(Value::as_str) == Some("schema_violation"))
        .count() as u64;
    let observations: u64 = json_lines
        .iter()
        .filter_map(|(_, w)| w.get("observations").and_then(Value::as_array))
        .map(|o| o.len() as u64)
        .sum();

    let config = EngineConfig::load(&fixture("traces/config.toml")).unwrap();
    let outcome = replay(
        &config,
        vec![Trace::new(SourceId::new("ris"), text.as_bytes())],
        ReplayMode::Instant,
    )
    .unwrap();
    assert_eq!(outcome.stats.schema_violations, violations);
    assert_eq!(outcome.stats.empty_updates, 2);
    assert_eq!(outcome.stats.observations, observations);
}
