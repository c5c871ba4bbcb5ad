//! Environment overrides for file paths and endpoints.
//!
//! | variable | replaces |
//! |---|---|
//! | `HIJACKGUARD_EVENT_LOG` | `output.event_log` |
//! | `HIJACKGUARD_TIMELINE` | `output.timeline` |
//! | `HIJACKGUARD_GEOJSON` | `output.geojson` |
//! | `HIJACKGUARD_GEO_TABLE` | `output.geo_table` |
//! | `HIJACKGUARD_CONTROLLER` | `controller.endpoint` |
//! | `HIJACKGUARD_SOURCE_<ID>_ENDPOINT` | the endpoint of source `<ID>` |
//!
//! `<ID>` is the source id upper-cased with every non-alphanumeric character
//! replaced by `_`.

use std::path::PathBuf;

use anyhow::{bail, Result};
use hijackguard_core::config::EngineConfig;

pub fn source_variable(id: &str) -> String {
    let id: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("HIJACKGUARD_SOURCE_{id}_ENDPOINT")
}

pub fn valid_controller(endpoint: &str) -> bool {
    endpoint == "dry-run" || endpoint == "stdio" || endpoint.strip_prefix("tcp://").is_some_and(|a| !a.is_empty())
}

pub fn apply(mut config: EngineConfig, var: impl Fn(&str) -> Option<String>) -> Result<EngineConfig> {
    let out = &mut config.output;
    for (name, slot) in [
        ("HIJACKGUARD_EVENT_LOG", &mut out.event_log),
        ("HIJACKGUARD_TIMELINE", &mut out.timeline),
        ("HIJACKGUARD_GEOJSON", &mut out.geojson),
        ("HIJACKGUARD_GEO_TABLE", &mut out.geo_table),
    ] {
        if let Some(v) = var(name) {
            *slot = Some(PathBuf::from(v));
        }
    }
    if let Some(v) = var("HIJACKGUARD_CONTROLLER") {
        if !valid_controller(&v) {
            bail!("HIJACKGUARD_CONTROLLER: expected `dry-run`, `stdio` or `tcp://host:port`, got `{v}`");
        }
        config.controller = v;
    }
    for source in &mut config.sources {
        if let Some(v) = var(&source_variable(source.source.id.as_str())) {
            source.endpoint = Some(v);
        }
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    const CONFIG: &str = r#"
[[owned]]
prefix = "10.0.0.0/23"
origins = [65001]

[[source]]
id = "ris-live"
kind = "stream"
endpoint = "tcp://127.0.0.1:1"
nominal_delay = 45.0
"#;

    #[test]
    fn overrides_paths_and_endpoints_only() {
        let env: HashMap<&str, &str> = [
            ("HIJACKGUARD_EVENT_LOG", "/tmp/events.ndjson"),
            ("HIJACKGUARD_CONTROLLER", "tcp://127.0.0.1:9000"),
            ("HIJACKGUARD_SOURCE_RIS_LIVE_ENDPOINT", "trace.ndjson"),
        ]
        .into();
        let base = EngineConfig::parse(CONFIG).unwrap();
        let config = apply(base.clone(), |k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(config.output.event_log, Some(PathBuf::from("/tmp/events.ndjson")));
        assert_eq!(config.controller, "tcp://127.0.0.1:9000");
        assert_eq!(config.sources[0].endpoint.as_deref(), Some("trace.ndjson"));
        assert_eq!(config.owned, base.owned);
        assert_eq!(config.detection, base.detection);
    }

    #[test]
    fn rejects_unknown_controller() {
        let base = EngineConfig::parse(CONFIG).unwrap();
        assert!(apply(base, |k| (k == "HIJACKGUARD_CONTROLLER")
            .then(|| "carrier-pigeon".into()))
        .is_err());
    }
}
