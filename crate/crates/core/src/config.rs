//! Engine configuration file (TOML).
//!
//! ```toml
//! [[owned]]
//! prefix = "10.0.0.0/23"
//! origins = [65001]
//!
//! [[source]]
//! id = "ris-live"
//! kind = "stream"
//! endpoint = "https://ris-live.ripe.net/v1/stream/?format=json"
//! nominal_delay = 45.0
//! ```
//!
//! Every section other than `owned` is optional and falls back to defaults.
//! Validation errors point at the offending line.

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::detection::{OwnedPrefix, OwnedPrefixes};
use crate::feed::{MonitorSource, SourceId, SourceKind};
use crate::mitigation::RetryPolicy;
use crate::prefix::{Asn, IpPrefix, DEFAULT_MAX_LENGTH};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    pub source: MonitorSource,
    /// URL, `host:port`, or file path depending on the kind.
    pub endpoint: Option<String>,
    /// Seconds between polls; only used by poll sources.
    pub poll_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionSettings {
    pub quorum: usize,
    /// Seconds of arrival-time skew tolerated when replaying traces.
    pub reorder_window: f64,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        DetectionSettings {
            quorum: 1,
            reorder_window: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MitigationSettings {
    pub max_length: u8,
    pub retry: RetryPolicy,
    /// Seconds to keep sub-prefixes announced after resolution.
    pub linger: f64,
}

impl Default for MitigationSettings {
    fn default() -> Self {
        MitigationSettings {
            max_length: DEFAULT_MAX_LENGTH,
            retry: RetryPolicy::default(),
            linger: 3600.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitoringSettings {
    pub hold_time: f64,
}

impl Default for MonitoringSettings {
    fn default() -> Self {
        MonitoringSettings { hold_time: 60.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputSettings {
    pub event_log: Option<PathBuf>,
    pub timeline: Option<PathBuf>,
    pub geojson: Option<PathBuf>,
    pub geo_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub owned: OwnedPrefixes,
    pub sources: Vec<SourceConfig>,
    pub detection: DetectionSettings,
    pub mitigation: MitigationSettings,
    pub monitoring: MonitoringSettings,
    /// `dry-run`, `stdio`, or `tcp://host:port`.
    pub controller: String,
    pub output: OutputSettings,
}

pub const DRY_RUN_CONTROLLER: &str = "dry-run";

impl EngineConfig {
    /// Defaults everywhere except the owned prefixes.
    pub fn with_owned(owned: OwnedPrefixes) -> Self {
        EngineConfig {
            owned,
            sources: Vec::new(),
            detection: DetectionSettings::default(),
            mitigation: MitigationSettings::default(),
            monitoring: MonitoringSettings::default(),
            controller: DRY_RUN_CONTROLLER.to_string(),
            output: OutputSettings::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            ConfigError {
                line,
                field: line.map(|l| field_at(text, l)).unwrap_or_default(),
                message: e.message().to_string(),
            }
        })?;
        raw.validate(text)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn source(&self, id: &SourceId) -> Option<&SourceConfig> {
        self.sources.iter().find(|s| s.source.id == *id)
    }

    pub fn render(&self) -> String {
        let out = OutConfig {
            owned: self
                .owned
                .iter()
                .map(|o| OutOwned {
                    prefix: o.prefix.to_string(),
                    origins: o.legitimate_origins.iter().map(|a| a.value()).collect(),
                    mitigation: o.mitigation_enabled,
                })
                .collect(),
            source: self
                .sources
                .iter()
                .map(|s| OutSource {
                    id: s.source.id.to_string(),
                    kind: s.source.kind,
                    endpoint: s.endpoint.clone(),
                    nominal_delay: s.source.nominal_delay,
                    poll_interval: s.poll_interval,
                })
                .collect(),
            detection: OutDetection {
                quorum: self.detection.quorum as u64,
                reorder_window: self.detection.reorder_window,
            },
            mitigation: OutMitigation {
                max_length: self.mitigation.max_length,
                ack_deadline: self.mitigation.retry.ack_deadline,
                retries: self.mitigation.retry.retries,
                backoff_base: self.mitigation.retry.backoff_base,
                linger: self.mitigation.linger,
            },
            monitoring: OutMonitoring {
                hold_time: self.monitoring.hold_time,
            },
            controller: OutController {
                endpoint: self.controller.clone(),
            },
            output: OutOutput {
                event_log: self.output.event_log.clone(),
                timeline: self.output.timeline.clone(),
                geojson: self.output.geojson.clone(),
                geo_table: self.output.geo_table.clone(),
            },
        };
        toml::to_string(&out).expect("config serializes")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// `table.key` for a `key = value` line, qualified by the nearest header above it.
fn field_at(text: &str, line: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let Some(current) = lines.get(line.saturating_sub(1)) else {
        return String::new();
    };
    let key = current.split_once('=').map(|(k, _)| k.trim()).unwrap_or("");
    let table = lines[..line - 1]
        .iter()
        .rev()
        .map(|l| l.trim())
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim());
    match (table, key) {
        (Some(t), "") => t.to_string(),
        (Some(t), k) => format!("{t}.{k}"),
        (None, k) => k.to_string(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    owned: Vec<Spanned<RawOwned>>,
    #[serde(default)]
    source: Vec<Spanned<RawSource>>,
    #[serde(default)]
    detection: Option<RawDetection>,
    #[serde(default)]
    mitigation: Option<RawMitigation>,
    #[serde(default)]
    monitoring: Option<RawMonitoring>,
    #[serde(default)]
    controller: Option<RawController>,
    #[serde(default)]
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOwned {
    prefix: Spanned<String>,
    origins: Spanned<Vec<u32>>,
    #[serde(default = "yes")]
    mitigation: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    id: Spanned<String>,
    kind: SourceKind,
    endpoint: Option<String>,
    nominal_delay: Option<Spanned<f64>>,
    poll_interval: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    quorum: Option<Spanned<u64>>,
    reorder_window: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMitigation {
    max_length: Option<Spanned<u8>>,
    ack_deadline: Option<Spanned<f64>>,
    retries: Option<u32>,
    backoff_base: Option<Spanned<f64>>,
    linger: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonitoring {
    hold_time: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    endpoint: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    event_log: Option<PathBuf>,
    timeline: Option<PathBuf>,
    geojson: Option<PathBuf>,
    geo_table: Option<PathBuf>,
}

struct Checker<'t> {
    text: &'t str,
}

impl Checker<'_> {
    fn err<T>(&self, span: std::ops::Range<usize>, field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError {
            line: Some(line_of(self.text, span.start)),
            field: field.to_string(),
            message: message.into(),
        })
    }

    fn positive(&self, value: &Option<Spanned<f64>>, field: &str, default: f64) -> Result<f64, ConfigError> {
        match value {
            None => Ok(default),
            Some(v) if v.get_ref().is_finite() && *v.get_ref() > 0.0 => Ok(*v.get_ref()),
            Some(v) => self.err(v.span(), field, "must be a positive number of seconds"),
        }
    }

    fn non_negative(&self, value: &Spanned<f64>, field: &str) -> Result<f64, ConfigError> {
        if value.get_ref().is_finite() && *value.get_ref() >= 0.0 {
            Ok(*value.get_ref())
        } else {
            self.err(value.span(), field, "must be a non-negative number of seconds")
        }
    }
}

impl RawConfig {
    fn validate(self, text: &str) -> Result<EngineConfig, ConfigError> {
        let c = Checker { text };
        if self.owned.is_empty() {
            return Err(ConfigError {
                line: None,
                field: "owned".into(),
                message: "at least one owned prefix is required".into(),
            });
        }

        let mut owned: Vec<(OwnedPrefix, std::ops::Range<usize>)> = Vec::new();
        for (i, entry) in self.owned.iter().enumerate() {
            let field = format!("owned[{i}]");
            let raw = entry.get_ref();
            let prefix: IpPrefix = match raw.prefix.get_ref().parse() {
                Ok(p) => p,
                Err(e) => return c.err(raw.prefix.span(), &format!("{field}.prefix"), e.to_string()),
            };
            let origins = raw.origins.get_ref();
            if origins.is_empty() || origins.contains(&0) {
                return c.err(
                    raw.origins.span(),
                    &format!("{field}.origins"),
                    "needs at least one non-zero AS number",
                );
            }
            if let Some((other, _)) = owned.iter().find(|(o, _)| o.prefix.overlaps(&prefix)) {
                return c.err(
                    raw.prefix.span(),
                    &format!("{field}.prefix"),
                    format!("{prefix} overlaps owned prefix {}", other.prefix),
                );
            }
            let mut entry_cfg = OwnedPrefix::new(prefix, origins.iter().map(|&a| Asn(a)));
            entry_cfg.mitigation_enabled = raw.mitigation;
            owned.push((entry_cfg, raw.prefix.span()));
        }
        let owned = OwnedPrefixes::new(owned.into_iter().map(|(o, _)| o).collect()).expect("checked above");

        let mut ids = HashSet::new();
        let mut sources = Vec::new();
        for (i, entry) in self.source.iter().enumerate() {
            let field = format!("source[{i}]");
            let raw = entry.get_ref();
            let id = raw.id.get_ref();
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return c.err(raw.id.span(), &format!("{field}.id"), "must be a non-empty word");
            }
            if !ids.insert(id.clone()) {
                return c.err(
                    raw.id.span(),
                    &format!("{field}.id"),
                    format!("duplicate source id `{id}`"),
                );
            }
            let nominal_delay = match &raw.nominal_delay {
                Some(d) => c.non_negative(d, &format!("{field}.nominal_delay"))?,
                None => 0.0,
            };
            let poll_interval = c.positive(&raw.poll_interval, &format!("{field}.poll_interval"), 30.0)?;
            if raw.endpoint.is_none() {
                return c.err(entry.span(), &format!("{field}.endpoint"), "missing endpoint");
            }
            sources.push(SourceConfig {
                source: MonitorSource {
                    id: SourceId::new(id.clone()),
                    kind: raw.kind,
                    nominal_delay,
                },
                endpoint: raw.endpoint.clone(),
                poll_interval,
            });
        }

        let mut detection = DetectionSettings::default();
        if let Some(d) = &self.detection {
            if let Some(q) = &d.quorum {
                if *q.get_ref() == 0 {
                    return c.err(q.span(), "detection.quorum", "must be at least 1");
                }
                detection.quorum = *q.get_ref() as usize;
            }
            if let Some(w) = &d.reorder_window {
                detection.reorder_window = c.non_negative(w, "detection.reorder_window")?;
            }
        }

        let mut mitigation = MitigationSettings::default();
        if let Some(m) = &self.mitigation {
            if let Some(len) = &m.max_length {
                if *len.get_ref() > 32 {
                    return c.err(len.span(), "mitigation.max_length", "must be at most 32");
                }
                mitigation.max_length = *len.get_ref();
            }
            mitigation.retry.ack_deadline = c.positive(
                &m.ack_deadline,
                "mitigation.ack_deadline",
                mitigation.retry.ack_deadline,
            )?;
            mitigation.retry.backoff_base = c.positive(
                &m.backoff_base,
                "mitigation.backoff_base",
                mitigation.retry.backoff_base,
            )?;
            mitigation.linger = c.positive(&m.linger, "mitigation.linger", mitigation.linger)?;
            if let Some(r) = m.retries {
                mitigation.retry.retries = r;
            }
        }

        let mut monitoring = MonitoringSettings::default();
        if let Some(m) = &self.monitoring {
            monitoring.hold_time = c.positive(&m.hold_time, "monitoring.hold_time", monitoring.hold_time)?;
        }

        let controller = match &self.controller {
            None => DRY_RUN_CONTROLLER.to_string(),
            Some(ctl) => {
                let endpoint = ctl.endpoint.get_ref();
                let known = endpoint == DRY_RUN_CONTROLLER
                    || endpoint == "stdio"
                    || endpoint.strip_prefix("tcp://").is_some_and(|a| !a.is_empty());
                if !known {
                    return c.err(
                        ctl.endpoint.span(),
                        "controller.endpoint",
                        "expected `dry-run`, `stdio` or `tcp://host:port`",
                    );
                }
                endpoint.clone()
            }
        };

        let output = match self.output {
            None => OutputSettings::default(),
            Some(o) => OutputSettings {
                event_log: o.event_log,
                timeline: o.timeline,
                geojson: o.geojson,
                geo_table: o.geo_table,
            },
        };

        Ok(EngineConfig {
            owned,
            sources,
            detection,
            mitigation,
            monitoring,
            controller,
            output,
        })
    }
}

#[derive(Serialize)]
struct OutConfig {
    owned: Vec<OutOwned>,
    source: Vec<OutSource>,
    detection: OutDetection,
    mitigation: OutMitigation,
    monitoring: OutMonitoring,
    controller: OutController,
    output: OutOutput,
}

#[derive(Serialize)]
struct OutOwned {
    prefix: String,
    origins: BTreeSet<u32>,
    mitigation: bool,
}

#[derive(Serialize)]
struct OutSource {
    id: String,
    kind: SourceKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    endpoint: Option<String>,
    nominal_delay: f64,
    poll_interval: f64,
}

#[derive(Serialize)]
struct OutDetection {
    quorum: u64,
    reorder_window: f64,
}

#[derive(Serialize)]
struct OutMitigation {
    max_length: u8,
    ack_deadline: f64,
    retries: u32,
    backoff_base: f64,
    linger: f64,
}

#[derive(Serialize)]
struct OutMonitoring {
    hold_time: f64,
}

#[derive(Serialize)]
struct OutController {
    endpoint: String,
}

#[derive(Serialize)]
struct OutOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    event_log: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timeline: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    geojson: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    geo_table: Option<PathBuf>,
}
