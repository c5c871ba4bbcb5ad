//! Records written to the event log, one JSON object per line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::detection::{AlertId, AlertRecord};
use crate::mitigation::{PlanRecord, PlanStatus};
use crate::monitor::ConvergenceReport;
use crate::prefix::IpPrefix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EngineEvent {
    AlertRaised(AlertRecord),
    AlertState(AlertRecord),
    PlanCreated {
        t: Timestamp,
        #[serde(flatten)]
        plan: PlanRecord,
    },
    PlanState {
        t: Timestamp,
        alert_id: AlertId,
        status: PlanStatus,
        /// Seconds from command to acknowledgment, on ACKNOWLEDGED.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        latency: Option<f64>,
    },
    Command {
        t: Timestamp,
        line: String,
    },
    Unmitigable {
        t: Timestamp,
        alert_id: AlertId,
        prefix: IpPrefix,
        max_length: u8,
    },
    Convergence {
        t: Timestamp,
        #[serde(flatten)]
        report: ConvergenceReport,
    },
}

impl EngineEvent {
    pub fn time(&self) -> Timestamp {
        match self {
            EngineEvent::AlertRaised(r) => r.detected_at,
            EngineEvent::AlertState(r) => r.at.unwrap_or(r.detected_at),
            EngineEvent::PlanCreated { t, .. }
            | EngineEvent::PlanState { t, .. }
            | EngineEvent::Command { t, .. }
            | EngineEvent::Unmitigable { t, .. }
            | EngineEvent::Convergence { t, .. } => *t,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("event log line {line}: {message}")]
pub struct LogMalformed {
    pub line: usize,
    pub message: String,
}

/// Parses an event log; blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<EngineEvent>, LogMalformed> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LogMalformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn render_log(events: &[EngineEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&event.to_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{AlertState, HijackKind};
    use crate::prefix::Asn;

    fn p(s: &str) -> IpPrefix {
        s.parse().unwrap()
    }

    fn sample() -> Vec<EngineEvent> {
        let record = AlertRecord {
            alert_id: AlertId(1),
            prefix: p("10.0.0.0/23"),
            observed_prefix: p("10.0.0.0/23"),
            offending_origin: Asn(65002),
            kind: HijackKind::ExactOrigin,
            state: AlertState::New,
            first_seen: 100.0,
            detected_at: 145.0,
            at: None,
        };
        vec![
            EngineEvent::AlertRaised(record.clone()),
            EngineEvent::PlanCreated {
                t: 145.0,
                plan: PlanRecord {
                    alert_id: AlertId(1),
                    parent: p("10.0.0.0/23"),
                    announcements: vec![p("10.0.0.0/24"), p("10.0.1.0/24")],
                    origin: Asn(65001),
                    status: PlanStatus::Planned,
                },
            },
            EngineEvent::Command {
                t: 145.0,
                line: "announce 10.0.0.0/24 origin 65001".into(),
            },
            EngineEvent::PlanState {
                t: 160.0,
                alert_id: AlertId(1),
                status: PlanStatus::Acknowledged,
                latency: Some(15.0),
            },
            EngineEvent::AlertState(AlertRecord {
                state: AlertState::Mitigating,
                at: Some(145.0),
                ..record
            }),
            EngineEvent::Convergence {
                t: 200.0,
                report: ConvergenceReport {
                    alert_id: AlertId(1),
                    total_vps: 4,
                    legitimate_vps: 3,
                    excluded_vps: 1,
                    fraction: 0.75,
                    complete: false,
                    completed_at: None,
                },
            },
        ]
    }

    #[test]
    fn log_round_trips() {
        let events = sample();
        let text = render_log(&events);
        assert_eq!(parse_log(&text).unwrap(), events);
    }

    #[test]
    fn lines_are_tagged() {
        let line = sample()[0].to_line();
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(value["event"], "alert_raised");
        assert_eq!(value["prefix"], "10.0.0.0/23");
        assert_eq!(value["kind"], "exact-origin");
        assert_eq!(value["state"], "NEW");
        assert!(value.get("at").is_none());
    }

    #[test]
    fn malformed_line_is_located() {
        let text = format!("{}\n\nnot json\n", sample()[0].to_line());
        assert_eq!(parse_log(&text).unwrap_err().line, 3);
        assert!(parse_log("").unwrap().is_empty());
    }
}
