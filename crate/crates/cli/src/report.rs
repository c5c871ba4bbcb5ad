//! `report`: per-alert table and latency percentiles from an event log.

use std::collections::BTreeMap;
use std::fmt::Write;

use hijackguard_core::detection::{AlertId, AlertRecord, AlertState};
use hijackguard_core::events::{parse_log, EngineEvent, LogMalformed};
use hijackguard_core::mitigation::PlanStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub alert: AlertRecord,
    pub plan: Option<PlanStatus>,
    pub unmitigable: bool,
    /// Command to controller acknowledgment.
    pub announce: Option<f64>,
    /// Detection to sustained legitimate routing.
    pub complete: Option<f64>,
    /// Detection to RESOLVED.
    pub resolve: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<Row>,
}

/// Nearest-rank percentile: the smallest sample with at least `p` percent of
/// the samples at or below it.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64 / 100.0).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn build(text: &str) -> Result<Report, LogMalformed> {
    let mut rows: BTreeMap<AlertId, Row> = BTreeMap::new();
    for event in parse_log(text)? {
        match event {
            EngineEvent::AlertRaised(alert) => {
                rows.insert(
                    alert.alert_id,
                    Row {
                        alert,
                        plan: None,
                        unmitigable: false,
                        announce: None,
                        complete: None,
                        resolve: None,
                    },
                );
            }
            EngineEvent::AlertState(rec) => {
                if let Some(row) = rows.get_mut(&rec.alert_id) {
                    if rec.state == AlertState::Resolved {
                        row.resolve = rec.at.map(|t| t - row.alert.detected_at);
                    }
                    row.alert.state = rec.state;
                }
            }
            EngineEvent::PlanCreated { plan, .. } => {
                if let Some(row) = rows.get_mut(&plan.alert_id) {
                    row.plan = Some(plan.status);
                }
            }
            EngineEvent::PlanState {
                alert_id,
                status,
                latency,
                ..
            } => {
                if let Some(row) = rows.get_mut(&alert_id) {
                    row.plan = Some(status);
                    if latency.is_some() {
                        row.announce = latency;
                    }
                }
            }
            EngineEvent::Unmitigable { alert_id, .. } => {
                if let Some(row) = rows.get_mut(&alert_id) {
                    row.unmitigable = true;
                }
            }
            EngineEvent::Convergence { report, .. } => {
                if let (Some(row), Some(done)) = (rows.get_mut(&report.alert_id), report.completed_at) {
                    row.complete = Some(done - row.alert.detected_at);
                }
            }
            EngineEvent::Command { .. } => {}
        }
    }
    Ok(Report {
        rows: rows.into_values().collect(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

impl Report {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let header = [
            "alert",
            "prefix",
            "observed",
            "origin",
            "kind",
            "state",
            "detected_at",
            "plan",
            "announce_s",
            "complete_s",
            "resolve_s",
        ];
        let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let plan = if r.unmitigable {
                "UNMITIGABLE".to_string()
            } else {
                r.plan.map(|p| p.to_string()).unwrap_or_else(|| "-".into())
            };
            table.push(vec![
                r.alert.alert_id.to_string(),
                r.alert.prefix.to_string(),
                r.alert.observed_prefix.to_string(),
                r.alert.offending_origin.to_string(),
                r.alert.kind.to_string(),
                r.alert.state.to_string(),
                format!("{:.3}", r.alert.detected_at),
                plan,
                cell(r.announce),
                cell(r.complete),
                cell(r.resolve),
            ]);
        }
        render_table(&mut out, &table);

        let _ = writeln!(out, "\n{} alert(s)", self.rows.len());
        if self.rows.is_empty() {
            return out;
        }
        let mut stats: Vec<Vec<String>> = vec![["latency", "n", "p50", "p90", "p99", "max"]
            .iter()
            .map(|s| s.to_string())
            .collect()];
        type Column = fn(&Row) -> Option<f64>;
        let series: [(&str, Column); 3] = [
            ("announce_s", |r| r.announce),
            ("complete_s", |r| r.complete),
            ("resolve_s", |r| r.resolve),
        ];
        for (name, get) in series {
            let samples: Vec<f64> = self.rows.iter().filter_map(get).collect();
            let mut line = vec![name.to_string(), samples.len().to_string()];
            for p in [50.0, 90.0, 99.0, 100.0] {
                line.push(cell(percentile(&samples, p)));
            }
            stats.push(line);
        }
        out.push('\n');
        render_table(&mut out, &stats);
        out
    }
}

fn render_table(out: &mut String, rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for row in rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
}
