//! Deterministic replay of recorded stream traces.
//!
//! A trace is a file of stream messages, one per line. Each message is
//! received at its own `data.timestamp`, so replaying never reads the wall
//! clock; paced mode only sleeps between messages. Commands go to a dry-run
//! controller that acknowledges every line at the time it is sent.

use std::fmt::Write as _;
use std::io::BufRead;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::clock::{Clock, ManualClock, Timestamp};
use crate::config::EngineConfig;
use crate::detection::AlertState;
use crate::engine::Engine;
use crate::events::EngineEvent;
use crate::feed::{parse_stream_message, ReorderBuffer, RouteObservation, SourceId, StreamError};
use crate::mitigation::Reply;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    Instant,
    /// Sleeps for the timestamp delta between consecutive messages.
    Paced,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace {trace} line {line}: {message}")]
    TraceMalformed {
        trace: SourceId,
        line: usize,
        message: String,
    },
    #[error("reading trace {trace}: {error}")]
    Io { trace: SourceId, error: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReplayStats {
    pub messages: u64,
    pub observations: u64,
    pub schema_violations: u64,
    pub empty_updates: u64,
    pub late_arrivals: u64,
    pub duplicates: u64,
}

pub struct ReplayOutcome {
    pub events: Vec<EngineEvent>,
    pub stats: ReplayStats,
    pub engine: Engine,
}

impl ReplayOutcome {
    pub fn log(&self) -> String {
        crate::events::render_log(&self.events)
    }

    pub fn alerts_raised(&self) -> usize {
        self.engine.alerts().count()
    }

    /// 2 when any hijack was detected, 0 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.alerts_raised() > 0 {
            2
        } else {
            0
        }
    }

    pub fn summary(&self) -> String {
        summarize(&self.engine, &self.stats)
    }
}

/// Human-readable account of alerts, plans and latencies.
pub fn summarize(engine: &Engine, stats: &ReplayStats) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "messages {}  observations {}  schema violations {}  empty updates {}  late {}  duplicates {}",
        stats.messages,
        stats.observations,
        stats.schema_violations,
        stats.empty_updates,
        stats.late_arrivals,
        stats.duplicates
    );
    let alerts: Vec<_> = engine.alerts().collect();
    let _ = writeln!(out, "alerts raised: {}", alerts.len());
    for alert in alerts {
        let _ = write!(
            out,
            "  alert {} {} {} origin {} via {} state {} detected {:.3} (+{:.3}s after first seen)",
            alert.id,
            alert.kind,
            alert.owned.prefix,
            alert.offending_origin,
            alert.observed_prefix,
            alert.state,
            alert.detected_at,
            alert.detected_at - alert.first_seen,
        );
        match engine.plan(alert.id) {
            Some(plan) => {
                let prefixes: Vec<String> = plan.announcements.iter().map(ToString::to_string).collect();
                let _ = write!(out, "; plan {} [{}]", plan.status, prefixes.join(" "));
                if let Some(latency) = plan.announce_latency() {
                    let _ = write!(out, " announce latency {latency:.3}s");
                }
            }
            None if alert.state == AlertState::New => {
                let _ = write!(out, "; not mitigated");
            }
            None => {}
        }
        out.push('\n');
    }
    out
}

/// One trace to replay and the source id its observations carry.
pub struct Trace<'a> {
    pub source: SourceId,
    pub reader: Box<dyn BufRead + 'a>,
}

impl<'a> Trace<'a> {
    pub fn new(source: SourceId, reader: impl BufRead + 'a) -> Self {
        Trace {
            source,
            reader: Box::new(reader),
        }
    }
}

struct Message {
    source: SourceId,
    timestamp: Option<Timestamp>,
    raw: String,
}

fn read_trace(trace: Trace<'_>) -> Result<Vec<Message>, ReplayError> {
    let mut messages = Vec::new();
    for (idx, line) in trace.reader.lines().enumerate() {
        let raw = line.map_err(|error| ReplayError::Io {
            trace: trace.source.clone(),
            error,
        })?;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&raw).map_err(|e| ReplayError::TraceMalformed {
            trace: trace.source.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        let timestamp = value
            .pointer("/data/timestamp")
            .and_then(Value::as_f64)
            .filter(|t| t.is_finite());
        messages.push(Message {
            source: trace.source.clone(),
            timestamp,
            raw,
        });
    }
    Ok(messages)
}

// k-way merge by timestamp; each trace keeps its own line order
fn interleave(traces: Vec<Vec<Message>>) -> Vec<Message> {
    let total = traces.iter().map(Vec::len).sum();
    let mut iters: Vec<_> = traces.into_iter().map(|t| t.into_iter().peekable()).collect();
    let mut out = Vec::with_capacity(total);
    let mut clock = f64::NEG_INFINITY;
    loop {
        let next = iters
            .iter_mut()
            .enumerate()
            .filter_map(|(i, it)| it.peek().map(|m| (i, m.timestamp.unwrap_or(clock))))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let Some((i, t)) = next else {
            break;
        };
        clock = clock.max(t);
        out.push(iters[i].next().expect("peeked"));
    }
    out
}

/// Replays traces through a fresh engine, handing each event to `sink` as it
/// is produced.
pub fn replay_with(
    config: &EngineConfig,
    traces: Vec<Trace<'_>>,
    mode: ReplayMode,
    sink: &mut dyn FnMut(&EngineEvent),
) -> Result<(ReplayStats, Engine), ReplayError> {
    let messages = interleave(traces.into_iter().map(read_trace).collect::<Result<Vec<_>, _>>()?);
    let mut engine = Engine::new(config.clone());
    let mut buffer = ReorderBuffer::new(config.detection.reorder_window);
    let mut stats = ReplayStats::default();
    let clock = ManualClock::new(0.0);
    let mut latest = f64::NEG_INFINITY;
    let mut previous: Option<Timestamp> = None;

    for message in messages {
        stats.messages += 1;
        if let Some(t) = message.timestamp {
            if mode == ReplayMode::Paced {
                if let Some(prev) = previous {
                    let delta = (t - prev).max(0.0);
                    std::thread::sleep(Duration::from_secs_f64(delta));
                }
            }
            previous = Some(t);
            clock.set(t);
        }
        match parse_stream_message(&message.raw, &message.source, clock.now()) {
            Ok(observations) => {
                for obs in observations {
                    stats.observations += 1;
                    for ready in buffer.push(obs) {
                        feed(&mut engine, &ready, &mut latest, sink);
                    }
                }
            }
            Err(StreamError::EmptyUpdate) => stats.empty_updates += 1,
            Err(e @ StreamError::SchemaViolation { .. }) => {
                log::warn!("{}: skipping message: {e}", message.source);
                stats.schema_violations += 1;
            }
        }
    }
    for ready in buffer.flush() {
        feed(&mut engine, &ready, &mut latest, sink);
    }
    if latest.is_finite() {
        emit_all(engine.advance_to(latest), sink);
        pump(&mut engine, sink);
    }
    stats.late_arrivals = buffer.late();
    stats.duplicates = buffer.duplicates();
    Ok((stats, engine))
}

pub fn replay(config: &EngineConfig, traces: Vec<Trace<'_>>, mode: ReplayMode) -> Result<ReplayOutcome, ReplayError> {
    let mut events = Vec::new();
    let (stats, engine) = replay_with(config, traces, mode, &mut |e| events.push(e.clone()))?;
    Ok(ReplayOutcome { events, stats, engine })
}

fn feed(engine: &mut Engine, obs: &RouteObservation, latest: &mut Timestamp, sink: &mut dyn FnMut(&EngineEvent)) {
    *latest = latest.max(obs.received_at);
    emit_all(engine.advance_to(obs.received_at), sink);
    pump(engine, sink);
    emit_all(engine.ingest(obs), sink);
    pump(engine, sink);
}

// dry-run controller: every line is acknowledged when sent
fn pump(engine: &mut Engine, sink: &mut dyn FnMut(&EngineEvent)) {
    loop {
        let outbox = engine.take_outbox();
        if outbox.is_empty() {
            break;
        }
        for (t, command) in outbox {
            emit_all(engine.on_reply(&Reply::ok(&command), t), sink);
        }
    }
}

fn emit_all(events: Vec<EngineEvent>, sink: &mut dyn FnMut(&EngineEvent)) {
    for event in &events {
        sink(event);
    }
}
