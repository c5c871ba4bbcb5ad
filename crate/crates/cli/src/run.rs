//! `run`: the live pipeline.
//!
//! Configs whose sources are all traces are replayed on the trace clock
//! instead, so `run` and `replay` produce the same events for them.

use std::fs::File;
use std::io::BufReader;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use hijackguard_core::clock::{Clock, SystemClock};
use hijackguard_core::config::EngineConfig;
use hijackguard_core::engine::Engine;
use hijackguard_core::events::EngineEvent;
use hijackguard_core::feed::{RouteObservation, SourceId, SourceKind};
use hijackguard_core::mitigation::{PlanStatus, Reply};
use hijackguard_core::replay::{replay_with, summarize, ReplayMode, Trace};

use crate::controller::{self, Controller};
use crate::output::{self, EventSink};
use crate::sources::{self, Shared};

pub enum Msg {
    Observations(Vec<RouteObservation>),
    Violation(SourceId, String),
    Reply(Reply),
    Drained(SourceId),
}

const IDLE_TICK: Duration = Duration::from_secs(1);

pub fn run(config: EngineConfig, exit_when_drained: bool) -> Result<i32> {
    if config.sources.is_empty() {
        bail!("config has no [[source]] entries");
    }
    if config.controller == "stdio" && config.output.event_log.is_none() {
        bail!("controller.endpoint `stdio` needs output.event_log: stdout carries the commands");
    }
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed)).context("installing signal handler")?;
    }
    let traces = config
        .sources
        .iter()
        .filter(|s| s.source.kind == SourceKind::Trace)
        .count();
    if traces == config.sources.len() {
        return run_traces(&config, exit_when_drained, &stop);
    }
    if traces > 0 {
        bail!("trace sources cannot be mixed with live sources; use `replay` for recorded data");
    }
    run_live(&config, exit_when_drained, stop)
}

fn run_traces(config: &EngineConfig, exit_when_drained: bool, stop: &AtomicBool) -> Result<i32> {
    if config.controller != "dry-run" {
        log::warn!("trace sources run on the trace clock; controller commands are acknowledged as in dry-run");
    }
    let mut traces = Vec::new();
    for s in &config.sources {
        let Some(path) = s.endpoint.as_deref() else {
            bail!("source {}: trace sources need an endpoint", s.source.id);
        };
        let path = path.strip_prefix("file://").unwrap_or(path);
        let file = File::open(path).with_context(|| format!("source {}: opening {path}", s.source.id))?;
        traces.push(Trace::new(s.source.id.clone(), BufReader::new(file)));
    }
    let mut sink = EventSink::open(config.output.event_log.as_deref())?;
    let (stats, engine) = replay_with(config, traces, ReplayMode::Instant, &mut |e| sink.write(e))?;
    sink.finish()?;
    output::write_timeline(config, engine.timeline(), None, None, None)?;
    eprint!("{}", summarize(&engine, &stats));
    while !exit_when_drained && !stop.load(Ordering::Relaxed) {
        std::thread::sleep(Duration::from_millis(200));
    }
    Ok(exit_code(&engine))
}

fn exit_code(engine: &Engine) -> i32 {
    if engine.alerts().next().is_some() {
        2
    } else {
        0
    }
}

struct Live {
    engine: Engine,
    controller: Box<dyn Controller>,
    sink: EventSink,
}

impl Live {
    fn emit(&mut self, events: Vec<EngineEvent>) {
        for e in &events {
            self.sink.write(e);
        }
    }

    fn dispatch(&mut self) {
        loop {
            let outbox = self.engine.take_outbox();
            if outbox.is_empty() {
                return;
            }
            for (t, command) in outbox {
                if let Some(reply) = self.controller.send(&command) {
                    let events = self.engine.on_reply(&reply, t);
                    self.emit(events);
                }
            }
        }
    }

    fn awaiting_controller(&self) -> bool {
        self.engine.plans().any(|p| p.status == PlanStatus::Commanded)
    }

    fn advance(&mut self, now: f64) {
        let events = self.engine.advance_to(now);
        self.emit(events);
        self.dispatch();
    }
}

fn run_live(config: &EngineConfig, exit_when_drained: bool, stop: Arc<AtomicBool>) -> Result<i32> {
    let (tx, rx) = mpsc::channel();
    let clock = SystemClock;
    let mut live = Live {
        engine: Engine::new(config.clone()),
        controller: controller::open(&config.controller, tx.clone()),
        sink: EventSink::open(config.output.event_log.as_deref())?,
    };
    let shared = Arc::new(Shared {
        tx,
        stop: stop.clone(),
        exit_when_drained,
    });
    let _producers = sources::spawn(&config.sources, shared)?;
    let mut active = config.sources.len();
    let mut violations = 0u64;

    while !stop.load(Ordering::Relaxed) {
        let now = clock.now();
        let timeout = live
            .engine
            .next_wakeup()
            .map(|w| Duration::from_secs_f64((w - now).max(0.0)).min(IDLE_TICK))
            .unwrap_or(IDLE_TICK);
        match rx.recv_timeout(timeout) {
            Ok(Msg::Observations(batch)) => {
                for obs in batch {
                    live.advance(obs.received_at);
                    let events = live.engine.ingest(&obs);
                    live.emit(events);
                    live.dispatch();
                }
            }
            Ok(Msg::Violation(source, message)) => {
                violations += 1;
                log::warn!("{source}: skipping message: {message}");
            }
            Ok(Msg::Reply(reply)) => {
                let now = clock.now();
                live.advance(now);
                let events = live.engine.on_reply(&reply, now);
                live.emit(events);
                live.dispatch();
            }
            Ok(Msg::Drained(source)) => {
                log::info!("{source}: drained");
                active -= 1;
            }
            Err(RecvTimeoutError::Timeout) => live.advance(clock.now()),
            Err(RecvTimeoutError::Disconnected) => break,
        }
        if active == 0 && exit_when_drained && !live.awaiting_controller() {
            live.advance(clock.now());
            break;
        }
    }

    let Live { engine, sink, .. } = live;
    sink.finish()?;
    output::write_timeline(config, engine.timeline(), None, None, None)?;
    if violations > 0 {
        log::warn!("{violations} malformed message(s) skipped");
    }
    Ok(exit_code(&engine))
}
