//! Live source producers. Each source runs on its own thread and hands
//! observations to the pipeline through one channel.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use hijackguard_core::clock::{Clock, SystemClock};
use hijackguard_core::config::SourceConfig;
use hijackguard_core::feed::{diff_snapshots, parse_stream_message, RouteTable, SourceId, StreamError};

use crate::run::Msg;

const MAX_BACKOFF: Duration = Duration::from_secs(60);

pub struct Shared {
    pub tx: Sender<Msg>,
    pub stop: Arc<AtomicBool>,
    /// Finite inputs end the source instead of being reopened.
    pub exit_when_drained: bool,
}

impl Shared {
    fn stopped(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }

    fn sleep(&self, total: Duration) {
        let step = Duration::from_millis(100);
        let mut left = total;
        while !left.is_zero() && !self.stopped() {
            let d = left.min(step);
            thread::sleep(d);
            left -= d;
        }
    }
}

fn open_lines(endpoint: &str) -> Result<Box<dyn BufRead + Send>> {
    if let Some(addr) = endpoint.strip_prefix("tcp://") {
        let stream = TcpStream::connect(addr).with_context(|| format!("connecting to {addr}"))?;
        Ok(Box::new(BufReader::new(stream)))
    } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        let resp = reqwest::blocking::Client::builder()
            .timeout(None)
            .build()?
            .get(endpoint)
            .send()?
            .error_for_status()?;
        Ok(Box::new(BufReader::new(resp)))
    } else {
        let path = endpoint.strip_prefix("file://").unwrap_or(endpoint);
        let file = File::open(path).with_context(|| format!("opening {path}"))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn is_file(endpoint: &str) -> bool {
    !(endpoint.starts_with("tcp://") || endpoint.starts_with("http://") || endpoint.starts_with("https://"))
}

fn fetch(endpoint: &str) -> Result<String> {
    let mut text = String::new();
    open_lines(endpoint)?.read_to_string(&mut text)?;
    Ok(text)
}

/// Reads stream messages until the input ends; network inputs are reopened
/// with exponential backoff unless draining.
fn stream(id: SourceId, endpoint: String, shared: &Shared) {
    let clock = SystemClock;
    let mut backoff = Duration::from_secs(1);
    while !shared.stopped() {
        match open_lines(&endpoint) {
            Ok(reader) => {
                backoff = Duration::from_secs(1);
                for line in reader.lines() {
                    if shared.stopped() {
                        return;
                    }
                    let line = match line {
                        Ok(l) => l,
                        Err(e) => {
                            log::warn!("{id}: read failed: {e}");
                            break;
                        }
                    };
                    if line.trim().is_empty() {
                        continue;
                    }
                    let msg = match parse_stream_message(&line, &id, clock.now()) {
                        Ok(obs) => Msg::Observations(obs),
                        Err(StreamError::EmptyUpdate) => continue,
                        Err(e) => Msg::Violation(id.clone(), e.to_string()),
                    };
                    if shared.tx.send(msg).is_err() {
                        return;
                    }
                }
                if shared.exit_when_drained || is_file(&endpoint) {
                    return;
                }
                log::warn!("{id}: stream ended, reconnecting");
            }
            Err(e) => {
                log::warn!("{id}: source unreachable: {e:#}; retrying in {backoff:?}");
                if is_file(&endpoint) && shared.exit_when_drained {
                    return;
                }
            }
        }
        shared.sleep(backoff);
        backoff = (backoff * 2).min(MAX_BACKOFF);
    }
}

/// Polls a snapshot table and forwards the differences.
fn poll(id: SourceId, endpoint: String, interval: Duration, shared: &Shared) {
    let clock = SystemClock;
    let mut previous = RouteTable::new();
    while !shared.stopped() {
        match fetch(&endpoint).and_then(|text| RouteTable::parse(&text).map_err(|e| anyhow!("{e}"))) {
            Ok(current) => {
                let obs = diff_snapshots(&previous, &current, &id, clock.now());
                previous = current;
                if !obs.is_empty() && shared.tx.send(Msg::Observations(obs)).is_err() {
                    return;
                }
            }
            Err(e) => log::warn!("{id}: poll failed: {e:#}"),
        }
        if shared.exit_when_drained && is_file(&endpoint) {
            return;
        }
        shared.sleep(interval);
    }
}

/// Starts one producer thread per source; each sends [`Msg::Drained`] when
/// it ends.
pub fn spawn(sources: &[SourceConfig], shared: Arc<Shared>) -> Result<Vec<JoinHandle<()>>> {
    let mut handles = Vec::new();
    for cfg in sources {
        let id = cfg.source.id.clone();
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| anyhow!("source {id}: no endpoint"))?;
        let interval = Duration::from_secs_f64(cfg.poll_interval);
        let kind = cfg.source.kind;
        let shared = shared.clone();
        handles.push(thread::Builder::new().name(format!("source-{id}")).spawn(move || {
            use hijackguard_core::feed::SourceKind;
            match kind {
                SourceKind::Poll => poll(id.clone(), endpoint, interval, &shared),
                _ => stream(id.clone(), endpoint, &shared),
            }
            let _ = shared.tx.send(Msg::Drained(id));
        })?);
    }
    Ok(handles)
}
