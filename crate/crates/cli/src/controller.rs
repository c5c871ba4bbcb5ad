//! Controller side of the command protocol.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::mpsc::Sender;
use std::thread;

use hijackguard_core::mitigation::{Command, Reply};

use crate::run::Msg;

pub trait Controller {
    /// Sends one command. A controller that answers synchronously returns
    /// the reply; others deliver it later as [`Msg::Reply`].
    fn send(&mut self, command: &Command) -> Option<Reply>;
}

/// Acknowledges every command without telling anyone.
pub struct DryRun;

impl Controller for DryRun {
    fn send(&mut self, command: &Command) -> Option<Reply> {
        log::info!("dry-run: {command}");
        Some(Reply::ok(command))
    }
}

fn forward_replies(reader: impl BufRead + Send + 'static, tx: Sender<Msg>) {
    thread::spawn(move || {
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            match line.trim_end().parse::<Reply>() {
                Ok(reply) => {
                    if tx.send(Msg::Reply(reply)).is_err() {
                        break;
                    }
                }
                Err(e) => log::warn!("controller: ignoring `{}`: {}", e.line, e.reason),
            }
        }
        log::warn!("controller: reply channel closed");
    });
}

/// Commands on stdout, replies on stdin.
pub struct Stdio;

impl Stdio {
    pub fn new(tx: Sender<Msg>) -> Self {
        forward_replies(BufReader::new(io::stdin()), tx);
        Stdio
    }
}

impl Controller for Stdio {
    fn send(&mut self, command: &Command) -> Option<Reply> {
        let mut out = io::stdout().lock();
        if let Err(e) = writeln!(out, "{command}").and_then(|_| out.flush()) {
            log::error!("controller: {e}");
        }
        None
    }
}

/// One line-oriented connection, re-established on the next command after a
/// failure. Commands that cannot be written are left to the retry policy.
pub struct Tcp {
    addr: String,
    conn: Option<TcpStream>,
    tx: Sender<Msg>,
}

impl Tcp {
    pub fn new(addr: &str, tx: Sender<Msg>) -> Self {
        Tcp {
            addr: addr.to_string(),
            conn: None,
            tx,
        }
    }

    fn connect(&mut self) -> io::Result<&mut TcpStream> {
        if self.conn.is_none() {
            let stream = TcpStream::connect(&self.addr)?;
            forward_replies(BufReader::new(stream.try_clone()?), self.tx.clone());
            self.conn = Some(stream);
        }
        Ok(self.conn.as_mut().expect("just connected"))
    }
}

impl Controller for Tcp {
    fn send(&mut self, command: &Command) -> Option<Reply> {
        let res = self
            .connect()
            .and_then(|s| writeln!(s, "{command}").and_then(|_| s.flush()));
        if let Err(e) = res {
            log::warn!("controller {}: {e}", self.addr);
            self.conn = None;
        }
        None
    }
}

pub fn open(endpoint: &str, tx: Sender<Msg>) -> Box<dyn Controller> {
    match endpoint {
        "stdio" => Box::new(Stdio::new(tx)),
        e => match e.strip_prefix("tcp://") {
            Some(addr) => Box::new(Tcp::new(addr, tx)),
            None => Box::new(DryRun),
        },
    }
}
