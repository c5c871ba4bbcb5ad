//! `hijackguard`: detect prefix hijacks and mitigate them by de-aggregation.
//!
//! Exit codes: 0 when no hijack was detected, 2 when one was, 1 on error.

mod controller;
mod output;
mod overrides;
mod report;
mod run;
mod sources;

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hijackguard_core::config::EngineConfig;
use hijackguard_core::feed::SourceId;
use hijackguard_core::replay::{replay_with, summarize, ReplayMode, Trace};
use hijackguard_sim::scenario::{run_scenario, Outcome, Scenario};

#[derive(Parser)]
#[command(
    name = "hijackguard",
    version,
    about = "Self-hosted BGP prefix-hijack detection and mitigation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the live pipeline until interrupted.
    Run {
        config: PathBuf,
        /// Exit once every source has reached its end.
        #[arg(long)]
        exit_when_drained: bool,
    },
    /// Replay recorded traces through a fresh engine.
    Replay {
        config: PathBuf,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[command(flatten)]
        pace: Pace,
        /// Event log destination; defaults to the configured one, then stdout.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run a simulated hijack scenario.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Event log destination; not written unless given here or in the engine config.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        timeline: Option<PathBuf>,
        #[arg(long)]
        geojson: Option<PathBuf>,
        /// `vantage_point latitude longitude` rows; simulated vantage points are named `AS<n>`.
        #[arg(long)]
        geo_table: Option<PathBuf>,
    },
    /// Summarize an event log.
    Report { log: PathBuf },
}

#[derive(Args)]
#[group(multiple = false)]
struct Pace {
    /// Sleep between messages according to their timestamps.
    #[arg(long)]
    paced: bool,
    /// Process messages as fast as possible (default).
    #[arg(long)]
    instant: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Run {
            config,
            exit_when_drained,
        } => {
            let config = load_config(&config)?;
            run::run(config, exit_when_drained)
        }
        Cmd::Replay {
            config,
            traces,
            pace,
            log,
        } => {
            let config = load_config(&config)?;
            let mode = if pace.paced {
                ReplayMode::Paced
            } else {
                ReplayMode::Instant
            };
            replay(&config, &traces, mode, log)
        }
        Cmd::Simulate {
            scenario,
            seed,
            log,
            timeline,
            geojson,
            geo_table,
        } => simulate(scenario, seed, log, timeline, geojson, geo_table),
        Cmd::Report { log } => {
            let text = std::fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let table = report::build(&text)?;
            print!("{}", table.render());
            Ok(0)
        }
    }
}

fn load_config(path: &Path) -> Result<EngineConfig> {
    let config = EngineConfig::load(path).with_context(|| format!("invalid config {}", path.display()))?;
    overrides::apply(config, |k| std::env::var(k).ok())
}

fn trace_id(path: &Path) -> SourceId {
    SourceId::new(
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".into()),
    )
}

fn replay(config: &EngineConfig, paths: &[PathBuf], mode: ReplayMode, log: Option<PathBuf>) -> Result<i32> {
    let mut traces = Vec::new();
    for path in paths {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        traces.push(Trace::new(trace_id(path), BufReader::new(file)));
    }
    let mut sink = output::EventSink::open(log.as_deref().or(config.output.event_log.as_deref()))?;
    let (stats, engine) = replay_with(config, traces, mode, &mut |e| sink.write(e))?;
    sink.finish()?;
    output::write_timeline(config, engine.timeline(), None, None, None)?;
    eprint!("{}", summarize(&engine, &stats));
    Ok(if engine.alerts().next().is_some() { 2 } else { 0 })
}

fn simulate(
    path: PathBuf,
    seed: u64,
    log: Option<PathBuf>,
    timeline: Option<PathBuf>,
    geojson: Option<PathBuf>,
    geo_table: Option<PathBuf>,
) -> Result<i32> {
    let scenario = Scenario::load(&path).with_context(|| format!("loading scenario {}", path.display()))?;
    let run = run_scenario(&scenario, seed)?;
    if let Some(path) = log.as_deref().or(scenario.engine.output.event_log.as_deref()) {
        let mut sink = output::EventSink::open(Some(path))?;
        for event in &run.events {
            sink.write(event);
        }
        sink.finish()?;
    }
    output::write_timeline(&scenario.engine, &run.timeline, timeline, geojson, geo_table)?;

    let r = &run.result;
    let mut out = io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string(r)?)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    let verdict = match r.outcome {
        Outcome::Mitigated => "mitigated",
        Outcome::Unmitigable => "unmitigable: the hijacked prefix cannot be de-aggregated",
        Outcome::NotDetected => "not detected: no monitor saw the hijack",
        Outcome::Unresolved => "unresolved",
        Outcome::Failed => "mitigation failed",
    };
    eprintln!(
        "{}: {verdict}; t_detect {} s, t_command {} s, t_complete {} s, total {} s",
        scenario.name,
        fmt(r.t_detect),
        fmt(r.t_command),
        fmt(r.t_complete),
        fmt(r.total)
    );
    Ok(if r.t_detect.is_some() { 2 } else { 0 })
}
