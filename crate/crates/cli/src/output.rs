//! Event log, timeline and GeoJSON files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hijackguard_core::config::EngineConfig;
use hijackguard_core::events::EngineEvent;
use hijackguard_core::monitor::{export_timeline, GeoTable, TimelineRecord};

/// Newline-delimited event log, flushed per event so a tailing reader sees
/// every record as soon as it exists.
pub struct EventSink {
    out: Box<dyn Write>,
    error: Option<io::Error>,
}

impl EventSink {
    /// `None` writes to stdout.
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(io::stdout()),
        };
        Ok(EventSink { out, error: None })
    }

    pub fn write(&mut self, event: &EngineEvent) {
        if self.error.is_some() {
            return;
        }
        let res = writeln!(self.out, "{}", event.to_line()).and_then(|_| self.out.flush());
        if let Err(e) = res {
            self.error = Some(e);
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e).context("writing event log");
        }
        self.out.flush().context("writing event log")
    }
}

/// Writes the timeline and GeoJSON where requested; explicit paths win over
/// the config's.
pub fn write_timeline(
    config: &EngineConfig,
    records: &[TimelineRecord],
    timeline: Option<PathBuf>,
    geojson: Option<PathBuf>,
    geo_table: Option<PathBuf>,
) -> Result<()> {
    let timeline = timeline.or_else(|| config.output.timeline.clone());
    let geojson = geojson.or_else(|| config.output.geojson.clone());
    let geo_table = geo_table.or_else(|| config.output.geo_table.clone());
    if timeline.is_none() && geojson.is_none() {
        return Ok(());
    }
    let geo = match (&geojson, &geo_table) {
        (Some(_), Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(GeoTable::parse(&text).with_context(|| format!("geo table {}", path.display()))?)
        }
        (Some(_), None) => anyhow::bail!("GeoJSON output needs a geo table"),
        _ => None,
    };
    let export = export_timeline(records, geo.as_ref());
    if let Some(path) = timeline {
        std::fs::write(&path, &export.ndjson).with_context(|| format!("writing {}", path.display()))?;
    }
    if let (Some(path), Some(doc)) = (geojson, &export.geojson) {
        std::fs::write(&path, serde_json::to_string_pretty(doc)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if !export.unknown_vantage_points.is_empty() {
        log::warn!(
            "no coordinates for {} vantage point(s): {}",
            export.unknown_vantage_points.len(),
            export
                .unknown_vantage_points
                .iter()
                .cloned()
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(())
}
