//! Route observations from monitor sources and the merged observation stream.
//!
//! Three kinds of source feed the engine: live streams (RIS Live style JSON
//! messages), polled looking-glass snapshots that are diffed into synthetic
//! updates, and recorded traces replayed from disk. All of them produce
//! [`RouteObservation`]s which are merged into one time-ordered,
//! deduplicated [`ObservationStream`].

mod merge;
mod snapshot;
mod stream;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::prefix::{AsPath, Asn, IpPrefix};

pub use merge::{merge, ObservationStream, ReorderBuffer};
pub use snapshot::{diff_snapshots, RouteTable, SnapshotError};
pub use stream::{parse_stream_message, StreamError};

/// Name of a configured monitor source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(pub String);

impl SourceId {
    pub fn new(id: impl Into<String>) -> Self {
        SourceId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Stream,
    Poll,
    Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSource {
    pub id: SourceId,
    pub kind: SourceKind,
    /// Expected observation latency in seconds.
    pub nominal_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RouteUpdate {
    Announce(AsPath),
    Withdraw,
}

/// One announcement or withdrawal seen by one vantage point via one source.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteObservation {
    pub source: SourceId,
    pub vantage_point: String,
    pub prefix: IpPrefix,
    pub update: RouteUpdate,
    /// Monitor-assigned time of the update.
    pub timestamp: Timestamp,
    /// Local arrival time, assigned at ingest.
    pub received_at: Timestamp,
}

/// Identity used for deduplication: everything except the arrival time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DedupKey {
    source: SourceId,
    vantage_point: String,
    prefix: IpPrefix,
    update: RouteUpdate,
    timestamp_bits: u64,
}

impl RouteObservation {
    pub fn announce(
        source: SourceId,
        vantage_point: impl Into<String>,
        prefix: IpPrefix,
        path: AsPath,
        timestamp: Timestamp,
        received_at: Timestamp,
    ) -> Self {
        RouteObservation {
            source,
            vantage_point: vantage_point.into(),
            prefix,
            update: RouteUpdate::Announce(path),
            timestamp,
            received_at,
        }
    }

    pub fn withdraw(
        source: SourceId,
        vantage_point: impl Into<String>,
        prefix: IpPrefix,
        timestamp: Timestamp,
        received_at: Timestamp,
    ) -> Self {
        RouteObservation {
            source,
            vantage_point: vantage_point.into(),
            prefix,
            update: RouteUpdate::Withdraw,
            timestamp,
            received_at,
        }
    }

    pub fn path(&self) -> Option<&AsPath> {
        match &self.update {
            RouteUpdate::Announce(path) => Some(path),
            RouteUpdate::Withdraw => None,
        }
    }

    pub fn origin(&self) -> Option<Asn> {
        self.path().map(AsPath::origin)
    }

    pub fn is_announcement(&self) -> bool {
        matches!(self.update, RouteUpdate::Announce(_))
    }

    pub fn dedup_key(&self) -> DedupKey {
        DedupKey {
            source: self.source.clone(),
            vantage_point: self.vantage_point.clone(),
            prefix: self.prefix,
            update: self.update.clone(),
            // +0.0 and -0.0 are the same instant
            timestamp_bits: (self.timestamp + 0.0).to_bits(),
        }
    }

    /// Merged-stream order: arrival time, then (source, vantage point, prefix).
    pub fn stream_order(&self, other: &Self) -> Ordering {
        self.received_at
            .total_cmp(&other.received_at)
            .then_with(|| self.source.cmp(&other.source))
            .then_with(|| self.vantage_point.cmp(&other.vantage_point))
            .then_with(|| self.prefix.cmp(&other.prefix))
    }
}
