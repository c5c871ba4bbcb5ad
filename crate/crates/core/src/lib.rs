//! Prefix hijack detection and de-aggregation mitigation.
//!
//! Route observations from several monitor sources are merged into one
//! stream, classified against the owned prefixes, and turned into alerts.
//! Each alert gets a mitigation plan that is pushed to a BGP controller,
//! and per-vantage-point views track when the owned space is back under
//! legitimate origins.

pub mod clock;
pub mod config;
pub mod detection;
pub mod engine;
pub mod events;
pub mod feed;
pub mod mitigation;
pub mod monitor;
pub mod prefix;
pub mod replay;

pub use clock::{Clock, ManualClock, SystemClock, Timestamp};
pub use prefix::{AsPath, Asn, IpPrefix};
