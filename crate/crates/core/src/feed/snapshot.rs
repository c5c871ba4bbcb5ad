//! Looking-glass style route-table snapshots and their diff into updates.
//!
//! Text format, one row per selected route:
//!
//! ```text
//! # vantage_point prefix as_path...
//! lg-ams-1 10.0.0.0/23 3333 1299 65001
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{RouteObservation, RouteUpdate, SourceId};
use crate::clock::Timestamp;
use crate::prefix::{AsPath, IpPrefix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("snapshot line {line}: {message}")]
pub struct SnapshotError {
    pub line: usize,
    pub message: String,
}

/// `(vantage point, prefix) -> selected path`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteTable {
    routes: BTreeMap<(String, IpPrefix), AsPath>,
}

impl RouteTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, vantage_point: impl Into<String>, prefix: IpPrefix, path: AsPath) {
        self.routes.insert((vantage_point.into(), prefix), path);
    }

    pub fn remove(&mut self, vantage_point: &str, prefix: IpPrefix) -> Option<AsPath> {
        self.routes.remove(&(vantage_point.to_string(), prefix))
    }

    pub fn get(&self, vantage_point: &str, prefix: IpPrefix) -> Option<&AsPath> {
        self.routes.get(&(vantage_point.to_string(), prefix))
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, IpPrefix, &AsPath)> {
        self.routes
            .iter()
            .map(|((vp, prefix), path)| (vp.as_str(), *prefix, path))
    }

    /// Applies one observation: announcements upsert, withdrawals remove.
    pub fn apply(&mut self, observation: &RouteObservation) {
        match &observation.update {
            RouteUpdate::Announce(path) => {
                self.insert(observation.vantage_point.clone(), observation.prefix, path.clone())
            }
            RouteUpdate::Withdraw => {
                self.remove(&observation.vantage_point, observation.prefix);
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, SnapshotError> {
        let mut table = RouteTable::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| SnapshotError { line, message };
            let mut fields = content.split_whitespace();
            let vp = fields.next().expect("non-empty line has a field");
            let prefix: IpPrefix = fields
                .next()
                .ok_or_else(|| err("missing prefix".into()))?
                .parse()
                .map_err(|e| err(format!("{e}")))?;
            let rest: Vec<&str> = fields.collect();
            if rest.is_empty() {
                return Err(err("missing AS path".into()));
            }
            let path: AsPath = rest.join(" ").parse().map_err(|e| err(format!("{e}")))?;
            if table.get(vp, prefix).is_some() {
                return Err(err(format!("duplicate row for {vp} {prefix}")));
            }
            table.insert(vp, prefix, path);
        }
        Ok(table)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (vp, prefix, path) in self.iter() {
            let _ = writeln!(out, "{vp} {prefix} {path}");
        }
        out
    }
}

/// Turns two consecutive snapshots of a poll source into updates: an
/// announcement for every added or changed row, a withdrawal for every
/// removed row. Both timestamps are the poll time `at`.
pub fn diff_snapshots(
    previous: &RouteTable,
    current: &RouteTable,
    source: &SourceId,
    at: Timestamp,
) -> Vec<RouteObservation> {
    let mut out = Vec::new();
    for ((vp, prefix), path) in &current.routes {
        if previous.routes.get(&(vp.clone(), *prefix)) != Some(path) {
            out.push(RouteObservation::announce(
                source.clone(),
                vp.clone(),
                *prefix,
                path.clone(),
                at,
                at,
            ));
        }
    }
    for (vp, prefix) in previous.routes.keys() {
        if !current.routes.contains_key(&(vp.clone(), *prefix)) {
            out.push(RouteObservation::withdraw(source.clone(), vp.clone(), *prefix, at, at));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefix::Asn;
    use proptest::prelude::*;

    fn path(s: &str) -> AsPath {
        s.parse().unwrap()
    }

    fn p(s: &str) -> IpPrefix {
        s.parse().unwrap()
    }

    #[test]
    fn identical_snapshots_emit_nothing() {
        let table = RouteTable::parse("vp1 10.0.0.0/23 3333 65001\nvp2 10.0.0.0/23 1299 65001\n").unwrap();
        assert!(diff_snapshots(&table, &table, &SourceId::new("lg"), 5.0).is_empty());
    }

    #[test]
    fn changed_origin_becomes_announcement() {
        let mut before = RouteTable::new();
        before.insert("vp1", p("10.0.0.0/23"), path("3333 65001"));
        let mut after = RouteTable::new();
        after.insert("vp1", p("10.0.0.0/23"), path("3333 65002"));
        let obs = diff_snapshots(&before, &after, &SourceId::new("lg"), 5.0);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].origin(), Some(Asn(65002)));
    }

    #[test]
    fn removed_row_becomes_withdrawal() {
        let mut before = RouteTable::new();
        before.insert("vp1", p("10.0.0.0/23"), path("3333 65001"));
        let obs = diff_snapshots(&before, &RouteTable::new(), &SourceId::new("lg"), 5.0);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].update, RouteUpdate::Withdraw);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = RouteTable::parse("# header\nvp1 10.0.0.0/23 1 2\nvp2 10.0.0.1/23 1 2\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert_eq!(RouteTable::parse("vp1 10.0.0.0/23\n").unwrap_err().line, 1);
        assert!(RouteTable::parse("vp1 10.0.0.0/23 1\nvp1 10.0.0.0/23 2\n").is_err());
    }

    fn arb_table() -> impl Strategy<Value = RouteTable> {
        let vps = prop::sample::select(vec!["a", "b", "c"]);
        let prefixes = prop::sample::select(vec!["10.0.0.0/23", "10.0.0.0/24", "10.0.1.0/24"]);
        let origins = prop::sample::select(vec![65001u32, 65002, 65003]);
        prop::collection::vec((vps, prefixes, origins), 0..8).prop_map(|rows| {
            let mut t = RouteTable::new();
            for (vp, prefix, origin) in rows {
                t.insert(vp, p(prefix), AsPath::new(vec![Asn(3333), Asn(origin)]).unwrap());
            }
            t
        })
    }

    proptest! {
        #[test]
        fn applying_the_diff_reproduces_current(a in arb_table(), b in arb_table()) {
            let diff = diff_snapshots(&a, &b, &SourceId::new("lg"), 1.0);
            let mut replayed = a.clone();
            for obs in &diff {
                replayed.apply(obs);
            }
            prop_assert_eq!(&replayed, &b);

            // set-difference oracle on the keys
            let removed = a.iter().filter(|(vp, pf, _)| b.get(vp, *pf).is_none()).count();
            let withdrawals = diff.iter().filter(|o| !o.is_announcement()).count();
            prop_assert_eq!(withdrawals, removed);
        }

        #[test]
        fn render_then_parse(t in arb_table()) {
            prop_assert_eq!(RouteTable::parse(&t.render()).unwrap(), t);
        }
    }
}
