//! Hijack detection against the operator's own prefixes.
//!
//! Each announcement from the merged stream is classified against the owned
//! prefixes. An announcement whose origin is not a configured legitimate
//! origin for the most specific owned prefix covering it raises an alert, or
//! adds evidence to the open alert for the same (owned prefix, offending
//! origin, kind).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::feed::{DedupKey, RouteObservation};
use crate::prefix::{Asn, IpPrefix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("owned prefix {0} has no legitimate origin")]
    NoLegitimateOrigin(IpPrefix),
    #[error("owned prefix {0} lists AS 0 as an origin")]
    ZeroOrigin(IpPrefix),
    #[error("owned prefixes {0} and {1} overlap")]
    Overlapping(IpPrefix, IpPrefix),
    #[error("hijack start unknown; latency only defined in replay and simulation")]
    UnknownStart,
    #[error("no alert with id {0}")]
    UnknownAlert(AlertId),
    #[error("alert {id}: illegal transition {from} -> {to}")]
    IllegalTransition {
        id: AlertId,
        from: AlertState,
        to: AlertState,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnedPrefix {
    pub prefix: IpPrefix,
    pub legitimate_origins: BTreeSet<Asn>,
    pub mitigation_enabled: bool,
}

impl OwnedPrefix {
    pub fn new(prefix: IpPrefix, origins: impl IntoIterator<Item = Asn>) -> Self {
        OwnedPrefix {
            prefix,
            legitimate_origins: origins.into_iter().collect(),
            mitigation_enabled: true,
        }
    }

    pub fn is_legitimate(&self, origin: Asn) -> bool {
        self.legitimate_origins.contains(&origin)
    }

    /// Lowest configured origin; used when announcing on the owner's behalf.
    pub fn primary_origin(&self) -> Asn {
        *self.legitimate_origins.iter().next().expect("validated non-empty")
    }
}

/// Validated set of owned prefixes: pairwise non-overlapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OwnedPrefixes(Vec<OwnedPrefix>);

impl OwnedPrefixes {
    pub fn new(entries: Vec<OwnedPrefix>) -> Result<Self, DetectionError> {
        for (i, a) in entries.iter().enumerate() {
            if a.legitimate_origins.is_empty() {
                return Err(DetectionError::NoLegitimateOrigin(a.prefix));
            }
            if a.legitimate_origins.contains(&Asn(0)) {
                return Err(DetectionError::ZeroOrigin(a.prefix));
            }
            if let Some(b) = entries[..i].iter().find(|b| b.prefix.overlaps(&a.prefix)) {
                return Err(DetectionError::Overlapping(b.prefix, a.prefix));
            }
        }
        Ok(OwnedPrefixes(entries))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, OwnedPrefix> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The owned prefix equal to or containing `prefix`. Owned prefixes do
    /// not overlap, so it is also the most specific one.
    pub fn covering(&self, prefix: &IpPrefix) -> Option<&OwnedPrefix> {
        self.0
            .iter()
            .filter(|o| o.prefix.contains(prefix))
            .max_by_key(|o| o.prefix.len())
    }

    pub fn get(&self, prefix: &IpPrefix) -> Option<&OwnedPrefix> {
        self.0.iter().find(|o| o.prefix == *prefix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HijackKind {
    ExactOrigin,
    SubprefixOrigin,
}

impl fmt::Display for HijackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HijackKind::ExactOrigin => "exact-origin",
            HijackKind::SubprefixOrigin => "subprefix-origin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification<'c> {
    Legitimate(&'c OwnedPrefix),
    ExactOriginHijack(&'c OwnedPrefix),
    SubprefixOriginHijack(&'c OwnedPrefix),
    Unrelated,
}

impl Classification<'_> {
    pub fn hijack_kind(&self) -> Option<HijackKind> {
        match self {
            Classification::ExactOriginHijack(_) => Some(HijackKind::ExactOrigin),
            Classification::SubprefixOriginHijack(_) => Some(HijackKind::SubprefixOrigin),
            _ => None,
        }
    }
}

/// Classifies an announcement. Withdrawals are always `Unrelated`.
pub fn classify<'c>(observation: &RouteObservation, config: &'c OwnedPrefixes) -> Classification<'c> {
    let Some(origin) = observation.origin() else {
        return Classification::Unrelated;
    };
    let Some(owned) = config.covering(&observation.prefix) else {
        return Classification::Unrelated;
    };
    if owned.is_legitimate(origin) {
        Classification::Legitimate(owned)
    } else if owned.prefix == observation.prefix {
        Classification::ExactOriginHijack(owned)
    } else {
        Classification::SubprefixOriginHijack(owned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlertId(pub u64);

impl fmt::Display for AlertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AlertState {
    New,
    Mitigating,
    Resolved,
}

impl fmt::Display for AlertState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlertState::New => "NEW",
            AlertState::Mitigating => "MITIGATING",
            AlertState::Resolved => "RESOLVED",
        })
    }
}

impl AlertState {
    fn can_become(self, to: AlertState) -> bool {
        matches!(
            (self, to),
            (AlertState::New, AlertState::Mitigating)
                | (AlertState::New, AlertState::Resolved)
                | (AlertState::Mitigating, AlertState::Resolved)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HijackAlert {
    pub id: AlertId,
    pub owned: OwnedPrefix,
    pub offending_origin: Asn,
    pub observed_prefix: IpPrefix,
    pub kind: HijackKind,
    pub state: AlertState,
    pub first_seen: Timestamp,
    pub detected_at: Timestamp,
    pub resolved_at: Option<Timestamp>,
    pub evidence: Vec<RouteObservation>,
    evidence_keys: HashSet<DedupKey>,
}

impl HijackAlert {
    pub fn key(&self) -> AlertKey {
        AlertKey {
            owned: self.owned.prefix,
            origin: self.offending_origin,
            kind: self.kind,
        }
    }

    pub fn record(&self) -> AlertRecord {
        AlertRecord {
            alert_id: self.id,
            prefix: self.owned.prefix,
            observed_prefix: self.observed_prefix,
            offending_origin: self.offending_origin,
            kind: self.kind,
            state: self.state,
            first_seen: self.first_seen,
            detected_at: self.detected_at,
            at: None,
        }
    }

    fn add_evidence(&mut self, obs: &RouteObservation) -> bool {
        if !self.evidence_keys.insert(obs.dedup_key()) {
            return false;
        }
        self.first_seen = self.first_seen.min(obs.timestamp);
        self.evidence.push(obs.clone());
        true
    }
}

/// One open alert per key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AlertKey {
    pub owned: IpPrefix,
    pub origin: Asn,
    pub kind: HijackKind,
}

/// Alert as written to the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub alert_id: AlertId,
    pub prefix: IpPrefix,
    pub observed_prefix: IpPrefix,
    pub offending_origin: Asn,
    pub kind: HijackKind,
    pub state: AlertState,
    pub first_seen: Timestamp,
    pub detected_at: Timestamp,
    /// Time of the state change, for `alert_state` records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlertEvent {
    Raised(AlertRecord),
    StateChanged(AlertRecord),
}

/// Alerts plus the bookkeeping needed to suppress duplicates.
#[derive(Debug, Clone)]
pub struct AlertStore {
    alerts: BTreeMap<AlertId, HijackAlert>,
    open: HashMap<AlertKey, AlertId>,
    // candidates still below the quorum
    pending: HashMap<AlertKey, HijackAlert>,
    next_id: u64,
    quorum: usize,
}

impl Default for AlertStore {
    fn default() -> Self {
        AlertStore::new(1)
    }
}

impl AlertStore {
    /// `quorum` is the number of distinct (source, vantage point) pairs that
    /// must report a hijack before the alert is raised.
    pub fn new(quorum: usize) -> Self {
        AlertStore {
            alerts: BTreeMap::new(),
            open: HashMap::new(),
            pending: HashMap::new(),
            next_id: 1,
            quorum: quorum.max(1),
        }
    }

    pub fn get(&self, id: AlertId) -> Option<&HijackAlert> {
        self.alerts.get(&id)
    }

    pub fn alerts(&self) -> impl Iterator<Item = &HijackAlert> {
        self.alerts.values()
    }

    pub fn open_alert(&self, key: &AlertKey) -> Option<&HijackAlert> {
        self.open.get(key).and_then(|id| self.alerts.get(id))
    }

    /// Point-in-time copy for concurrent readers.
    pub fn snapshot(&self) -> Vec<HijackAlert> {
        self.alerts.values().cloned().collect()
    }

    /// Feeds one observation from the merged stream.
    pub fn ingest(&mut self, observation: &RouteObservation, config: &OwnedPrefixes) -> Vec<AlertEvent> {
        let classification = classify(observation, config);
        let (owned, kind) = match classification {
            Classification::ExactOriginHijack(o) => (o, HijackKind::ExactOrigin),
            Classification::SubprefixOriginHijack(o) => (o, HijackKind::SubprefixOrigin),
            Classification::Legitimate(_) | Classification::Unrelated => return Vec::new(),
        };
        let origin = observation.origin().expect("hijack classification implies a path");
        let key = AlertKey {
            owned: owned.prefix,
            origin,
            kind,
        };

        if let Some(id) = self.open.get(&key) {
            let alert = self.alerts.get_mut(id).expect("open ids are stored");
            alert.add_evidence(observation);
            return Vec::new();
        }

        let candidate = self.pending.entry(key).or_insert_with(|| HijackAlert {
            id: AlertId(0),
            owned: owned.clone(),
            offending_origin: origin,
            observed_prefix: observation.prefix,
            kind,
            state: AlertState::New,
            first_seen: observation.timestamp,
            detected_at: observation.received_at,
            resolved_at: None,
            evidence: Vec::new(),
            evidence_keys: HashSet::new(),
        });
        candidate.add_evidence(observation);
        let reporters: HashSet<(&str, &str)> = candidate
            .evidence
            .iter()
            .map(|o| (o.source.as_str(), o.vantage_point.as_str()))
            .collect();
        if reporters.len() < self.quorum {
            return Vec::new();
        }

        let mut alert = self.pending.remove(&key).expect("candidate present");
        alert.id = AlertId(self.next_id);
        alert.detected_at = observation.received_at;
        self.next_id += 1;
        let record = alert.record();
        self.open.insert(key, alert.id);
        self.alerts.insert(alert.id, alert);
        vec![AlertEvent::Raised(record)]
    }

    pub fn transition(&mut self, id: AlertId, to: AlertState, at: Timestamp) -> Result<AlertEvent, DetectionError> {
        let alert = self.alerts.get_mut(&id).ok_or(DetectionError::UnknownAlert(id))?;
        if !alert.state.can_become(to) {
            return Err(DetectionError::IllegalTransition {
                id,
                from: alert.state,
                to,
            });
        }
        alert.state = to;
        if to == AlertState::Resolved {
            alert.resolved_at = Some(at);
            let key = alert.key();
            self.open.remove(&key);
        }
        let mut record = alert.record();
        record.at = Some(at);
        Ok(AlertEvent::StateChanged(record))
    }
}

/// Time from hijack start to alert.
pub fn detection_latency(alert: &HijackAlert, hijack_start: Option<Timestamp>) -> Result<f64, DetectionError> {
    hijack_start
        .map(|start| alert.detected_at - start)
        .ok_or(DetectionError::UnknownStart)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feed::SourceId;
    use crate::prefix::AsPath;

    fn p(s: &str) -> IpPrefix {
        s.parse().unwrap()
    }

    fn config() -> OwnedPrefixes {
        OwnedPrefixes::new(vec![OwnedPrefix::new(p("10.0.0.0/23"), [Asn(65001)])]).unwrap()
    }

    fn ann(vp: &str, prefix: &str, origin: u32, t: f64) -> RouteObservation {
        RouteObservation::announce(
            SourceId::new("ris"),
            vp,
            p(prefix),
            AsPath::new(vec![Asn(3333), Asn(origin)]).unwrap(),
            t,
            t,
        )
    }

    #[test]
    fn classify_examples() {
        let cfg = config();
        assert!(matches!(
            classify(&ann("a", "10.0.0.0/23", 65002, 0.0), &cfg),
            Classification::ExactOriginHijack(_)
        ));
        assert!(matches!(
            classify(&ann("a", "10.0.0.0/23", 65001, 0.0), &cfg),
            Classification::Legitimate(_)
        ));
        assert!(matches!(
            classify(&ann("a", "10.0.0.128/25", 65002, 0.0), &cfg),
            Classification::SubprefixOriginHijack(_)
        ));
        // less specific than the owned prefix is not ours to judge
        assert_eq!(
            classify(&ann("a", "10.0.0.0/22", 65002, 0.0), &cfg),
            Classification::Unrelated
        );
        assert_eq!(
            classify(&ann("a", "192.0.2.0/24", 65002, 0.0), &cfg),
            Classification::Unrelated
        );
        let withdraw = RouteObservation::withdraw(SourceId::new("ris"), "a", p("10.0.0.0/23"), 0.0, 0.0);
        assert_eq!(classify(&withdraw, &cfg), Classification::Unrelated);
    }

    #[test]
    fn own_deaggregated_announcements_are_legitimate() {
        let cfg = config();
        for sub in ["10.0.0.0/24", "10.0.1.0/24"] {
            assert!(matches!(
                classify(&ann("a", sub, 65001, 0.0), &cfg),
                Classification::Legitimate(_)
            ));
        }
    }

    #[test]
    fn overlapping_config_is_rejected() {
        let err = OwnedPrefixes::new(vec![
            OwnedPrefix::new(p("10.0.0.0/23"), [Asn(1)]),
            OwnedPrefix::new(p("10.0.1.0/24"), [Asn(1)]),
        ])
        .unwrap_err();
        assert_eq!(err, DetectionError::Overlapping(p("10.0.0.0/23"), p("10.0.1.0/24")));
        assert!(OwnedPrefixes::new(vec![OwnedPrefix::new(p("10.0.0.0/23"), [])]).is_err());
        assert!(OwnedPrefixes::new(vec![OwnedPrefix::new(p("10.0.0.0/23"), [Asn(0)])]).is_err());
    }

    #[test]
    fn first_observation_raises_later_ones_add_evidence() {
        let cfg = config();
        let mut store = AlertStore::default();
        let events = store.ingest(&ann("a", "10.0.0.0/23", 65002, 45.0), &cfg);
        assert_eq!(events.len(), 1);
        let AlertEvent::Raised(record) = &events[0] else {
            panic!()
        };
        assert_eq!(record.detected_at, 45.0);
        assert_eq!(record.kind, HijackKind::ExactOrigin);

        assert!(store.ingest(&ann("b", "10.0.0.0/23", 65002, 50.0), &cfg).is_empty());
        // exact duplicate is ignored
        assert!(store.ingest(&ann("b", "10.0.0.0/23", 65002, 50.0), &cfg).is_empty());
        let alert = store.get(record.alert_id).unwrap();
        assert_eq!(alert.evidence.len(), 2);
        assert_eq!(alert.first_seen, 45.0);
        assert!(store.ingest(&ann("a", "10.0.0.0/23", 65001, 60.0), &cfg).is_empty());
    }

    #[test]
    fn different_kinds_and_origins_get_separate_alerts() {
        let cfg = config();
        let mut store = AlertStore::default();
        assert_eq!(store.ingest(&ann("a", "10.0.0.0/23", 65002, 1.0), &cfg).len(), 1);
        assert_eq!(store.ingest(&ann("a", "10.0.0.0/24", 65002, 2.0), &cfg).len(), 1);
        assert_eq!(store.ingest(&ann("a", "10.0.0.0/23", 65003, 3.0), &cfg).len(), 1);
        assert_eq!(store.ingest(&ann("a", "10.0.1.0/24", 65002, 4.0), &cfg).len(), 0);
        assert_eq!(store.alerts().count(), 3);
    }

    #[test]
    fn quorum_waits_for_distinct_reporters() {
        let cfg = config();
        let mut store = AlertStore::new(2);
        assert!(store.ingest(&ann("a", "10.0.0.0/23", 65002, 1.0), &cfg).is_empty());
        assert!(store.ingest(&ann("a", "10.0.0.0/23", 65002, 2.0), &cfg).is_empty());
        let events = store.ingest(&ann("b", "10.0.0.0/23", 65002, 3.0), &cfg);
        let AlertEvent::Raised(record) = &events[0] else {
            panic!()
        };
        assert_eq!(record.detected_at, 3.0);
        assert_eq!(record.first_seen, 1.0);
        assert_eq!(store.get(record.alert_id).unwrap().evidence.len(), 3);
    }

    #[test]
    fn transitions_are_one_way() {
        let cfg = config();
        let mut store = AlertStore::default();
        store.ingest(&ann("a", "10.0.0.0/23", 65002, 1.0), &cfg);
        let id = AlertId(1);
        assert!(store.transition(id, AlertState::New, 2.0).is_err());
        store.transition(id, AlertState::Mitigating, 2.0).unwrap();
        assert!(store.transition(id, AlertState::New, 3.0).is_err());
        store.transition(id, AlertState::Resolved, 4.0).unwrap();
        assert!(store.transition(id, AlertState::Mitigating, 5.0).is_err());
        // a resolved alert no longer absorbs evidence; a recurrence opens a new one
        assert_eq!(store.ingest(&ann("a", "10.0.0.0/23", 65002, 9.0), &cfg).len(), 1);
        assert_eq!(store.get(AlertId(2)).unwrap().state, AlertState::New);
    }

    #[test]
    fn latency_is_detected_minus_start() {
        let cfg = config();
        let mut store = AlertStore::default();
        store.ingest(&ann("a", "10.0.0.0/23", 65002, 145.0), &cfg);
        let alert = store.get(AlertId(1)).unwrap();
        assert_eq!(detection_latency(alert, Some(100.0)).unwrap(), 45.0);
        assert_eq!(detection_latency(alert, None), Err(DetectionError::UnknownStart));
    }

    #[test]
    fn latency_is_min_over_source_delays() {
        // brute force: every arrival order of three sources yields the minimum delay
        let delays = [45.0, 120.0, 900.0];
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for order in orders {
            let mut stream: Vec<RouteObservation> = order
                .iter()
                .map(|&i| {
                    RouteObservation::announce(
                        SourceId::new(format!("src{i}")),
                        "vp",
                        p("10.0.0.0/23"),
                        AsPath::new(vec![Asn(65002)]).unwrap(),
                        0.0,
                        delays[i],
                    )
                })
                .collect();
            stream = crate::feed::merge(vec![stream]).into_vec();
            let cfg = config();
            let mut store = AlertStore::default();
            for obs in &stream {
                store.ingest(obs, &cfg);
            }
            let alert = store.get(AlertId(1)).unwrap();
            assert_eq!(detection_latency(alert, Some(0.0)).unwrap(), 45.0);
        }
    }
}
