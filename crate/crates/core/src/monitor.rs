//! Per-vantage-point route views and mitigation progress.
//!
//! Every observation updates the view of the `(source, vantage point)` that
//! reported it. For an owned address space, a vantage point's effective
//! origin is found by longest-prefix match over the routes it holds inside
//! that space. Mitigation is complete once every vantage point with a route
//! resolves the whole space to a legitimate origin, continuously for the
//! hold time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{json, Value};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::detection::AlertId;
use crate::feed::{RouteObservation, RouteUpdate, SourceId};
use crate::prefix::{AsPath, Asn, IpPrefix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("no vantage point holds a route for {0}")]
    NoVantagePoints(IpPrefix),
    #[error("geo table line {line}: {message}")]
    GeoTable { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VpKey {
    pub source: SourceId,
    pub vantage_point: String,
}

#[derive(Debug, Clone, PartialEq)]
struct Selected {
    // None marks a withdrawal, kept so older announcements stay ignored
    path: Option<AsPath>,
    timestamp: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VantagePointView {
    selected: BTreeMap<IpPrefix, Selected>,
}

impl VantagePointView {
    pub fn route(&self, prefix: &IpPrefix) -> Option<&AsPath> {
        self.selected.get(prefix).and_then(|s| s.path.as_ref())
    }

    pub fn routes(&self) -> impl Iterator<Item = (IpPrefix, &AsPath)> {
        self.selected
            .iter()
            .filter_map(|(p, s)| s.path.as_ref().map(|path| (*p, path)))
    }

    /// Applies one update under the latest-timestamp-wins rule; on equal
    /// timestamps the later arrival wins. Returns whether anything changed.
    pub fn apply(&mut self, prefix: IpPrefix, update: &RouteUpdate, timestamp: Timestamp) -> bool {
        if let Some(current) = self.selected.get(&prefix) {
            if timestamp < current.timestamp {
                return false;
            }
        }
        let path = match update {
            RouteUpdate::Announce(path) => Some(path.clone()),
            RouteUpdate::Withdraw => None,
        };
        let previous = self.selected.insert(prefix, Selected { path, timestamp });
        previous.and_then(|s| s.path) != self.selected[&prefix].path
    }

    pub fn effective_origin(&self, space: &IpPrefix) -> EffectiveOrigin {
        effective_origin(self, space)
    }
}

/// Result of longest-prefix matching across an address space.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(from = "Option<OneOrMany>")]
pub enum EffectiveOrigin {
    None,
    Single(Asn),
    /// Different parts of the space resolve to different origins.
    Mixed(BTreeSet<Asn>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Asn),
    Many(BTreeSet<Asn>),
}

impl From<Option<OneOrMany>> for EffectiveOrigin {
    fn from(v: Option<OneOrMany>) -> Self {
        match v {
            None => EffectiveOrigin::None,
            Some(OneOrMany::One(a)) => EffectiveOrigin::Single(a),
            Some(OneOrMany::Many(set)) => EffectiveOrigin::from_set(set),
        }
    }
}

impl Serialize for EffectiveOrigin {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            EffectiveOrigin::None => serializer.serialize_none(),
            EffectiveOrigin::Single(a) => a.serialize(serializer),
            EffectiveOrigin::Mixed(set) => {
                let mut seq = serializer.serialize_seq(Some(set.len()))?;
                for a in set {
                    seq.serialize_element(a)?;
                }
                seq.end()
            }
        }
    }
}

impl EffectiveOrigin {
    fn from_set(set: BTreeSet<Asn>) -> Self {
        match set.len() {
            0 => EffectiveOrigin::None,
            1 => EffectiveOrigin::Single(*set.iter().next().expect("one element")),
            _ => EffectiveOrigin::Mixed(set),
        }
    }

    pub fn origins(&self) -> BTreeSet<Asn> {
        match self {
            EffectiveOrigin::None => BTreeSet::new(),
            EffectiveOrigin::Single(a) => [*a].into(),
            EffectiveOrigin::Mixed(set) => set.clone(),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, EffectiveOrigin::None)
    }

    /// True when every matched part of the space has a legitimate origin.
    pub fn is_legitimate(&self, legitimate: &BTreeSet<Asn>) -> bool {
        match self {
            EffectiveOrigin::None => false,
            EffectiveOrigin::Single(a) => legitimate.contains(a),
            EffectiveOrigin::Mixed(set) => set.is_subset(legitimate),
        }
    }
}

/// Longest-prefix-match origin(s) over `space`, considering the routes the
/// view holds for prefixes inside (or equal to) `space`.
pub fn effective_origin(view: &VantagePointView, space: &IpPrefix) -> EffectiveOrigin {
    let inside: Vec<(IpPrefix, Asn)> = view
        .routes()
        .filter(|(p, _)| space.contains(p))
        .map(|(p, path)| (p, path.origin()))
        .collect();
    if inside.is_empty() {
        return EffectiveOrigin::None;
    }
    // elementary intervals between all prefix boundaries
    let mut bounds: Vec<u64> = inside
        .iter()
        .flat_map(|(p, _)| [p.first() as u64, p.last() as u64 + 1])
        .collect();
    bounds.push(space.first() as u64);
    bounds.push(space.last() as u64 + 1);
    bounds.sort_unstable();
    bounds.dedup();
    let mut origins = BTreeSet::new();
    for start in &bounds[..bounds.len() - 1] {
        let addr = *start as u32;
        if let Some((_, origin)) = inside
            .iter()
            .filter(|(p, _)| p.contains_addr(addr))
            .max_by_key(|(p, _)| p.len())
        {
            origins.insert(*origin);
        }
    }
    EffectiveOrigin::from_set(origins)
}

/// All vantage point views, keyed by (source, vantage point).
#[derive(Debug, Clone, Default)]
pub struct ViewStore {
    views: BTreeMap<VpKey, VantagePointView>,
}

impl ViewStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns whether the view changed.
    pub fn apply(&mut self, observation: &RouteObservation) -> bool {
        let key = VpKey {
            source: observation.source.clone(),
            vantage_point: observation.vantage_point.clone(),
        };
        self.views
            .entry(key)
            .or_default()
            .apply(observation.prefix, &observation.update, observation.timestamp)
    }

    pub fn view(&self, key: &VpKey) -> Option<&VantagePointView> {
        self.views.get(key)
    }

    pub fn views(&self) -> impl Iterator<Item = (&VpKey, &VantagePointView)> {
        self.views.iter()
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub alert_id: AlertId,
    pub total_vps: usize,
    pub legitimate_vps: usize,
    /// Vantage points without any route in the space; not counted in `total_vps`.
    pub excluded_vps: usize,
    pub fraction: f64,
    pub complete: bool,
    pub completed_at: Option<Timestamp>,
}

/// Decides when one alert's address space has fully returned to the
/// legitimate origins.
#[derive(Debug, Clone)]
pub struct ConvergenceTracker {
    alert_id: AlertId,
    space: IpPrefix,
    legitimate: BTreeSet<Asn>,
    hold: f64,
    legit_since: Option<Timestamp>,
    completed_at: Option<Timestamp>,
}

impl ConvergenceTracker {
    pub fn new(alert_id: AlertId, space: IpPrefix, legitimate: BTreeSet<Asn>, hold: f64) -> Self {
        ConvergenceTracker {
            alert_id,
            space,
            legitimate,
            hold,
            legit_since: None,
            completed_at: None,
        }
    }

    pub fn space(&self) -> IpPrefix {
        self.space
    }

    pub fn completed_at(&self) -> Option<Timestamp> {
        self.completed_at
    }

    /// Start of the current all-legitimate stretch, if any.
    pub fn legit_since(&self) -> Option<Timestamp> {
        self.legit_since
    }

    /// When a pending hold would elapse.
    pub fn hold_deadline(&self) -> Option<Timestamp> {
        match (self.completed_at, self.legit_since) {
            (None, Some(since)) => Some(since + self.hold),
            _ => None,
        }
    }

    /// Evaluates the store at `now`. Completion, once reached, is final;
    /// `completed_at` is the start of the stretch that lasted the hold time.
    pub fn report(&mut self, store: &ViewStore, now: Timestamp) -> Result<ConvergenceReport, MonitorError> {
        let mut total = 0;
        let mut legit = 0;
        let mut excluded = 0;
        for (_, view) in store.views() {
            let origin = view.effective_origin(&self.space);
            if origin.is_none() {
                excluded += 1;
                continue;
            }
            total += 1;
            if origin.is_legitimate(&self.legitimate) {
                legit += 1;
            }
        }
        if total == 0 {
            self.legit_since = None;
            return Err(MonitorError::NoVantagePoints(self.space));
        }
        if self.completed_at.is_none() {
            if legit == total {
                let since = *self.legit_since.get_or_insert(now);
                if now >= since + self.hold {
                    self.completed_at = Some(since);
                }
            } else {
                self.legit_since = None;
            }
        }
        Ok(ConvergenceReport {
            alert_id: self.alert_id,
            total_vps: total,
            legitimate_vps: legit,
            excluded_vps: excluded,
            fraction: legit as f64 / total as f64,
            complete: self.completed_at.is_some(),
            completed_at: self.completed_at,
        })
    }
}

/// One vantage point's effective origin over an owned space at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub t: Timestamp,
    pub prefix: IpPrefix,
    pub source: SourceId,
    pub vantage_point: String,
    pub effective_origin: EffectiveOrigin,
    pub legitimate: bool,
}

/// `vantage_point -> (latitude, longitude)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeoTable(HashMap<String, (f64, f64)>);

impl GeoTable {
    pub fn parse(text: &str) -> Result<Self, MonitorError> {
        let mut table = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: &str| MonitorError::GeoTable {
                line,
                message: message.to_string(),
            };
            let fields: Vec<&str> = content.split_whitespace().collect();
            let [vp, lat, lon] = fields.as_slice() else {
                return Err(err("expected `vantage_point latitude longitude`"));
            };
            let lat: f64 = lat.parse().map_err(|_| err("bad latitude"))?;
            let lon: f64 = lon.parse().map_err(|_| err("bad longitude"))?;
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(err("coordinates out of range"));
            }
            table.insert(vp.to_string(), (lat, lon));
        }
        Ok(GeoTable(table))
    }

    pub fn insert(&mut self, vantage_point: impl Into<String>, lat: f64, lon: f64) {
        self.0.insert(vantage_point.into(), (lat, lon));
    }

    pub fn get(&self, vantage_point: &str) -> Option<(f64, f64)> {
        self.0.get(vantage_point).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineExport {
    /// Newline-delimited JSON, one record per effective-origin change.
    pub ndjson: String,
    pub records: usize,
    pub geojson: Option<Value>,
    /// Vantage points exported without geometry.
    pub unknown_vantage_points: BTreeSet<String>,
}

/// Reduces samples to change points per (space, source, vantage point) and
/// renders them, plus a GeoJSON FeatureCollection when a geo table is given.
pub fn export_timeline(samples: &[TimelineRecord], geo: Option<&GeoTable>) -> TimelineExport {
    let mut last: HashMap<(IpPrefix, &SourceId, &str), &EffectiveOrigin> = HashMap::new();
    let mut changes: Vec<&TimelineRecord> = Vec::new();
    for sample in samples {
        let key = (sample.prefix, &sample.source, sample.vantage_point.as_str());
        if last.get(&key) != Some(&&sample.effective_origin) {
            last.insert(key, &sample.effective_origin);
            changes.push(sample);
        }
    }

    let mut ndjson = String::new();
    for record in &changes {
        let line = serde_json::to_string(record).expect("timeline records serialize");
        let _ = writeln!(ndjson, "{line}");
    }

    let mut unknown = BTreeSet::new();
    let geojson = geo.map(|geo| {
        let features: Vec<Value> = changes
            .iter()
            .map(|record| {
                let geometry = match geo.get(&record.vantage_point) {
                    Some((lat, lon)) => json!({"type": "Point", "coordinates": [lon, lat]}),
                    None => {
                        unknown.insert(record.vantage_point.clone());
                        Value::Null
                    }
                };
                json!({
                    "type": "Feature",
                    "geometry": geometry,
                    "properties": serde_json::to_value(record).expect("timeline records serialize"),
                })
            })
            .collect();
        json!({"type": "FeatureCollection", "features": features})
    });

    TimelineExport {
        ndjson,
        records: changes.len(),
        geojson,
        unknown_vantage_points: unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> IpPrefix {
        s.parse().unwrap()
    }

    fn path(origin: u32) -> AsPath {
        AsPath::new(vec![Asn(3333), Asn(origin)]).unwrap()
    }

    fn ann(vp: &str, prefix: &str, origin: u32, t: f64) -> RouteObservation {
        RouteObservation::announce(SourceId::new("ris"), vp, p(prefix), path(origin), t, t)
    }

    fn wd(vp: &str, prefix: &str, t: f64) -> RouteObservation {
        RouteObservation::withdraw(SourceId::new("ris"), vp, p(prefix), t, t)
    }

    fn key(vp: &str) -> VpKey {
        VpKey {
            source: SourceId::new("ris"),
            vantage_point: vp.into(),
        }
    }

    #[test]
    fn announce_then_withdraw_cancels() {
        let mut store = ViewStore::new();
        store.apply(&ann("a", "10.0.0.0/23", 65001, 1.0));
        store.apply(&wd("a", "10.0.0.0/23", 2.0));
        assert!(store.view(&key("a")).unwrap().route(&p("10.0.0.0/23")).is_none());
    }

    #[test]
    fn latest_timestamp_wins() {
        let mut store = ViewStore::new();
        store.apply(&ann("a", "10.0.0.0/23", 65002, 5.0));
        assert!(!store.apply(&ann("a", "10.0.0.0/23", 65001, 4.0)));
        let v = store.view(&key("a")).unwrap();
        assert_eq!(v.route(&p("10.0.0.0/23")).unwrap().origin(), Asn(65002));
        // equal timestamp: later arrival wins
        store.apply(&ann("a", "10.0.0.0/23", 65003, 5.0));
        let v = store.view(&key("a")).unwrap();
        assert_eq!(v.route(&p("10.0.0.0/23")).unwrap().origin(), Asn(65003));
    }

    #[test]
    fn effective_origin_examples() {
        let space = p("10.0.0.0/23");
        let mut view = VantagePointView::default();
        view.apply(space, &RouteUpdate::Announce(path(65002)), 1.0);
        assert_eq!(view.effective_origin(&space), EffectiveOrigin::Single(Asn(65002)));

        view.apply(p("10.0.0.0/24"), &RouteUpdate::Announce(path(65001)), 2.0);
        assert_eq!(
            view.effective_origin(&space),
            EffectiveOrigin::Mixed([Asn(65001), Asn(65002)].into())
        );

        view.apply(p("10.0.1.0/24"), &RouteUpdate::Announce(path(65001)), 3.0);
        assert_eq!(view.effective_origin(&space), EffectiveOrigin::Single(Asn(65001)));

        assert_eq!(
            VantagePointView::default().effective_origin(&space),
            EffectiveOrigin::None
        );
        // covering routes outside the space are not considered
        let mut wide = VantagePointView::default();
        wide.apply(p("10.0.0.0/16"), &RouteUpdate::Announce(path(7)), 1.0);
        assert_eq!(wide.effective_origin(&space), EffectiveOrigin::None);
    }

    #[test]
    fn multi_origin_mix_can_be_legitimate() {
        let legit: BTreeSet<Asn> = [Asn(1), Asn(2)].into();
        assert!(EffectiveOrigin::Mixed(legit.clone()).is_legitimate(&legit));
        assert!(!EffectiveOrigin::Mixed([Asn(1), Asn(3)].into()).is_legitimate(&legit));
        assert!(!EffectiveOrigin::None.is_legitimate(&legit));
    }

    #[test]
    fn report_counts_and_hold() {
        let space = p("10.0.0.0/23");
        let mut store = ViewStore::new();
        for vp in ["a", "b", "c"] {
            store.apply(&ann(vp, "10.0.0.0/23", 65001, 0.0));
        }
        store.apply(&ann("d", "10.0.0.0/23", 65002, 0.0));
        let mut tracker = ConvergenceTracker::new(AlertId(1), space, [Asn(65001)].into(), 60.0);
        let r = tracker.report(&store, 10.0).unwrap();
        assert_eq!((r.total_vps, r.legitimate_vps), (4, 3));
        assert_eq!(r.fraction, 0.75);
        assert!(!r.complete);

        store.apply(&ann("d", "10.0.0.0/24", 65001, 20.0));
        store.apply(&ann("d", "10.0.1.0/24", 65001, 20.0));
        assert!(!tracker.report(&store, 20.0).unwrap().complete);
        assert_eq!(tracker.hold_deadline(), Some(80.0));
        assert!(!tracker.report(&store, 79.0).unwrap().complete);
        let r = tracker.report(&store, 80.0).unwrap();
        assert!(r.complete);
        assert_eq!(r.completed_at, Some(20.0));
    }

    #[test]
    fn flapping_resets_the_hold() {
        let space = p("10.0.0.0/23");
        let mut store = ViewStore::new();
        store.apply(&ann("a", "10.0.0.0/23", 65001, 0.0));
        let mut tracker = ConvergenceTracker::new(AlertId(1), space, [Asn(65001)].into(), 60.0);
        tracker.report(&store, 0.0).unwrap();
        store.apply(&ann("a", "10.0.0.0/23", 65002, 30.0));
        tracker.report(&store, 30.0).unwrap();
        store.apply(&ann("a", "10.0.0.0/23", 65001, 40.0));
        tracker.report(&store, 40.0).unwrap();
        assert!(!tracker.report(&store, 61.0).unwrap().complete);
        assert_eq!(tracker.report(&store, 100.0).unwrap().completed_at, Some(40.0));
    }

    #[test]
    fn no_vantage_points_is_explicit() {
        let mut tracker = ConvergenceTracker::new(AlertId(1), p("10.0.0.0/23"), [Asn(1)].into(), 60.0);
        assert!(matches!(
            tracker.report(&ViewStore::new(), 0.0),
            Err(MonitorError::NoVantagePoints(_))
        ));
        let mut store = ViewStore::new();
        store.apply(&ann("a", "192.0.2.0/24", 1, 0.0));
        let err = tracker.report(&store, 0.0).unwrap_err();
        assert_eq!(err, MonitorError::NoVantagePoints(p("10.0.0.0/23")));
    }

    fn sample(t: f64, vp: &str, origin: EffectiveOrigin) -> TimelineRecord {
        let legitimate = origin.is_legitimate(&[Asn(65001)].into());
        TimelineRecord {
            t,
            prefix: p("10.0.0.0/23"),
            source: SourceId::new("ris"),
            vantage_point: vp.into(),
            effective_origin: origin,
            legitimate,
        }
    }

    #[test]
    fn empty_timeline() {
        let out = export_timeline(&[], Some(&GeoTable::default()));
        assert_eq!(out.ndjson, "");
        assert_eq!(out.records, 0);
        assert_eq!(out.geojson.unwrap()["features"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn timeline_record_shape() {
        let out = export_timeline(
            &[
                sample(1.5, "a", EffectiveOrigin::Single(Asn(65002))),
                sample(2.0, "a", EffectiveOrigin::Mixed([Asn(65001), Asn(65002)].into())),
                sample(3.0, "a", EffectiveOrigin::None),
            ],
            None,
        );
        let lines: Vec<&str> = out.ndjson.lines().collect();
        assert_eq!(
            lines[0],
            r#"{"t":1.5,"prefix":"10.0.0.0/23","source":"ris","vantage_point":"a","effective_origin":65002,"legitimate":false}"#
        );
        assert!(lines[1].contains(r#""effective_origin":[65001,65002]"#));
        assert!(lines[2].contains(r#""effective_origin":null"#));
        let back: TimelineRecord = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(
            back.effective_origin,
            EffectiveOrigin::Mixed([Asn(65001), Asn(65002)].into())
        );
    }

    #[test]
    fn geo_table_parsing() {
        let geo = GeoTable::parse("# vp lat lon\nrrc00 52.37 4.89\n").unwrap();
        assert_eq!(geo.get("rrc00"), Some((52.37, 4.89)));
        assert!(GeoTable::parse("x 91 0\n").is_err());
        assert!(matches!(
            GeoTable::parse("ok 1 1\nx 1\n"),
            Err(MonitorError::GeoTable { line: 2, .. })
        ));
    }

    /// Structural rules for a FeatureCollection of point features.
    fn validate_feature_collection(v: &Value) -> Result<(), String> {
        if v["type"] != "FeatureCollection" {
            return Err("type".into());
        }
        let features = v["features"].as_array().ok_or("features")?;
        for f in features {
            if f["type"] != "Feature" {
                return Err("feature type".into());
            }
            if !f["properties"].is_object() {
                return Err("properties".into());
            }
            match &f["geometry"] {
                Value::Null => {}
                g => {
                    if g["type"] != "Point" {
                        return Err("geometry type".into());
                    }
                    let c = g["coordinates"].as_array().ok_or("coordinates")?;
                    let nums: Vec<f64> = c.iter().filter_map(Value::as_f64).collect();
                    if c.len() != 2 || nums.len() != 2 {
                        return Err("coordinate arity".into());
                    }
                    if !(-180.0..=180.0).contains(&nums[0]) || !(-90.0..=90.0).contains(&nums[1]) {
                        return Err("coordinate range".into());
                    }
                }
            }
        }
        Ok(())
    }

    fn arb_origin() -> impl Strategy<Value = EffectiveOrigin> {
        prop_oneof![
            Just(EffectiveOrigin::None),
            Just(EffectiveOrigin::Single(Asn(65001))),
            Just(EffectiveOrigin::Single(Asn(65002))),
            Just(EffectiveOrigin::Mixed([Asn(65001), Asn(65002)].into())),
        ]
    }

    proptest! {
        #[test]
        fn timeline_counts_change_points(
            samples in prop::collection::vec((prop::sample::select(vec!["a", "b", "c"]), arb_origin()), 0..40)
        ) {
            let records: Vec<TimelineRecord> = samples
                .iter()
                .enumerate()
                .map(|(i, (vp, o))| sample(i as f64, vp, o.clone()))
                .collect();
            // change-point oracle: per vp, count samples differing from the previous one
            let mut expected = 0;
            for vp in ["a", "b", "c"] {
                let seq: Vec<&EffectiveOrigin> = samples.iter().filter(|(v, _)| *v == vp).map(|(_, o)| o).collect();
                expected += seq.iter().enumerate().filter(|(i, o)| *i == 0 || seq[i - 1] != **o).count();
            }
            let mut geo = GeoTable::default();
            geo.insert("a", 52.0, 4.9);
            geo.insert("b", -33.9, 151.2);
            let out = export_timeline(&records, Some(&geo));
            prop_assert_eq!(out.records, expected);
            prop_assert_eq!(out.ndjson.lines().count(), expected);
            let gj = out.geojson.unwrap();
            prop_assert!(validate_feature_collection(&gj).is_ok());
            prop_assert_eq!(gj["features"].as_array().unwrap().len(), expected);
            let has_c = samples.iter().any(|(v, _)| *v == "c");
            prop_assert_eq!(out.unknown_vantage_points.contains("c"), has_c);
        }

        #[test]
        fn final_view_is_independent_of_arrival_order(
            updates in prop::collection::vec((prop::sample::select(vec!["10.0.0.0/23", "10.0.0.0/24"]), prop::option::of(prop::sample::select(vec![65001u32, 65002]))), 1..20),
            seed in any::<u64>()
        ) {
            // distinct timestamps: index
            let obs: Vec<RouteObservation> = updates
                .iter()
                .enumerate()
                .map(|(i, (prefix, origin))| match origin {
                    Some(o) => ann("a", prefix, *o, i as f64),
                    None => wd("a", prefix, i as f64),
                })
                .collect();
            let mut sorted = ViewStore::new();
            for o in &obs {
                sorted.apply(o);
            }
            let mut shuffled = obs.clone();
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let mut other = ViewStore::new();
            for o in &shuffled {
                other.apply(o);
            }
            let a: Vec<_> = sorted.view(&key("a")).unwrap().routes().map(|(p, x)| (p, x.clone())).collect();
            let b: Vec<_> = other.view(&key("a")).unwrap().routes().map(|(p, x)| (p, x.clone())).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn effective_origin_matches_per_block_lpm(
            routes in prop::collection::vec((0u32..4, 22u8..=24, prop::sample::select(vec![65001u32, 65002, 65003])), 0..6)
        ) {
            let space = p("10.0.0.0/22");
            let mut view = VantagePointView::default();
            for (i, (block, len, origin)) in routes.iter().enumerate() {
                let prefix = IpPrefix::truncated(u32::from(std::net::Ipv4Addr::new(10, 0, *block as u8, 0)), *len);
                view.apply(prefix, &RouteUpdate::Announce(path(*origin)), i as f64);
            }
            // oracle: longest match per /24 block
            let mut expected = BTreeSet::new();
            for block in 0u32..4 {
                let addr = u32::from(std::net::Ipv4Addr::new(10, 0, block as u8, 0));
                let best = view
                    .routes()
                    .filter(|(p, _)| p.contains_addr(addr) && space.contains(p))
                    .max_by_key(|(p, _)| p.len());
                if let Some((_, path)) = best {
                    expected.insert(path.origin());
                }
            }
            prop_assert_eq!(view.effective_origin(&space).origins(), expected);
        }
    }
}
