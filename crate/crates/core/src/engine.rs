//! The ingest → detect → mitigate → monitor pipeline.
//!
//! [`Engine`] is the single consumer of the merged observation stream. It is
//! clock-agnostic: every call carries the time it happens at, so live mode,
//! trace replay and simulation drive the same code.

use std::collections::BTreeMap;

use crate::clock::Timestamp;
use crate::config::EngineConfig;
use crate::detection::{AlertEvent, AlertId, AlertState, AlertStore, HijackAlert};
use crate::events::EngineEvent;
use crate::feed::RouteObservation;
use crate::mitigation::{Command, MitigationError, MitigationEvent, MitigationPlan, Mitigator, PlanStatus, Reply};
use crate::monitor::{ConvergenceTracker, EffectiveOrigin, TimelineRecord, ViewStore, VpKey};
use crate::prefix::IpPrefix;

pub struct Engine {
    config: EngineConfig,
    alerts: AlertStore,
    mitigator: Mitigator,
    views: ViewStore,
    trackers: BTreeMap<AlertId, ConvergenceTracker>,
    last_reports: BTreeMap<AlertId, (usize, usize, usize, bool)>,
    last_origin: BTreeMap<(IpPrefix, VpKey), EffectiveOrigin>,
    timeline: Vec<TimelineRecord>,
    observations: u64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        let m = &config.mitigation;
        let mitigator = Mitigator::new(m.max_length, m.retry, m.linger);
        Engine {
            alerts: AlertStore::new(config.detection.quorum),
            mitigator,
            views: ViewStore::new(),
            trackers: BTreeMap::new(),
            last_reports: BTreeMap::new(),
            last_origin: BTreeMap::new(),
            timeline: Vec::new(),
            observations: 0,
            config,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn alerts(&self) -> impl Iterator<Item = &HijackAlert> {
        self.alerts.alerts()
    }

    pub fn alert(&self, id: AlertId) -> Option<&HijackAlert> {
        self.alerts.get(id)
    }

    /// Point-in-time copy of all alerts for readers outside the pipeline.
    pub fn snapshot(&self) -> Vec<HijackAlert> {
        self.alerts.snapshot()
    }

    pub fn plan(&self, id: AlertId) -> Option<&MitigationPlan> {
        self.mitigator.plan_for(id)
    }

    pub fn plans(&self) -> impl Iterator<Item = &MitigationPlan> {
        self.mitigator.plans()
    }

    pub fn views(&self) -> &ViewStore {
        &self.views
    }

    pub fn tracker(&self, id: AlertId) -> Option<&ConvergenceTracker> {
        self.trackers.get(&id)
    }

    /// Effective-origin changes seen so far, one record per change.
    pub fn timeline(&self) -> &[TimelineRecord] {
        &self.timeline
    }

    pub fn take_timeline(&mut self) -> Vec<TimelineRecord> {
        std::mem::take(&mut self.timeline)
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }

    /// Controller lines to send, in order.
    pub fn take_outbox(&mut self) -> Vec<(Timestamp, Command)> {
        self.mitigator.take_outbox()
    }

    /// Earliest time at which [`Engine::tick`] has work to do.
    pub fn next_wakeup(&self) -> Option<Timestamp> {
        let hold = self
            .trackers
            .iter()
            .filter(|(id, _)| self.eligible(**id))
            .filter_map(|(_, t)| t.hold_deadline())
            .reduce(f64::min);
        match (self.mitigator.next_wakeup(), hold) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Runs every wakeup up to and including `now`, each at its own time.
    pub fn advance_to(&mut self, now: Timestamp) -> Vec<EngineEvent> {
        let mut events = Vec::new();
        while let Some(due) = self.next_wakeup().filter(|d| *d <= now) {
            events.extend(self.tick(due));
            if self.next_wakeup() == Some(due) {
                break;
            }
        }
        events
    }

    pub fn tick(&mut self, now: Timestamp) -> Vec<EngineEvent> {
        let mitigation = self.mitigator.tick(now);
        let mut events = self.mitigation_events(mitigation);
        events.extend(self.evaluate(now));
        events
    }

    /// Feeds one observation from the merged stream at its arrival time.
    pub fn ingest(&mut self, observation: &RouteObservation) -> Vec<EngineEvent> {
        let now = observation.received_at;
        self.observations += 1;
        let mitigation = self.mitigator.tick(now);
        let mut events = self.mitigation_events(mitigation);

        if self.views.apply(observation) {
            self.sample(observation, now);
        }

        for event in self.alerts.ingest(observation, &self.config.owned) {
            let AlertEvent::Raised(record) = event else {
                continue;
            };
            let id = record.alert_id;
            events.push(EngineEvent::AlertRaised(record));
            events.extend(self.alert_raised(id, now));
        }
        events.extend(self.evaluate(now));
        events
    }

    /// Handles one controller reply.
    pub fn on_reply(&mut self, reply: &Reply, now: Timestamp) -> Vec<EngineEvent> {
        let mitigation = self.mitigator.on_reply(reply, now);
        let mut events = self.mitigation_events(mitigation);
        events.extend(self.evaluate(now));
        events
    }

    fn alert_raised(&mut self, id: AlertId, now: Timestamp) -> Vec<EngineEvent> {
        let alert = self.alerts.get(id).expect("raised alert is stored").clone();
        self.trackers.insert(
            id,
            ConvergenceTracker::new(
                id,
                alert.owned.prefix,
                alert.owned.legitimate_origins.clone(),
                self.config.monitoring.hold_time,
            ),
        );
        match self.mitigator.start(&alert, &alert.owned, now) {
            Ok(mitigation) => self.mitigation_events(mitigation),
            Err(MitigationError::UnmitigableByDeaggregation { prefix, max_length }) => {
                log::warn!("alert {id}: {prefix} cannot be de-aggregated within /{max_length}");
                vec![EngineEvent::Unmitigable {
                    t: now,
                    alert_id: id,
                    prefix,
                    max_length,
                }]
            }
            Err(e) => {
                log::info!("alert {id}: no mitigation: {e}");
                Vec::new()
            }
        }
    }

    fn mitigation_events(&mut self, input: Vec<MitigationEvent>) -> Vec<EngineEvent> {
        let mut out = Vec::new();
        for event in input {
            match event {
                MitigationEvent::Planned(plan) => {
                    let t = self
                        .alerts
                        .get(plan.alert_id)
                        .map(|a| a.detected_at)
                        .unwrap_or_default();
                    out.push(EngineEvent::PlanCreated { t, plan });
                }
                MitigationEvent::Status {
                    alert_id,
                    status,
                    at,
                    latency,
                } => {
                    out.push(EngineEvent::PlanState {
                        t: at,
                        alert_id,
                        status,
                        latency,
                    });
                    let is_new = self.alerts.get(alert_id).is_some_and(|a| a.state == AlertState::New);
                    if status == PlanStatus::Commanded && is_new {
                        match self.alerts.transition(alert_id, AlertState::Mitigating, at) {
                            Ok(AlertEvent::StateChanged(r)) => out.push(EngineEvent::AlertState(r)),
                            Ok(AlertEvent::Raised(_)) => {}
                            Err(e) => log::error!("{e}"),
                        }
                    }
                }
                MitigationEvent::Command { at, command } => out.push(EngineEvent::Command {
                    t: at,
                    line: command.to_string(),
                }),
                MitigationEvent::Unmitigable {
                    alert_id,
                    prefix,
                    max_length,
                    at,
                } => out.push(EngineEvent::Unmitigable {
                    t: at,
                    alert_id,
                    prefix,
                    max_length,
                }),
            }
        }
        out
    }

    // An alert is judged on convergence unless its plan still waits for the controller.
    fn eligible(&self, id: AlertId) -> bool {
        !matches!(
            self.mitigator.plan_for(id).map(|p| p.status),
            Some(PlanStatus::Planned | PlanStatus::Commanded)
        )
    }

    fn evaluate(&mut self, now: Timestamp) -> Vec<EngineEvent> {
        let mut events = Vec::new();
        let ids: Vec<AlertId> = self.trackers.keys().copied().collect();
        for id in ids {
            if !self.eligible(id) {
                continue;
            }
            let tracker = self.trackers.get_mut(&id).expect("listed");
            let report = match tracker.report(&self.views, now) {
                Ok(report) => report,
                Err(e) => {
                    log::debug!("alert {id}: {e}");
                    continue;
                }
            };
            let summary = (
                report.total_vps,
                report.legitimate_vps,
                report.excluded_vps,
                report.complete,
            );
            if self.last_reports.get(&id) != Some(&summary) {
                self.last_reports.insert(id, summary);
                events.push(EngineEvent::Convergence {
                    t: now,
                    report: report.clone(),
                });
            }
            if let Some(completed_at) = report.completed_at {
                events.extend(self.resolve(id, completed_at, now));
            }
        }
        events
    }

    fn resolve(&mut self, id: AlertId, completed_at: Timestamp, now: Timestamp) -> Vec<EngineEvent> {
        let mut events = Vec::new();
        self.trackers.remove(&id);
        self.last_reports.remove(&id);
        if let Some(event) = self.mitigator.complete(id, completed_at, now) {
            events.extend(self.mitigation_events(vec![event]));
        }
        match self.alerts.transition(id, AlertState::Resolved, now) {
            Ok(AlertEvent::StateChanged(r)) => events.push(EngineEvent::AlertState(r)),
            Ok(AlertEvent::Raised(_)) => {}
            Err(e) => log::error!("{e}"),
        }
        self.mitigator.alert_resolved(id, now);
        events
    }

    fn sample(&mut self, observation: &RouteObservation, now: Timestamp) {
        let key = VpKey {
            source: observation.source.clone(),
            vantage_point: observation.vantage_point.clone(),
        };
        let Some(view) = self.views.view(&key) else {
            return;
        };
        for owned in self.config.owned.iter() {
            if !owned.prefix.overlaps(&observation.prefix) {
                continue;
            }
            let origin = view.effective_origin(&owned.prefix);
            let slot = (owned.prefix, key.clone());
            if self.last_origin.get(&slot) == Some(&origin) {
                continue;
            }
            let legitimate = origin.is_legitimate(&owned.legitimate_origins);
            self.timeline.push(TimelineRecord {
                t: now,
                prefix: owned.prefix,
                source: key.source.clone(),
                vantage_point: key.vantage_point.clone(),
                effective_origin: origin.clone(),
                legitimate,
            });
            self.last_origin.insert(slot, origin);
        }
    }
}
