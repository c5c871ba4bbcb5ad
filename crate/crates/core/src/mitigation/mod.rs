//! De-aggregation mitigation.
//!
//! A raised alert becomes a [`MitigationPlan`] announcing the two halves of
//! the hijacked prefix from a legitimate origin. The [`Mitigator`] pushes the
//! plan's commands to the controller, tracks replies, and retries with
//! exponential backoff when the controller does not acknowledge in time.

mod command;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::detection::{AlertId, AlertState, HijackAlert, HijackKind, OwnedPrefix};
use crate::prefix::{Asn, IpPrefix, PrefixError};

pub use command::{Command, ProtocolError, Reply};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MitigationError {
    #[error("{prefix} cannot be de-aggregated within /{max_length}")]
    UnmitigableByDeaggregation { prefix: IpPrefix, max_length: u8 },
    #[error("mitigation disabled for {0}")]
    MitigationDisabled(IpPrefix),
    #[error("alert {0} is not NEW")]
    AlertNotNew(AlertId),
    #[error("plan for alert {0} announces nothing")]
    EmptyPlan(AlertId),
    #[error("plan for alert {alert}: expected status {expected}, found {found}")]
    WrongStatus {
        alert: AlertId,
        expected: PlanStatus,
        found: PlanStatus,
    },
    #[error("controller did not acknowledge plan for alert {0} in time")]
    AckTimeout(AlertId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PlanStatus {
    Planned,
    Commanded,
    Acknowledged,
    Complete,
    Failed,
}

impl fmt::Display for PlanStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanStatus::Planned => "PLANNED",
            PlanStatus::Commanded => "COMMANDED",
            PlanStatus::Acknowledged => "ACKNOWLEDGED",
            PlanStatus::Complete => "COMPLETE",
            PlanStatus::Failed => "FAILED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigationPlan {
    pub alert_id: AlertId,
    pub parent: IpPrefix,
    pub announcements: Vec<IpPrefix>,
    pub origin: Asn,
    pub status: PlanStatus,
    pub commanded_at: Option<Timestamp>,
    pub acknowledged_at: Option<Timestamp>,
    pub completed_at: Option<Timestamp>,
    pub failed_at: Option<Timestamp>,
}

impl MitigationPlan {
    /// Seconds between the first command and the controller's acknowledgment.
    pub fn announce_latency(&self) -> Option<f64> {
        Some(self.acknowledged_at? - self.commanded_at?)
    }

    pub fn commands(&self) -> Vec<Command> {
        self.announcements
            .iter()
            .map(|&prefix| Command::Announce {
                prefix,
                origin: self.origin,
            })
            .collect()
    }

    pub fn withdraw_commands(&self) -> Vec<Command> {
        self.announcements
            .iter()
            .map(|&prefix| Command::Withdraw { prefix })
            .collect()
    }

    fn expect(&self, expected: PlanStatus) -> Result<(), MitigationError> {
        if self.status == expected {
            Ok(())
        } else {
            Err(MitigationError::WrongStatus {
                alert: self.alert_id,
                expected,
                found: self.status,
            })
        }
    }

    pub fn record(&self) -> PlanRecord {
        PlanRecord {
            alert_id: self.alert_id,
            parent: self.parent,
            announcements: self.announcements.clone(),
            origin: self.origin,
            status: self.status,
        }
    }
}

/// Builds the de-aggregation plan for a NEW alert.
///
/// Exact-prefix hijacks split the owned prefix; sub-prefix hijacks split the
/// attacker's prefix so the new routes are more specific than the bogus one.
pub fn plan(alert: &HijackAlert, owned: &OwnedPrefix, max_length: u8) -> Result<MitigationPlan, MitigationError> {
    if !owned.mitigation_enabled {
        return Err(MitigationError::MitigationDisabled(owned.prefix));
    }
    if alert.state != AlertState::New {
        return Err(MitigationError::AlertNotNew(alert.id));
    }
    let target = match alert.kind {
        HijackKind::ExactOrigin => owned.prefix,
        HijackKind::SubprefixOrigin => alert.observed_prefix,
    };
    let halves = target.deaggregate(max_length).map_err(|e| match e {
        PrefixError::Unsplittable(prefix, max_length) => {
            MitigationError::UnmitigableByDeaggregation { prefix, max_length }
        }
        other => unreachable!("deaggregate only fails as unsplittable: {other}"),
    })?;
    Ok(MitigationPlan {
        alert_id: alert.id,
        parent: target,
        announcements: halves.to_vec(),
        origin: owned.primary_origin(),
        status: PlanStatus::Planned,
        commanded_at: None,
        acknowledged_at: None,
        completed_at: None,
        failed_at: None,
    })
}

/// Renders one command line per sub-prefix and marks the plan COMMANDED.
pub fn render_commands(plan: &mut MitigationPlan, now: Timestamp) -> Result<Vec<String>, MitigationError> {
    plan.expect(PlanStatus::Planned)?;
    if plan.announcements.is_empty() {
        return Err(MitigationError::EmptyPlan(plan.alert_id));
    }
    plan.status = PlanStatus::Commanded;
    plan.commanded_at = Some(now);
    Ok(plan.commands().iter().map(Command::to_string).collect())
}

/// Marks a COMMANDED plan ACKNOWLEDGED at `ack_at`; returns the announce latency.
pub fn acknowledge(plan: &mut MitigationPlan, ack_at: Timestamp) -> Result<f64, MitigationError> {
    plan.expect(PlanStatus::Commanded)?;
    plan.status = PlanStatus::Acknowledged;
    plan.acknowledged_at = Some(ack_at);
    Ok(plan.announce_latency().expect("commanded plans have commanded_at"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Seconds to wait for all replies of one attempt.
    pub ack_deadline: f64,
    /// Additional attempts after the first.
    pub retries: u32,
    /// Backoff before retry `k` (1-based) is `backoff_base * 2^(k-1)`.
    pub backoff_base: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            ack_deadline: 30.0,
            retries: 3,
            backoff_base: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub alert_id: AlertId,
    pub parent: IpPrefix,
    pub announcements: Vec<IpPrefix>,
    pub origin: Asn,
    pub status: PlanStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MitigationEvent {
    Planned(PlanRecord),
    Status {
        alert_id: AlertId,
        status: PlanStatus,
        at: Timestamp,
        latency: Option<f64>,
    },
    Command {
        at: Timestamp,
        command: Command,
    },
    Unmitigable {
        alert_id: AlertId,
        prefix: IpPrefix,
        max_length: u8,
        at: Timestamp,
    },
}

#[derive(Debug, Clone)]
struct Exchange {
    attempt: u32,
    sent_at: Timestamp,
    awaiting: Vec<Command>,
    retry_at: Option<Timestamp>,
}

/// Owns all plans and their in-flight controller exchanges.
#[derive(Debug, Clone)]
pub struct Mitigator {
    max_length: u8,
    policy: RetryPolicy,
    linger: f64,
    plans: BTreeMap<AlertId, MitigationPlan>,
    exchanges: BTreeMap<AlertId, Exchange>,
    // sent lines awaiting a reply, in send order
    outstanding: VecDeque<(Option<AlertId>, Command)>,
    withdrawals: BTreeMap<AlertId, Timestamp>,
    outbox: Vec<(Timestamp, Command)>,
}

impl Mitigator {
    pub fn new(max_length: u8, policy: RetryPolicy, linger: f64) -> Self {
        Mitigator {
            max_length,
            policy,
            linger,
            plans: BTreeMap::new(),
            exchanges: BTreeMap::new(),
            outstanding: VecDeque::new(),
            withdrawals: BTreeMap::new(),
            outbox: Vec::new(),
        }
    }

    pub fn plan_for(&self, alert: AlertId) -> Option<&MitigationPlan> {
        self.plans.get(&alert)
    }

    pub fn plans(&self) -> impl Iterator<Item = &MitigationPlan> {
        self.plans.values()
    }

    /// Commands to hand to the controller, in send order.
    pub fn take_outbox(&mut self) -> Vec<(Timestamp, Command)> {
        std::mem::take(&mut self.outbox)
    }

    /// Plans and commands mitigation for a NEW alert. Re-planning an alert
    /// whose plan has not failed is a no-op.
    pub fn start(
        &mut self,
        alert: &HijackAlert,
        owned: &OwnedPrefix,
        now: Timestamp,
    ) -> Result<Vec<MitigationEvent>, MitigationError> {
        if let Some(existing) = self.plans.get(&alert.id) {
            if existing.status != PlanStatus::Failed {
                return Ok(Vec::new());
            }
        }
        let mut plan = match plan(alert, owned, self.max_length) {
            Ok(plan) => plan,
            Err(MitigationError::AlertNotNew(_)) if self.plans.contains_key(&alert.id) => {
                // replanning after a failure; the alert is already MITIGATING
                let mut fresh = alert.clone();
                fresh.state = AlertState::New;
                plan(&fresh, owned, self.max_length)?
            }
            Err(e) => return Err(e),
        };
        let mut events = vec![MitigationEvent::Planned(plan.record())];
        render_commands(&mut plan, now)?;
        events.push(MitigationEvent::Status {
            alert_id: plan.alert_id,
            status: PlanStatus::Commanded,
            at: now,
            latency: None,
        });
        let commands = plan.commands();
        self.send(Some(plan.alert_id), &commands, now, &mut events);
        self.exchanges.insert(
            plan.alert_id,
            Exchange {
                attempt: 1,
                sent_at: now,
                awaiting: commands,
                retry_at: None,
            },
        );
        self.plans.insert(plan.alert_id, plan);
        Ok(events)
    }

    fn send(
        &mut self,
        alert: Option<AlertId>,
        commands: &[Command],
        now: Timestamp,
        events: &mut Vec<MitigationEvent>,
    ) {
        for command in commands {
            self.outbox.push((now, *command));
            self.outstanding.push_back((alert, *command));
            events.push(MitigationEvent::Command {
                at: now,
                command: *command,
            });
        }
    }

    /// Handles one controller reply line.
    pub fn on_reply(&mut self, reply: &Reply, now: Timestamp) -> Vec<MitigationEvent> {
        let mut events = self.tick(now);
        let matched = match reply {
            Reply::Ok(echo) => {
                let pos = self.outstanding.iter().position(|(_, c)| c.to_string() == *echo);
                match pos {
                    Some(pos) => self.outstanding.remove(pos),
                    None => {
                        log::warn!("controller acknowledged unknown line `{echo}`");
                        None
                    }
                }
            }
            Reply::Error(_) => self.outstanding.pop_front(),
        };
        let Some((Some(alert_id), command)) = matched else {
            return events;
        };
        let Some(exchange) = self.exchanges.get_mut(&alert_id) else {
            return events;
        };
        match reply {
            Reply::Ok(_) => {
                exchange.awaiting.retain(|c| *c != command);
                if exchange.awaiting.is_empty() {
                    self.exchanges.remove(&alert_id);
                    let plan = self.plans.get_mut(&alert_id).expect("exchange has a plan");
                    if let Ok(latency) = acknowledge(plan, now) {
                        events.push(MitigationEvent::Status {
                            alert_id,
                            status: PlanStatus::Acknowledged,
                            at: now,
                            latency: Some(latency),
                        });
                    }
                }
            }
            Reply::Error(reason) => {
                log::warn!("controller rejected `{command}` for alert {alert_id}: {reason}");
                if exchange.retry_at.is_none() {
                    let exchange = exchange.clone();
                    events.extend(self.attempt_failed(alert_id, exchange, now));
                }
            }
        }
        events
    }

    fn attempt_failed(&mut self, alert_id: AlertId, mut exchange: Exchange, at: Timestamp) -> Vec<MitigationEvent> {
        if exchange.attempt > self.policy.retries {
            self.exchanges.remove(&alert_id);
            let plan = self.plans.get_mut(&alert_id).expect("exchange has a plan");
            plan.status = PlanStatus::Failed;
            plan.failed_at = Some(at);
            return vec![MitigationEvent::Status {
                alert_id,
                status: PlanStatus::Failed,
                at,
                latency: None,
            }];
        }
        let backoff = self.policy.backoff_base * 2f64.powi(exchange.attempt as i32 - 1);
        exchange.retry_at = Some(at + backoff);
        self.exchanges.insert(alert_id, exchange);
        Vec::new()
    }

    /// Advances deadlines, retries and delayed withdrawals up to `now`.
    pub fn tick(&mut self, now: Timestamp) -> Vec<MitigationEvent> {
        let mut events = Vec::new();
        while let Some((alert_id, due)) = self.next_exchange_deadline().filter(|(_, due)| *due <= now) {
            let exchange = self.exchanges[&alert_id].clone();
            match exchange.retry_at {
                Some(_) => {
                    let commands = self.plans[&alert_id].commands();
                    self.outstanding.retain(|(a, _)| *a != Some(alert_id));
                    self.send(Some(alert_id), &commands, due, &mut events);
                    self.exchanges.insert(
                        alert_id,
                        Exchange {
                            attempt: exchange.attempt + 1,
                            sent_at: due,
                            awaiting: commands,
                            retry_at: None,
                        },
                    );
                }
                None => {
                    self.outstanding.retain(|(a, _)| *a != Some(alert_id));
                    events.extend(self.attempt_failed(alert_id, exchange, due));
                }
            }
        }
        let due: Vec<AlertId> = self
            .withdrawals
            .iter()
            .filter(|(_, at)| **at <= now)
            .map(|(id, _)| *id)
            .collect();
        for alert_id in due {
            let at = self.withdrawals.remove(&alert_id).expect("listed");
            let commands = self.plans[&alert_id].withdraw_commands();
            self.send(None, &commands, at, &mut events);
        }
        events
    }

    fn next_exchange_deadline(&self) -> Option<(AlertId, Timestamp)> {
        self.exchanges
            .iter()
            .map(|(id, ex)| {
                let due = ex.retry_at.unwrap_or(ex.sent_at + self.policy.ack_deadline);
                (*id, due)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Earliest time at which [`Mitigator::tick`] has work to do.
    pub fn next_wakeup(&self) -> Option<Timestamp> {
        let exchange = self.next_exchange_deadline().map(|(_, t)| t);
        let withdrawal = self.withdrawals.values().copied().reduce(f64::min);
        match (exchange, withdrawal) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Marks an acknowledged plan complete.
    pub fn complete(&mut self, alert_id: AlertId, completed_at: Timestamp, now: Timestamp) -> Option<MitigationEvent> {
        let plan = self.plans.get_mut(&alert_id)?;
        if plan.status != PlanStatus::Acknowledged {
            return None;
        }
        plan.status = PlanStatus::Complete;
        plan.completed_at = Some(completed_at);
        Some(MitigationEvent::Status {
            alert_id,
            status: PlanStatus::Complete,
            at: now,
            latency: None,
        })
    }

    /// Schedules withdrawal of the plan's sub-prefixes after the linger time.
    pub fn alert_resolved(&mut self, alert_id: AlertId, at: Timestamp) {
        if self
            .plans
            .get(&alert_id)
            .is_some_and(|p| p.status == PlanStatus::Complete)
        {
            self.withdrawals.insert(alert_id, at + self.linger);
        }
    }
}
