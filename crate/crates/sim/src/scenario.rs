//! Three-phase hijack experiments against the engine.
//!
//! Phase 1: the legitimate origin announces the owned prefix and the network
//! runs to quiescence. Phase 2: the hijacker announces at `hijack_start`
//! seconds after that; monitors forward their vantage points' best-route
//! changes to the engine after their extra delay. Phase 3: the simulator acts
//! as the controller, injecting the engine's announcements from the
//! legitimate origin `ack_delay` seconds after each command and replying `ok`.
//!
//! Scenario file, `key = value` per line:
//!
//! ```text
//! name = reference
//! topology = reference.topo   # path relative to this file, or `random`
//! ases = 50                      # random topologies only
//! peering = 0.2
//! owned = 10.0.0.0/23
//! origin = 65001                 # or `random`
//! hijacker = 65002               # or `random`
//! hijack_prefix = 10.0.0.0/23    # defaults to the owned prefix
//! hijack_start = 60
//! ack_delay = 15
//! monitor = ris hijacker 45      # <source> <asn|origin|hijacker|random> <delay>
//! monitors = lg.monitors         # a monitor file, also relative
//! engine = engine.toml           # detection/mitigation/monitoring settings
//! budget = 1000000
//! seed = 1
//! ```

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::path::{Path, PathBuf};

use hijackguard_core::config::{ConfigError, EngineConfig};
use hijackguard_core::detection::{AlertState, OwnedPrefix, OwnedPrefixes};
use hijackguard_core::engine::Engine;
use hijackguard_core::events::EngineEvent;
use hijackguard_core::feed::{RouteObservation, SourceId};
use hijackguard_core::mitigation::{Command, PlanStatus, Reply};
use hijackguard_core::monitor::TimelineRecord;
use hijackguard_core::{Asn, IpPrefix};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bgp::{BestChange, Network, SimError};
use crate::topology::{generate, parse_monitors, GeneratorParams, MonitorSpec, Topology, TopologyError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("engine config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsChoice {
    Fixed(Asn),
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorAt {
    Fixed(Asn),
    Origin,
    Hijacker,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRule {
    pub source: String,
    pub at: MonitorAt,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Fixed(Topology),
    Random(GeneratorParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub topology: TopologySource,
    pub monitors: Vec<MonitorRule>,
    pub owned: IpPrefix,
    pub origin: AsChoice,
    pub hijacker: AsChoice,
    pub hijack_prefix: Option<IpPrefix>,
    /// Seconds after phase-1 quiescence, rounded up to a whole second.
    pub hijack_start: f64,
    pub ack_delay: f64,
    pub engine: EngineConfig,
    /// Maximum number of network events.
    pub budget: u64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(name: impl Into<String>, topology: TopologySource, owned: IpPrefix) -> Self {
        Scenario {
            name: name.into(),
            topology,
            monitors: Vec::new(),
            owned,
            origin: AsChoice::Random,
            hijacker: AsChoice::Random,
            hijack_prefix: None,
            hijack_start: 60.0,
            ack_delay: 15.0,
            engine: EngineConfig::with_owned(OwnedPrefixes::new(Vec::new()).expect("empty is valid")),
            budget: 2_000_000,
            seed: 0,
        }
    }

    /// A mitigable scenario on a seeded random topology of 10 to 200 ASes.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let ases = *(10..=200).collect::<Vec<usize>>().choose(&mut rng).expect("non-empty");
        let subprefix = seed % 3 == 2;
        let owned: IpPrefix = "10.0.0.0/22".parse().expect("literal");
        let mut s = Scenario::new(
            format!("random-{seed}"),
            TopologySource::Random(GeneratorParams {
                ases,
                ..GeneratorParams::default()
            }),
            owned,
        );
        if subprefix {
            s.hijack_prefix = Some("10.0.2.0/23".parse().expect("literal"));
        }
        for _ in 0..4 {
            s.monitors.push(MonitorRule {
                source: "ris".into(),
                at: MonitorAt::Random,
                delay: 45.0,
            });
            s.monitors.push(MonitorRule {
                source: "lg".into(),
                at: MonitorAt::Random,
                delay: 120.0,
            });
        }
        s.seed = seed;
        s
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Scenario::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let mut kv: Vec<(usize, &str, &str)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(ScenarioError::Parse {
                line: idx + 1,
                message: "expected `key = value`".into(),
            })?;
            kv.push((idx + 1, k.trim(), v.trim()));
        }
        let err = |line: usize, message: String| ScenarioError::Parse { line, message };
        let get = |key: &str| kv.iter().rev().find(|(_, k, _)| *k == key).map(|(l, _, v)| (*l, *v));
        let num = |key: &str| -> Result<Option<f64>, ScenarioError> {
            match get(key) {
                None => Ok(None),
                Some((line, v)) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite() && *x >= 0.0)
                    .map(Some)
                    .ok_or_else(|| err(line, format!("`{key}` must be a non-negative number"))),
            }
        };
        let prefix = |key: &str| -> Result<Option<IpPrefix>, ScenarioError> {
            match get(key) {
                None => Ok(None),
                Some((line, v)) => v.parse().map(Some).map_err(|e| err(line, format!("{key}: {e}"))),
            }
        };
        let choice = |key: &str| -> Result<AsChoice, ScenarioError> {
            match get(key) {
                None | Some((_, "random")) => Ok(AsChoice::Random),
                Some((line, v)) => v
                    .parse()
                    .map(AsChoice::Fixed)
                    .map_err(|e| err(line, format!("{key}: {e}"))),
            }
        };

        for (line, k, _) in &kv {
            const KEYS: &[&str] = &[
                "name",
                "topology",
                "ases",
                "peering",
                "owned",
                "origin",
                "hijacker",
                "hijack_prefix",
                "hijack_start",
                "ack_delay",
                "monitor",
                "monitors",
                "engine",
                "budget",
                "seed",
            ];
            if !KEYS.contains(k) {
                return Err(err(*line, format!("unknown key `{k}`")));
            }
        }

        let topology = match get("topology") {
            None | Some((_, "random")) => {
                let mut params = GeneratorParams::default();
                if let Some(n) = num("ases")? {
                    params.ases = n as usize;
                }
                if let Some(p) = num("peering")? {
                    params.peering = p.min(1.0);
                }
                TopologySource::Random(params)
            }
            Some((_, file)) => TopologySource::Fixed(Topology::parse(&read(&base.join(file))?)?),
        };
        let owned = prefix("owned")?.ok_or_else(|| ScenarioError::Invalid("`owned` is required".into()))?;
        let mut scenario = Scenario::new(get("name").map(|(_, v)| v).unwrap_or("scenario"), topology, owned);
        scenario.origin = choice("origin")?;
        scenario.hijacker = choice("hijacker")?;
        scenario.hijack_prefix = prefix("hijack_prefix")?;
        if let Some(v) = num("hijack_start")? {
            scenario.hijack_start = v;
        }
        if let Some(v) = num("ack_delay")? {
            scenario.ack_delay = v;
        }
        if let Some(v) = num("budget")? {
            scenario.budget = v as u64;
        }
        if let Some(v) = num("seed")? {
            scenario.seed = v as u64;
        }
        if let Some((_, file)) = get("engine") {
            scenario.engine = EngineConfig::load(&base.join(file))?;
        }
        for (line, k, v) in &kv {
            match *k {
                "monitor" => {
                    let fields: Vec<&str> = v.split_whitespace().collect();
                    let [source, at, delay] = fields.as_slice() else {
                        return Err(err(*line, "expected `monitor = <source> <asn> <delay>`".into()));
                    };
                    let at = match *at {
                        "origin" => MonitorAt::Origin,
                        "hijacker" => MonitorAt::Hijacker,
                        "random" => MonitorAt::Random,
                        asn => MonitorAt::Fixed(asn.parse().map_err(|e| err(*line, format!("{e}")))?),
                    };
                    let delay: f64 = delay
                        .parse()
                        .ok()
                        .filter(|d: &f64| d.is_finite() && *d >= 0.0)
                        .ok_or_else(|| err(*line, format!("bad delay `{delay}`")))?;
                    scenario.monitors.push(MonitorRule {
                        source: source.to_string(),
                        at,
                        delay,
                    });
                }
                "monitors" => {
                    for m in parse_monitors(&read(&base.join(v))?)? {
                        scenario.monitors.push(MonitorRule {
                            source: m.source,
                            at: MonitorAt::Fixed(m.asn),
                            delay: m.delay,
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(scenario)
    }

    /// Fixes the topology, roles and monitors for one seed.
    pub fn instantiate(&self, seed: u64) -> Result<Instance, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topology = match &self.topology {
            TopologySource::Fixed(t) => t.clone(),
            TopologySource::Random(params) => generate(params, seed),
        };
        let ases: Vec<Asn> = topology.ases().collect();
        let stubs = topology.stubs();
        let pick = |choice: AsChoice, rng: &mut ChaCha8Rng, exclude: Option<Asn>| -> Result<Asn, ScenarioError> {
            match choice {
                AsChoice::Fixed(a) if topology.contains(a) => Ok(a),
                AsChoice::Fixed(a) => Err(SimError::UnknownOrigin(a).into()),
                AsChoice::Random => {
                    let pool: Vec<Asn> = stubs
                        .iter()
                        .chain(&ases)
                        .copied()
                        .filter(|a| Some(*a) != exclude)
                        .collect();
                    let stubs_only: Vec<Asn> = pool.iter().copied().filter(|a| stubs.contains(a)).collect();
                    let pool = if stubs_only.is_empty() { pool } else { stubs_only };
                    pool.choose(rng)
                        .copied()
                        .ok_or_else(|| ScenarioError::Invalid("not enough ASes for distinct roles".into()))
                }
            }
        };
        let origin = pick(self.origin, &mut rng, None)?;
        let hijacker = pick(self.hijacker, &mut rng, Some(origin))?;
        if origin == hijacker {
            return Err(ScenarioError::Invalid("origin and hijacker are the same AS".into()));
        }
        let mut monitors = Vec::new();
        for rule in &self.monitors {
            let asn = match rule.at {
                MonitorAt::Fixed(a) if topology.contains(a) => a,
                MonitorAt::Fixed(a) => return Err(SimError::UnknownOrigin(a).into()),
                MonitorAt::Origin => origin,
                MonitorAt::Hijacker => hijacker,
                MonitorAt::Random => *ases.choose(&mut rng).expect("topology is non-empty"),
            };
            monitors.push(MonitorSpec {
                source: rule.source.clone(),
                asn,
                delay: rule.delay,
            });
        }
        let hijack_prefix = self.hijack_prefix.unwrap_or(self.owned);
        if !self.owned.contains(&hijack_prefix) {
            return Err(ScenarioError::Invalid(format!(
                "hijack prefix {hijack_prefix} is outside {}",
                self.owned
            )));
        }
        Ok(Instance {
            topology,
            origin,
            hijacker,
            monitors,
            hijack_prefix,
        })
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|error| ScenarioError::Io {
        path: path.to_path_buf(),
        error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub topology: Topology,
    pub origin: Asn,
    pub hijacker: Asn,
    pub monitors: Vec<MonitorSpec>,
    pub hijack_prefix: IpPrefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Mitigated,
    Unmitigable,
    NotDetected,
    /// Detected and commanded, but never fully converged.
    Unresolved,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub outcome: Outcome,
    /// Phase-1 quiescence time.
    pub t_converged_setup: f64,
    pub hijack_start: f64,
    /// Alert time minus hijack start.
    pub t_detect: Option<f64>,
    /// Controller announcement time minus alert time.
    pub t_command: Option<f64>,
    /// Completion minus controller announcement time.
    pub t_complete: Option<f64>,
    /// Completion minus hijack start.
    pub total: Option<f64>,
    /// Share of monitor vantage points whose longest-prefix-match origin
    /// over the owned space is legitimate at the end of the run.
    pub final_fraction: Option<f64>,
    pub network_events: u64,
}

/// Post-run checks of the simulator's own invariants.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    pub fixed_point: Vec<String>,
    pub valley_violations: usize,
    /// ASes where some address of the owned space does not resolve to the
    /// legitimate origin.
    pub lpm_failures: Vec<Asn>,
    pub ordering_ok: bool,
    pub evidence_ok: bool,
}

pub struct ScenarioRun {
    pub result: ScenarioResult,
    pub instance: Instance,
    pub events: Vec<EngineEvent>,
    pub timeline: Vec<TimelineRecord>,
    /// Best-route changes at monitored ASes, in time order.
    pub vantage_changes: Vec<BestChange>,
    pub audit: Audit,
    pub network: Network,
    pub engine: Engine,
}

#[derive(PartialEq)]
struct QKey(f64, u64);

impl Eq for QKey {}

impl PartialOrd for QKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

struct Harness {
    network: Network,
    engine: Engine,
    monitors: BTreeMap<Asn, Vec<MonitorSpec>>,
    observations: BinaryHeap<Reverse<(QKey, usize)>>,
    pending_obs: Vec<Option<RouteObservation>>,
    controller: BinaryHeap<Reverse<(QKey, usize)>>,
    pending_cmd: Vec<Option<Command>>,
    seq: u64,
    events: Vec<EngineEvent>,
    vantage_changes: Vec<BestChange>,
    origin: Asn,
    ack_delay: f64,
}

enum Next {
    Network,
    Controller,
    Observation,
    Wakeup(f64),
}

impl Harness {
    fn observe(&mut self, changes: Vec<BestChange>) {
        for change in changes {
            let Some(specs) = self.monitors.get(&change.asn) else {
                continue;
            };
            for spec in specs.clone() {
                let source = SourceId::new(spec.source.clone());
                let received = change.t + spec.delay;
                let obs = match &change.path {
                    Some(path) => RouteObservation::announce(
                        source,
                        spec.vantage_point(),
                        change.prefix,
                        path.clone(),
                        change.t,
                        received,
                    ),
                    None => RouteObservation::withdraw(source, spec.vantage_point(), change.prefix, change.t, received),
                };
                self.pending_obs.push(Some(obs));
                self.observations
                    .push(Reverse((QKey(received, self.seq), self.pending_obs.len() - 1)));
                self.seq += 1;
            }
            self.vantage_changes.push(change);
        }
    }

    fn drain_outbox(&mut self) {
        for (t, cmd) in self.engine.take_outbox() {
            self.pending_cmd.push(Some(cmd));
            self.controller.push(Reverse((
                QKey(t + self.ack_delay, self.seq),
                self.pending_cmd.len() - 1,
            )));
            self.seq += 1;
        }
    }

    fn next(&self) -> Option<(f64, Next)> {
        let mut best: Option<(f64, Next)> = None;
        let mut consider = |t: Option<f64>, n: Next| {
            if let Some(t) = t {
                if best.as_ref().is_none_or(|(b, _)| t < *b) {
                    best = Some((t, n));
                }
            }
        };
        consider(self.network.next_event_time(), Next::Network);
        consider(self.controller.peek().map(|Reverse((k, _))| k.0), Next::Controller);
        consider(self.observations.peek().map(|Reverse((k, _))| k.0), Next::Observation);
        let wake = self.engine.next_wakeup();
        consider(wake, Next::Wakeup(wake.unwrap_or_default()));
        best
    }

    fn step(&mut self) -> Result<bool, SimError> {
        let Some((_, next)) = self.next() else {
            return Ok(false);
        };
        match next {
            Next::Network => {
                let changes = self.network.step().expect("event pending");
                self.observe(changes);
            }
            Next::Controller => {
                let Reverse((QKey(t, _), idx)) = self.controller.pop().expect("peeked");
                let cmd = self.pending_cmd[idx].take().expect("once");
                let (prefix, on) = match cmd {
                    Command::Announce { prefix, .. } => (prefix, true),
                    Command::Withdraw { prefix } => (prefix, false),
                };
                self.network.originate(self.origin, prefix, t, on)?;
                let events = self.engine.on_reply(&Reply::ok(&cmd), t);
                self.events.extend(events);
                self.drain_outbox();
            }
            Next::Observation => {
                let Reverse((_, idx)) = self.observations.pop().expect("peeked");
                let obs = self.pending_obs[idx].take().expect("once");
                let events = self.engine.ingest(&obs);
                self.events.extend(events);
                self.drain_outbox();
            }
            Next::Wakeup(t) => {
                let events = self.engine.tick(t);
                self.events.extend(events);
                self.drain_outbox();
            }
        }
        Ok(true)
    }
}

/// Runs the three phases for `seed` (which picks topology, roles and
/// monitors where the scenario leaves them random).
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<ScenarioRun, ScenarioError> {
    let instance = scenario.instantiate(seed)?;
    // roles come from the scenario; only the mitigation switch is kept from the config
    let mut owned = OwnedPrefix::new(scenario.owned, [instance.origin]);
    if let Some(entry) = scenario.engine.owned.get(&scenario.owned) {
        owned.mitigation_enabled = entry.mitigation_enabled;
    }
    let mut config = scenario.engine.clone();
    config.owned = OwnedPrefixes::new(vec![owned]).map_err(|e| ScenarioError::Invalid(e.to_string()))?;

    let mut monitors: BTreeMap<Asn, Vec<MonitorSpec>> = BTreeMap::new();
    for m in &instance.monitors {
        monitors.entry(m.asn).or_default().push(m.clone());
    }
    let mut h = Harness {
        network: Network::new(instance.topology.clone()),
        engine: Engine::new(config),
        monitors,
        observations: BinaryHeap::new(),
        pending_obs: Vec::new(),
        controller: BinaryHeap::new(),
        pending_cmd: Vec::new(),
        seq: 0,
        events: Vec::new(),
        vantage_changes: Vec::new(),
        origin: instance.origin,
        ack_delay: scenario.ack_delay,
    };

    // phase 1
    h.network.originate(instance.origin, scenario.owned, 0.0, true)?;
    let changes = h.network.run_to_quiescence(scenario.budget)?;
    h.observe(changes);
    let t_setup = h.network.now();

    // phases 2 and 3
    let hijack_start = t_setup.ceil() + scenario.hijack_start;
    h.network
        .originate(instance.hijacker, instance.hijack_prefix, hijack_start, true)?;
    loop {
        if h.network.processed() > scenario.budget {
            return Err(SimError::ScenarioStalled {
                budget: scenario.budget,
            }
            .into());
        }
        let resolved = h.engine.alerts().any(|a| a.state == AlertState::Resolved);
        if resolved || !h.step()? {
            break;
        }
    }
    let remaining = scenario.budget.saturating_sub(h.network.processed());
    let tail = h.network.run_to_quiescence(remaining)?;
    h.vantage_changes
        .extend(tail.into_iter().filter(|c| h.monitors.contains_key(&c.asn)));

    let result = summarize(&h, &instance, scenario, t_setup, hijack_start);
    let audit = audit(&h, &instance, scenario, &result);
    let timeline = h.engine.timeline().to_vec();
    Ok(ScenarioRun {
        result,
        instance,
        events: h.events,
        timeline,
        vantage_changes: h.vantage_changes,
        audit,
        network: h.network,
        engine: h.engine,
    })
}

fn summarize(h: &Harness, instance: &Instance, scenario: &Scenario, t_setup: f64, hijack_start: f64) -> ScenarioResult {
    let alert = h.engine.alerts().next();
    let plan = alert.and_then(|a| h.engine.plan(a.id));
    let unmitigable = h.events.iter().any(|e| matches!(e, EngineEvent::Unmitigable { .. }));
    let t_detect = alert.map(|a| a.detected_at - hijack_start);
    let t_command = match (alert, plan.and_then(|p| p.acknowledged_at)) {
        (Some(a), Some(ack)) => Some(ack - a.detected_at),
        _ => None,
    };
    let completed_at = plan.and_then(|p| p.completed_at);
    let t_complete = match (plan.and_then(|p| p.acknowledged_at), completed_at) {
        (Some(ack), Some(done)) => Some(done - ack),
        _ => None,
    };
    let outcome = match (alert, plan) {
        (None, _) => Outcome::NotDetected,
        (Some(_), None) if unmitigable => Outcome::Unmitigable,
        (Some(_), Some(p)) if p.status == PlanStatus::Failed => Outcome::Failed,
        (Some(_), Some(p)) if p.status == PlanStatus::Complete => Outcome::Mitigated,
        _ => Outcome::Unresolved,
    };

    let legit: BTreeSet<Asn> = [instance.origin].into();
    let mut total = 0;
    let mut good = 0;
    for asn in h.monitors.keys() {
        let origins = h.network.lpm_origins(*asn, &scenario.owned);
        if origins.iter().all(Option::is_none) {
            continue;
        }
        total += h.monitors[asn].len();
        if origins.iter().all(|o| o.is_some_and(|o| legit.contains(&o))) {
            good += h.monitors[asn].len();
        }
    }
    ScenarioResult {
        outcome,
        t_converged_setup: t_setup,
        hijack_start,
        t_detect,
        t_command,
        t_complete,
        total: completed_at.map(|c| c - hijack_start),
        final_fraction: (total > 0).then(|| good as f64 / total as f64),
        network_events: h.network.processed(),
    }
}

fn audit(h: &Harness, instance: &Instance, scenario: &Scenario, result: &ScenarioResult) -> Audit {
    let lpm_failures = if result.outcome == Outcome::Mitigated {
        instance
            .topology
            .ases()
            .filter(|asn| {
                !h.network
                    .lpm_origins(*asn, &scenario.owned)
                    .iter()
                    .all(|o| *o == Some(instance.origin))
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut ordering_ok = true;
    let mut evidence_ok = true;
    for alert in h.engine.alerts() {
        evidence_ok &= !alert.evidence.is_empty()
            && alert
                .evidence
                .iter()
                .all(|o| o.origin().is_some_and(|a| !alert.owned.is_legitimate(a)));
        if let Some(plan) = h.engine.plan(alert.id) {
            if let (Some(cmd), Some(done)) = (plan.commanded_at, plan.completed_at) {
                ordering_ok &= alert.detected_at <= cmd && cmd <= done;
            }
        }
    }
    Audit {
        fixed_point: h.network.fixed_point_violations(),
        valley_violations: h.network.valley_violations().len(),
        lpm_failures,
        ordering_ok,
        evidence_ok,
    }
}
