//! Event-driven BGP propagation under Gao-Rexford policies.
//!
//! Every AS keeps, per prefix, the routes its neighbors last sent, its best
//! route, and what it last sent each neighbor. Updates travel over a link in
//! exactly the link's delay, so each link is FIFO.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use hijackguard_core::{AsPath, Asn, IpPrefix};
use thiserror::Error;

use crate::topology::{Relationship, Topology};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("no candidate routes")]
    NoCandidates,
    #[error("{0} is not part of the topology")]
    UnknownOrigin(Asn),
    #[error("no quiescence within the budget of {budget} events")]
    ScenarioStalled { budget: u64 },
}

/// Picks the best of `candidates`: highest relationship preference, then
/// shortest path, then lowest first-hop ASN. Returns its index.
pub fn decide(candidates: &[(AsPath, Relationship)]) -> Result<usize, SimError> {
    candidates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            b.1.preference()
                .cmp(&a.1.preference())
                .then(a.0.len().cmp(&b.0.len()))
                .then(a.0.first_hop().cmp(&b.0.first_hop()))
        })
        .map(|(i, _)| i)
        .ok_or(SimError::NoCandidates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learned {
    Local,
    From(Asn, Relationship),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BestRoute {
    /// The path this AS announces, starting with itself.
    pub path: AsPath,
    pub learned: Learned,
}

impl BestRoute {
    pub fn origin(&self) -> Asn {
        self.path.origin()
    }
}

#[derive(Debug, Clone, Default)]
struct PrefixRib {
    local: bool,
    // path as received, first hop is the neighbor
    candidates: BTreeMap<Asn, AsPath>,
    best: Option<BestRoute>,
    adj_out: BTreeMap<Asn, AsPath>,
}

/// A change of some AS's best route.
#[derive(Debug, Clone, PartialEq)]
pub struct BestChange {
    pub t: f64,
    pub asn: Asn,
    pub prefix: IpPrefix,
    pub path: Option<AsPath>,
}

#[derive(Debug, Clone)]
enum Payload {
    Deliver {
        from: Asn,
        to: Asn,
        prefix: IpPrefix,
        path: Option<AsPath>,
    },
    Originate {
        asn: Asn,
        prefix: IpPrefix,
        on: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, u64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    topology: Topology,
    ribs: BTreeMap<Asn, BTreeMap<IpPrefix, PrefixRib>>,
    queue: BinaryHeap<Reverse<(Key, usize)>>,
    payloads: Vec<Option<Payload>>,
    seq: u64,
    now: f64,
    processed: u64,
    valley_violations: Vec<AsPath>,
}

impl Network {
    pub fn new(topology: Topology) -> Self {
        Network {
            topology,
            ribs: BTreeMap::new(),
            queue: BinaryHeap::new(),
            payloads: Vec::new(),
            seq: 0,
            now: 0.0,
            processed: 0,
            valley_violations: Vec::new(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.queue.peek().map(|Reverse((k, _))| k.0)
    }

    /// Delivered paths that were not valley-free.
    pub fn valley_violations(&self) -> &[AsPath] {
        &self.valley_violations
    }

    fn schedule(&mut self, at: f64, payload: Payload) {
        self.payloads.push(Some(payload));
        self.queue.push(Reverse((Key(at, self.seq), self.payloads.len() - 1)));
        self.seq += 1;
    }

    /// Starts (or stops) originating `prefix` at `asn` at time `at`.
    pub fn originate(&mut self, asn: Asn, prefix: IpPrefix, at: f64, on: bool) -> Result<(), SimError> {
        if !self.topology.contains(asn) {
            return Err(SimError::UnknownOrigin(asn));
        }
        self.schedule(at, Payload::Originate { asn, prefix, on });
        Ok(())
    }

    pub fn best(&self, asn: Asn, prefix: &IpPrefix) -> Option<&BestRoute> {
        self.ribs.get(&asn)?.get(prefix)?.best.as_ref()
    }

    /// Best routes held by `asn`, by prefix.
    pub fn table(&self, asn: Asn) -> impl Iterator<Item = (IpPrefix, &BestRoute)> {
        self.ribs
            .get(&asn)
            .into_iter()
            .flat_map(|rib| rib.iter())
            .filter_map(|(p, r)| r.best.as_ref().map(|b| (*p, b)))
    }

    /// Processes the next event; returns the best-route changes it caused.
    pub fn step(&mut self) -> Option<Vec<BestChange>> {
        let Reverse((Key(t, _), idx)) = self.queue.pop()?;
        let payload = self.payloads[idx].take().expect("each event runs once");
        self.now = t;
        self.processed += 1;
        let mut changes = Vec::new();
        match payload {
            Payload::Originate { asn, prefix, on } => {
                self.ribs.entry(asn).or_default().entry(prefix).or_default().local = on;
                self.recompute(asn, prefix, &mut changes);
            }
            Payload::Deliver { from, to, prefix, path } => {
                let path = path.filter(|p| !p.contains(to));
                if let Some(path) = &path {
                    if !valley_free(&self.topology, &path.prepend(to)) {
                        self.valley_violations.push(path.prepend(to));
                    }
                }
                let rib = self.ribs.entry(to).or_default().entry(prefix).or_default();
                match path {
                    Some(path) => rib.candidates.insert(from, path),
                    None => rib.candidates.remove(&from),
                };
                self.recompute(to, prefix, &mut changes);
            }
        }
        if self.payloads.len() > 4096 && self.queue.is_empty() {
            self.payloads.clear();
        }
        Some(changes)
    }

    /// Runs until no events remain.
    pub fn run_to_quiescence(&mut self, budget: u64) -> Result<Vec<BestChange>, SimError> {
        let start = self.processed;
        let mut changes = Vec::new();
        while let Some(c) = self.step() {
            changes.extend(c);
            if self.processed - start > budget {
                return Err(SimError::ScenarioStalled { budget });
            }
        }
        Ok(changes)
    }

    fn select(&self, asn: Asn, rib: &PrefixRib) -> Option<BestRoute> {
        if rib.local {
            return Some(BestRoute {
                path: AsPath::new(vec![asn]).expect("non-empty"),
                learned: Learned::Local,
            });
        }
        let candidates: Vec<(AsPath, Relationship)> = rib
            .candidates
            .iter()
            .filter_map(|(n, p)| Some((p.clone(), self.topology.relationship(asn, *n)?)))
            .collect();
        let i = decide(&candidates).ok()?;
        let (path, rel) = &candidates[i];
        Some(BestRoute {
            path: path.prepend(asn),
            learned: Learned::From(path.first_hop(), *rel),
        })
    }

    fn exports(best: Option<&BestRoute>, neighbor: Asn, rel: Relationship) -> Option<AsPath> {
        let best = best?;
        let allowed = match best.learned {
            Learned::Local => true,
            // split horizon
            Learned::From(from, _) if from == neighbor => false,
            Learned::From(_, Relationship::Customer) => true,
            Learned::From(_, _) => rel == Relationship::Customer,
        };
        allowed.then(|| best.path.clone())
    }

    fn recompute(&mut self, asn: Asn, prefix: IpPrefix, changes: &mut Vec<BestChange>) {
        let rib = &self.ribs[&asn][&prefix];
        let best = self.select(asn, rib);
        if best == rib.best {
            return;
        }
        changes.push(BestChange {
            t: self.now,
            asn,
            prefix,
            path: best.as_ref().map(|b| b.path.clone()),
        });
        let mut sends = Vec::new();
        for n in self.topology.neighbors(asn) {
            let desired = Self::exports(best.as_ref(), n.asn, n.relationship);
            let current = rib.adj_out.get(&n.asn);
            if desired.as_ref() != current {
                sends.push((n.asn, n.delay, desired));
            }
        }
        let rib = self
            .ribs
            .get_mut(&asn)
            .and_then(|r| r.get_mut(&prefix))
            .expect("present");
        rib.best = best;
        for (neighbor, _, desired) in &sends {
            match desired {
                Some(p) => rib.adj_out.insert(*neighbor, p.clone()),
                None => rib.adj_out.remove(neighbor),
            };
        }
        let now = self.now;
        for (neighbor, delay, path) in sends {
            self.schedule(
                now + delay,
                Payload::Deliver {
                    from: asn,
                    to: neighbor,
                    prefix,
                    path,
                },
            );
        }
    }

    /// At quiescence, re-running the decision at every AS must change
    /// nothing and every Adj-RIB-Out must match the neighbor's view.
    pub fn fixed_point_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (asn, ribs) in &self.ribs {
            for (prefix, rib) in ribs {
                let best = self.select(*asn, rib);
                if best != rib.best {
                    out.push(format!("{asn} {prefix}: best route is not the decision outcome"));
                }
                if let Some(b) = &rib.best {
                    if b.path.hops()[1..].contains(asn) {
                        out.push(format!("{asn} {prefix}: best path {} loops", b.path));
                    }
                }
                for n in self.topology.neighbors(*asn) {
                    let desired = Self::exports(rib.best.as_ref(), n.asn, n.relationship);
                    if desired.as_ref() != rib.adj_out.get(&n.asn) {
                        out.push(format!("{asn} {prefix}: stale Adj-RIB-Out towards {}", n.asn));
                    }
                    let held = self
                        .ribs
                        .get(&n.asn)
                        .and_then(|r| r.get(prefix))
                        .and_then(|r| r.candidates.get(asn));
                    let expected = desired.filter(|p| !p.contains(n.asn));
                    if held != expected.as_ref() {
                        out.push(format!("{} {prefix}: candidate from {asn} out of sync", n.asn));
                    }
                }
            }
        }
        out
    }

    /// Origins that longest-prefix matching at `asn` yields across `space`.
    pub fn lpm_origins(&self, asn: Asn, space: &IpPrefix) -> BTreeSet<Option<Asn>> {
        let routes: Vec<(IpPrefix, Asn)> = self
            .table(asn)
            .filter(|(p, _)| space.overlaps(p))
            .map(|(p, b)| (p, b.origin()))
            .collect();
        let mut bounds: Vec<u64> = routes
            .iter()
            .flat_map(|(p, _)| [p.first() as u64, p.last() as u64 + 1])
            .chain([space.first() as u64, space.last() as u64 + 1])
            .filter(|b| *b >= space.first() as u64 && *b <= space.last() as u64 + 1)
            .collect();
        bounds.sort_unstable();
        bounds.dedup();
        bounds[..bounds.len() - 1]
            .iter()
            .map(|start| {
                routes
                    .iter()
                    .filter(|(p, _)| p.contains_addr(*start as u32))
                    .max_by_key(|(p, _)| p.len())
                    .map(|(_, o)| *o)
            })
            .collect()
    }
}

/// Whether `path` (receiver first, origin last) is valley-free: zero or more
/// customer-to-provider hops, at most one peer hop, then only
/// provider-to-customer hops.
pub fn valley_free(topology: &Topology, path: &AsPath) -> bool {
    let hops = path.hops();
    let mut descending = false;
    for pair in hops.windows(2).rev() {
        let (receiver, sender) = (pair[0], pair[1]);
        match topology.relationship(receiver, sender) {
            // the sender is the receiver's customer: an uphill hop
            Some(Relationship::Customer) if !descending => {}
            Some(Relationship::Peer) if !descending => descending = true,
            Some(Relationship::Provider) => descending = true,
            _ => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(hops: &[u32]) -> AsPath {
        AsPath::new(hops.iter().map(|a| Asn(*a)).collect()).unwrap()
    }

    #[test]
    fn decide_prefers_relationship_then_length_then_neighbor() {
        let c = vec![
            (path(&[2, 9]), Relationship::Provider),
            (path(&[3, 4, 5, 9]), Relationship::Customer),
        ];
        assert_eq!(decide(&c), Ok(1));
        let c = vec![(path(&[7, 9]), Relationship::Peer), (path(&[5, 9]), Relationship::Peer)];
        assert_eq!(decide(&c), Ok(1));
        assert_eq!(decide(&[]), Err(SimError::NoCandidates));
        assert_eq!(decide(&c[..1]), Ok(0));
    }

    #[test]
    fn decide_matches_exhaustive_ordering() {
        // enumerate every combination of class, length and first hop on small candidate sets
        let rels = [Relationship::Customer, Relationship::Peer, Relationship::Provider];
        let mut all = Vec::new();
        for r in rels {
            for len in 1..=3u32 {
                for first in [10u32, 11, 12] {
                    let mut hops = vec![first];
                    hops.extend((0..len).map(|i| 100 + i));
                    all.push((path(&hops), r));
                }
            }
        }
        for i in 0..all.len() {
            for j in 0..all.len() {
                for k in 0..all.len() {
                    let set = vec![all[i].clone(), all[j].clone(), all[k].clone()];
                    let chosen = &set[decide(&set).unwrap()];
                    for other in &set {
                        let better = other.1.preference() > chosen.1.preference()
                            || (other.1.preference() == chosen.1.preference()
                                && (other.0.len() < chosen.0.len()
                                    || (other.0.len() == chosen.0.len()
                                        && other.0.first_hop() < chosen.0.first_hop())));
                        assert!(!better, "{set:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn chain_golden() {
        // A provides B, B provides C; origin A
        let topo = Topology::parse("provider 1 2 1.5\nprovider 2 3 2.25\n").unwrap();
        let mut net = Network::new(topo);
        let p: IpPrefix = "10.0.0.0/23".parse().unwrap();
        net.originate(Asn(1), p, 0.0, true).unwrap();
        let changes = net.run_to_quiescence(1000).unwrap();
        let c = changes.iter().find(|c| c.asn == Asn(3)).unwrap();
        assert_eq!(c.t, 1.5 + 2.25);
        assert_eq!(c.path, Some(path(&[3, 2, 1])));
        assert_eq!(net.best(Asn(3), &p).unwrap().path, path(&[3, 2, 1]));
        assert!(net.fixed_point_violations().is_empty());
    }

    #[test]
    fn single_as_has_no_deliveries() {
        let topo = Topology::with_ases(Vec::new(), [Asn(1)]).unwrap();
        let mut net = Network::new(topo);
        net.originate(Asn(1), "10.0.0.0/23".parse().unwrap(), 0.0, true)
            .unwrap();
        let changes = net.run_to_quiescence(10).unwrap();
        assert_eq!(changes.len(), 1);
        assert_eq!(net.processed(), 1);
        assert_eq!(
            net.originate(Asn(2), "10.0.0.0/23".parse().unwrap(), 0.0, true),
            Err(SimError::UnknownOrigin(Asn(2)))
        );
    }

    #[test]
    fn peer_routes_do_not_climb() {
        // 1 and 2 peer; 3 is customer of 2; 4 is provider of 1
        let topo = Topology::parse("peer 1 2 1\nprovider 2 3 1\nprovider 4 1 1\n").unwrap();
        let mut net = Network::new(topo);
        let p: IpPrefix = "10.0.0.0/24".parse().unwrap();
        net.originate(Asn(3), p, 0.0, true).unwrap();
        net.run_to_quiescence(1000).unwrap();
        assert_eq!(net.best(Asn(1), &p).unwrap().path, path(&[1, 2, 3]));
        // learned over a peering link, never exported to the provider
        assert!(net.best(Asn(4), &p).is_none());
        assert!(net.valley_violations().is_empty());
    }

    #[test]
    fn withdrawal_clears_routes() {
        let topo = Topology::parse("provider 1 2 1\nprovider 1 3 1\n").unwrap();
        let mut net = Network::new(topo);
        let p: IpPrefix = "10.0.0.0/24".parse().unwrap();
        net.originate(Asn(2), p, 0.0, true).unwrap();
        net.run_to_quiescence(1000).unwrap();
        assert!(net.best(Asn(3), &p).is_some());
        net.originate(Asn(2), p, 10.0, false).unwrap();
        net.run_to_quiescence(1000).unwrap();
        assert!(net.best(Asn(3), &p).is_none());
        assert!(net.fixed_point_violations().is_empty());
    }

    #[test]
    fn valley_audit() {
        let topo = Topology::parse("provider 1 2 1\nprovider 1 3 1\npeer 2 3 1\nprovider 3 4 1\n").unwrap();
        // 4 <- 3 <- 1 <- 2: up from 2 to 1, down to 3, down to 4
        assert!(valley_free(&topo, &path(&[4, 3, 1, 2])));
        // 1 <- 3 <- 2: peer then up is a valley
        assert!(!valley_free(&topo, &path(&[1, 3, 2])));
        // 2 <- 1 <- 3 <- 4: up, up, down
        assert!(valley_free(&topo, &path(&[2, 1, 3, 4])));
        // no link between 4 and 2
        assert!(!valley_free(&topo, &path(&[4, 2])));
    }

    #[test]
    fn lpm_origins_over_space() {
        let topo = Topology::parse("provider 1 2 1\nprovider 1 3 1\n").unwrap();
        let mut net = Network::new(topo);
        let parent: IpPrefix = "10.0.0.0/23".parse().unwrap();
        net.originate(Asn(2), parent, 0.0, true).unwrap();
        net.originate(Asn(3), "10.0.1.0/24".parse().unwrap(), 0.0, true)
            .unwrap();
        net.run_to_quiescence(1000).unwrap();
        assert_eq!(net.lpm_origins(Asn(1), &parent), [Some(Asn(2)), Some(Asn(3))].into());
        assert_eq!(
            net.lpm_origins(Asn(1), &"10.0.1.0/24".parse().unwrap()),
            [Some(Asn(3))].into()
        );
        assert_eq!(
            net.lpm_origins(Asn(1), &"192.168.0.0/16".parse().unwrap()),
            [None].into()
        );
    }
}
