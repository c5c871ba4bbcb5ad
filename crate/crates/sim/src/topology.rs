//! AS-level topologies: relationships, per-link delays, monitors.
//!
//! Topology file:
//!
//! ```text
//! # provider <provider> <customer> <delay_s>
//! provider 1 10 2.5
//! # peer <a> <b> <delay_s>
//! peer 10 11 1.0
//! ```
//!
//! Monitor file: `monitor <source_id> <asn> <extra_delay_s>`, one vantage
//! point per line.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use hijackguard_core::Asn;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("link {0}-{1} connects an AS to itself")]
    SelfLink(Asn, Asn),
    #[error("relationship between {0} and {1} defined twice")]
    DuplicateLink(Asn, Asn),
    #[error("link {0}-{1} has non-positive delay {2}")]
    BadDelay(Asn, Asn, f64),
    #[error("topology is not connected: {0} unreachable from {1}")]
    Disconnected(Asn, Asn),
    #[error("topology has no ASes")]
    Empty,
    #[error("{0} is not part of the topology")]
    UnknownAs(Asn),
}

/// How a neighbor relates to the local AS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relationship {
    /// The neighbor is our customer.
    Customer,
    Peer,
    /// The neighbor is our provider.
    Provider,
}

impl Relationship {
    pub fn preference(self) -> u32 {
        match self {
            Relationship::Customer => 200,
            Relationship::Peer => 100,
            Relationship::Provider => 50,
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Relationship::Customer => Relationship::Provider,
            Relationship::Peer => Relationship::Peer,
            Relationship::Provider => Relationship::Customer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkKind {
    /// `a` is the provider of `b`.
    ProviderOf,
    Peer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: Asn,
    pub b: Asn,
    pub kind: LinkKind,
    pub delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub asn: Asn,
    pub relationship: Relationship,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    links: Vec<Link>,
    adjacency: BTreeMap<Asn, Vec<Neighbor>>,
}

impl Topology {
    /// Validates the links: no self-links, one relationship per pair,
    /// positive delays, connected.
    pub fn new(links: Vec<Link>) -> Result<Self, TopologyError> {
        Self::with_ases(links, [])
    }

    /// Like [`Topology::new`], also admitting isolated ASes (only valid
    /// when the topology has exactly one AS).
    pub fn with_ases(links: Vec<Link>, extra: impl IntoIterator<Item = Asn>) -> Result<Self, TopologyError> {
        let mut adjacency: BTreeMap<Asn, Vec<Neighbor>> = BTreeMap::new();
        let mut pairs = BTreeSet::new();
        for asn in extra {
            adjacency.entry(asn).or_default();
        }
        for link in &links {
            if link.a == link.b {
                return Err(TopologyError::SelfLink(link.a, link.b));
            }
            if !(link.delay > 0.0 && link.delay.is_finite()) {
                return Err(TopologyError::BadDelay(link.a, link.b, link.delay));
            }
            if !pairs.insert((link.a.min(link.b), link.a.max(link.b))) {
                return Err(TopologyError::DuplicateLink(link.a, link.b));
            }
            let (rel_a, rel_b) = match link.kind {
                LinkKind::ProviderOf => (Relationship::Customer, Relationship::Provider),
                LinkKind::Peer => (Relationship::Peer, Relationship::Peer),
            };
            adjacency.entry(link.a).or_default().push(Neighbor {
                asn: link.b,
                relationship: rel_a,
                delay: link.delay,
            });
            adjacency.entry(link.b).or_default().push(Neighbor {
                asn: link.a,
                relationship: rel_b,
                delay: link.delay,
            });
        }
        for neighbors in adjacency.values_mut() {
            neighbors.sort_by_key(|n| n.asn);
        }
        let Some(&start) = adjacency.keys().next() else {
            return Err(TopologyError::Empty);
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(asn) = queue.pop_front() {
            for n in &adjacency[&asn] {
                if seen.insert(n.asn) {
                    queue.push_back(n.asn);
                }
            }
        }
        if let Some(missing) = adjacency.keys().find(|a| !seen.contains(a)) {
            return Err(TopologyError::Disconnected(*missing, start));
        }
        Ok(Topology { links, adjacency })
    }

    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut links = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| TopologyError::Syntax { line, message };
            let fields: Vec<&str> = content.split_whitespace().collect();
            let [kind, a, b, delay] = fields.as_slice() else {
                return Err(err("expected `provider|peer <a> <b> <delay_s>`".into()));
            };
            let kind = match *kind {
                "provider" => LinkKind::ProviderOf,
                "peer" => LinkKind::Peer,
                other => return Err(err(format!("unknown relationship `{other}`"))),
            };
            let a: Asn = a.parse().map_err(|e| err(format!("{e}")))?;
            let b: Asn = b.parse().map_err(|e| err(format!("{e}")))?;
            let delay: f64 = delay.parse().map_err(|_| err(format!("bad delay `{delay}`")))?;
            links.push(Link { a, b, kind, delay });
        }
        Topology::new(links)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for link in &self.links {
            let kind = match link.kind {
                LinkKind::ProviderOf => "provider",
                LinkKind::Peer => "peer",
            };
            out.push_str(&format!(
                "{kind} {} {} {}\n",
                link.a.value(),
                link.b.value(),
                link.delay
            ));
        }
        out
    }

    pub fn ases(&self) -> impl Iterator<Item = Asn> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.adjacency.contains_key(&asn)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn neighbors(&self, asn: Asn) -> &[Neighbor] {
        self.adjacency.get(&asn).map(Vec::as_slice).unwrap_or(&[])
    }

    /// How `neighbor` relates to `asn`, if they are linked.
    pub fn relationship(&self, asn: Asn, neighbor: Asn) -> Option<Relationship> {
        self.neighbors(asn)
            .iter()
            .find(|n| n.asn == neighbor)
            .map(|n| n.relationship)
    }

    /// ASes without customers.
    pub fn stubs(&self) -> Vec<Asn> {
        self.adjacency
            .iter()
            .filter(|(_, ns)| ns.iter().all(|n| n.relationship != Relationship::Customer))
            .map(|(a, _)| *a)
            .collect()
    }
}

/// Parameters for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams {
    pub ases: usize,
    /// Chance that an AS gets one extra peering link.
    pub peering: f64,
    /// Chance that an AS is multi-homed to two providers.
    pub multihoming: f64,
    pub min_delay: f64,
    pub max_delay: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            ases: 50,
            peering: 0.2,
            multihoming: 0.3,
            min_delay: 0.5,
            max_delay: 5.0,
        }
    }
}

/// First ASN handed out by the generator.
pub const GENERATED_ASN_BASE: u32 = 100;

/// Seeded random topology: a clique of tier-1 peers, every other AS buying
/// transit from one or two earlier ASes, plus random peering.
pub fn generate(params: &GeneratorParams, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.ases.max(1);
    let asn = |i: usize| Asn(GENERATED_ASN_BASE + i as u32);
    let tier1 = (3 + n / 50).min(n);
    let delay = |rng: &mut ChaCha8Rng| {
        let d = rng.random_range(params.min_delay..=params.max_delay);
        (d * 100.0).round().max(1.0) / 100.0
    };
    let mut links = Vec::new();
    let mut linked = BTreeSet::new();
    for i in 0..tier1 {
        for j in i + 1..tier1 {
            let d = delay(&mut rng);
            links.push(Link {
                a: asn(i),
                b: asn(j),
                kind: LinkKind::Peer,
                delay: d,
            });
            linked.insert((i, j));
        }
    }
    for i in tier1..n {
        let count = if i > 1 && rng.random_bool(params.multihoming) {
            2
        } else {
            1
        };
        let candidates: Vec<usize> = (0..i).collect();
        for &p in candidates.choose_multiple(&mut rng, count) {
            let d = delay(&mut rng);
            links.push(Link {
                a: asn(p),
                b: asn(i),
                kind: LinkKind::ProviderOf,
                delay: d,
            });
            linked.insert((p, i));
        }
    }
    for i in tier1..n {
        if !rng.random_bool(params.peering) {
            continue;
        }
        let j = rng.random_range(tier1..n);
        let pair = (i.min(j), i.max(j));
        if i == j || linked.contains(&pair) {
            continue;
        }
        let d = delay(&mut rng);
        links.push(Link {
            a: asn(pair.0),
            b: asn(pair.1),
            kind: LinkKind::Peer,
            delay: d,
        });
        linked.insert(pair);
    }
    Topology::with_ases(links, (0..n).map(asn)).expect("generated topologies are valid")
}

/// One vantage point of a monitor source.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSpec {
    pub source: String,
    pub asn: Asn,
    /// Seconds between the vantage point's route change and its report.
    pub delay: f64,
}

impl MonitorSpec {
    pub fn vantage_point(&self) -> String {
        format!("AS{}", self.asn.value())
    }
}

pub fn parse_monitors(text: &str) -> Result<Vec<MonitorSpec>, TopologyError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| TopologyError::Syntax { line, message };
        let fields: Vec<&str> = content.split_whitespace().collect();
        let ["monitor", source, asn, delay] = fields.as_slice() else {
            return Err(err("expected `monitor <source_id> <asn> <extra_delay_s>`".into()));
        };
        let asn: Asn = asn.parse().map_err(|e| err(format!("{e}")))?;
        let delay: f64 = delay.parse().map_err(|_| err(format!("bad delay `{delay}`")))?;
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(err(format!("bad delay `{delay}`")));
        }
        out.push(MonitorSpec {
            source: source.to_string(),
            asn,
            delay,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_renders() {
        let text = "# chain\nprovider 1 2 1.5\nprovider 2 3 2\npeer 3 4 0.5\n";
        let topo = Topology::parse(text).unwrap();
        assert_eq!(topo.len(), 4);
        assert_eq!(topo.relationship(Asn(1), Asn(2)), Some(Relationship::Customer));
        assert_eq!(topo.relationship(Asn(2), Asn(1)), Some(Relationship::Provider));
        assert_eq!(topo.relationship(Asn(3), Asn(4)), Some(Relationship::Peer));
        assert_eq!(Topology::parse(&topo.render()).unwrap(), topo);
        assert_eq!(topo.stubs(), vec![Asn(3), Asn(4)]);
    }

    #[test]
    fn rejects_invalid_topologies() {
        assert!(matches!(
            Topology::parse("provider 1 1 1"),
            Err(TopologyError::SelfLink(..))
        ));
        assert!(matches!(
            Topology::parse("provider 1 2 1\npeer 2 1 1"),
            Err(TopologyError::DuplicateLink(..))
        ));
        assert!(matches!(
            Topology::parse("peer 1 2 0"),
            Err(TopologyError::BadDelay(..))
        ));
        assert!(matches!(
            Topology::parse("peer 1 2 1\npeer 3 4 1"),
            Err(TopologyError::Disconnected(..))
        ));
        assert!(matches!(
            Topology::parse("sibling 1 2 1"),
            Err(TopologyError::Syntax { line: 1, .. })
        ));
        assert_eq!(Topology::parse(""), Err(TopologyError::Empty));
    }

    #[test]
    fn parses_monitors() {
        let m = parse_monitors("monitor ris 65001 45\n# lg\nmonitor lg AS3356 120.5\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].asn, Asn(3356));
        assert_eq!(m[1].vantage_point(), "AS3356");
        assert!(parse_monitors("monitor ris 65001").is_err());
        assert!(parse_monitors("monitor ris 65001 -1").is_err());
    }

    #[test]
    fn generator_is_seeded_and_connected() {
        let params = GeneratorParams {
            ases: 120,
            ..Default::default()
        };
        let a = generate(&params, 7);
        assert_eq!(a, generate(&params, 7));
        assert_ne!(a, generate(&params, 8));
        assert_eq!(a.len(), 120);
        let single = generate(&GeneratorParams { ases: 1, ..params }, 1);
        assert_eq!(single.len(), 1);
    }
}
