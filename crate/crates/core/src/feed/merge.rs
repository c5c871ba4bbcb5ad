use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::{DedupKey, RouteObservation};

/// Observations ordered by arrival with the stable (source, vantage point,
/// prefix) tiebreak and no duplicates under [`DedupKey`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationStream(Vec<RouteObservation>);

impl ObservationStream {
    pub fn as_slice(&self) -> &[RouteObservation] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<RouteObservation> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RouteObservation> {
        self.0.iter()
    }
}

impl IntoIterator for ObservationStream {
    type Item = RouteObservation;
    type IntoIter = std::vec::IntoIter<RouteObservation>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Merges finished streams. The same observation arriving through several
/// inputs is kept once, at its earliest arrival.
pub fn merge<I, S>(streams: I) -> ObservationStream
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = RouteObservation>,
{
    let mut all: Vec<RouteObservation> = streams.into_iter().flatten().collect();
    // stable: equal keys keep input order
    all.sort_by(RouteObservation::stream_order);
    let mut seen = HashSet::new();
    all.retain(|obs| seen.insert(obs.dedup_key()));
    ObservationStream(all)
}

struct Pending {
    seq: u64,
    obs: RouteObservation,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // reversed for the max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.obs.stream_order(&self.obs).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Incremental merge for observations that may arrive slightly out of order.
///
/// Observations are held until the newest arrival time seen is `window`
/// seconds past them, then released in stream order. Anything arriving after
/// a later observation was already released is passed through immediately
/// and counted in [`ReorderBuffer::late`].
pub struct ReorderBuffer {
    window: f64,
    heap: BinaryHeap<Pending>,
    seq: u64,
    newest: f64,
    last_released: Option<RouteObservation>,
    // TODO: expire keys older than the window so long-running live feeds do not grow this forever
    seen: HashSet<DedupKey>,
    late: u64,
    duplicates: u64,
}

impl ReorderBuffer {
    pub fn new(window: f64) -> Self {
        ReorderBuffer {
            window: window.max(0.0),
            heap: BinaryHeap::new(),
            seq: 0,
            newest: f64::NEG_INFINITY,
            last_released: None,
            seen: HashSet::new(),
            late: 0,
            duplicates: 0,
        }
    }

    /// Number of observations that arrived outside the reordering window.
    pub fn late(&self) -> u64 {
        self.late
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn push(&mut self, obs: RouteObservation) -> Vec<RouteObservation> {
        let is_late = obs.received_at < self.newest - self.window
            || self
                .last_released
                .as_ref()
                .is_some_and(|last| obs.stream_order(last) == Ordering::Less);
        if is_late {
            self.late += 1;
            let mut out = Vec::new();
            self.emit(obs, &mut out, false);
            return out;
        }
        self.newest = self.newest.max(obs.received_at);
        self.heap.push(Pending { seq: self.seq, obs });
        self.seq += 1;
        self.release(self.newest - self.window)
    }

    /// Releases everything still held.
    pub fn flush(&mut self) -> Vec<RouteObservation> {
        self.release(f64::INFINITY)
    }

    fn release(&mut self, horizon: f64) -> Vec<RouteObservation> {
        let mut out = Vec::new();
        while self.heap.peek().is_some_and(|top| top.obs.received_at <= horizon) {
            let Pending { obs, .. } = self.heap.pop().expect("peeked");
            self.emit(obs, &mut out, true);
        }
        out
    }

    fn emit(&mut self, obs: RouteObservation, out: &mut Vec<RouteObservation>, in_order: bool) {
        if !self.seen.insert(obs.dedup_key()) {
            self.duplicates += 1;
            return;
        }
        if in_order {
            self.last_released = Some(obs.clone());
        }
        out.push(obs);
    }
}
