//! Event-driven TTL cache with exact occupancy tracking.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::cache::model::CacheKind;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
}

impl Outcome {
    pub fn is_hit(self) -> bool {
        self == Outcome::Hit
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry<F> {
    expiry: F,
    /// TTL the entry was last armed with; kept for inter-arrival sampling.
    ttl: F,
    stamp: u64,
}

/// Min-heap key; stale heap records (superseded by a re-arm) are recognized
/// by their stamp and skipped on pop.
#[derive(Debug, Clone, Copy)]
struct Deadline<F> {
    expiry: F,
    stamp: u64,
    file: u32,
}

impl<F: Real> PartialEq for Deadline<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<F: Real> Eq for Deadline<F> {}
impl<F: Real> PartialOrd for Deadline<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<F: Real> Ord for Deadline<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the earliest expiry on
        // top; expiries are never NaN (timers are >= 0, clocks finite)
        other
            .expiry
            .partial_cmp(&self.expiry)
            .expect("expiry is never NaN")
            .then(other.stamp.cmp(&self.stamp))
    }
}

/// A single TTL cache: per-file timers, an expiry queue with lazy deletion,
/// and a clock. Entries whose expiry passed are evicted as the clock
/// advances; occupancy is always exact at the current clock.
#[derive(Debug, Clone)]
pub struct TtlCache<F> {
    kind: CacheKind,
    clock: F,
    entries: HashMap<u32, Entry<F>>,
    deadlines: BinaryHeap<Deadline<F>>,
    next_stamp: u64,
}

impl<F: Real> TtlCache<F> {
    pub fn new(kind: CacheKind) -> Self {
        TtlCache {
            kind,
            clock: F::zero(),
            entries: HashMap::new(),
            deadlines: BinaryHeap::new(),
            next_stamp: 0,
        }
    }

    pub fn kind(&self) -> CacheKind {
        self.kind
    }

    pub fn clock(&self) -> F {
        self.clock
    }

    /// Number of resident (unexpired) entries at the current clock.
    pub fn occupancy(&self) -> usize {
        self.entries.len()
    }

    /// Advance the clock to `now`, evicting every entry whose expiry has
    /// passed. `on_evict(expiry_time, occupancy_after)` fires once per
    /// eviction in time order, letting callers integrate occupancy exactly.
    pub fn advance(&mut self, now: F, mut on_evict: impl FnMut(F, usize)) {
        debug_assert!(now >= self.clock, "clock must not run backwards");
        while let Some(head) = self.deadlines.peek() {
            if head.expiry > now {
                break;
            }
            let head = *head;
            self.deadlines.pop();
            let live = matches!(self.entries.get(&head.file), Some(e) if e.stamp == head.stamp);
            if live {
                self.entries.remove(&head.file);
                on_evict(head.expiry, self.entries.len());
            }
        }
        self.clock = now;
    }

    /// Whether `file` would hit right now (entry present with expiry past
    /// the clock). Does not modify the cache.
    pub fn lookup(&self, file: u32) -> bool {
        matches!(self.entries.get(&file), Some(e) if e.expiry > self.clock)
    }

    /// Remaining TTL of a resident entry at the current clock.
    pub fn remaining_ttl(&self, file: u32) -> Option<F> {
        self.entries
            .get(&file)
            .filter(|e| e.expiry > self.clock)
            .map(|e| e.expiry - self.clock)
    }

    /// TTL the entry was last armed with.
    pub fn armed_ttl(&self, file: u32) -> Option<F> {
        self.entries
            .get(&file)
            .filter(|e| e.expiry > self.clock)
            .map(|e| e.ttl)
    }

    /// Serve a request for `file` at the current clock with timer `ttl`.
    ///
    /// Miss: the file is admitted with expiry `clock + ttl`. Hit on a reset
    /// cache: the expiry is re-armed to `clock + ttl`; on a non-reset cache
    /// the running timer is left alone. Call [`Self::advance`] to the
    /// request time first.
    pub fn serve(&mut self, file: u32, ttl: F) -> Outcome {
        debug_assert!(ttl >= F::zero(), "timers are nonnegative");
        let outcome = if self.lookup(file) { Outcome::Hit } else { Outcome::Miss };
        let arm = outcome == Outcome::Miss || self.kind == CacheKind::Reset;
        if arm {
            let expiry = self.clock + ttl;
            let stamp = self.next_stamp;
            self.next_stamp += 1;
            self.entries.insert(file, Entry { expiry, ttl, stamp });
            self.deadlines.push(Deadline { expiry, stamp, file });
        }
        outcome
    }

    /// Advance to `now` and serve, as one operation.
    pub fn handle_request(&mut self, file: u32, now: F, ttl: F) -> Outcome {
        self.advance(now, |_, _| {});
        self.serve(file, ttl)
    }

    /// Occupancy by exhaustive scan of the entry table; `advance` keeps the
    /// incremental count equal to this at all times.
    pub fn audit_occupancy(&self) -> usize {
        self.entries.values().filter(|e| e.expiry > self.clock).count()
    }
}
