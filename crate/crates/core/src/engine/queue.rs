//! Deterministic timer queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Rank used to order events that fall on the same instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Completion = 0,
    Submission = 1,
    Timer = 2,
}

#[derive(Debug)]
struct Entry<T> {
    time: f64,
    kind: EventKind,
    seq: u64,
    payload: T,
}

impl<T> Entry<T> {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.seq.cmp(&other.seq))
    }
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap
        other.key_cmp(self)
    }
}

/// Pending events ordered by `(time, kind, insertion sequence)`.
#[derive(Debug)]
pub struct EventQueue<T> {
    heap: BinaryHeap<Entry<T>>,
    seq: u64,
    peak: usize,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), seq: 0, peak: 0 }
    }
}

impl<T> EventQueue<T> {
    pub fn push(&mut self, time: f64, kind: EventKind, payload: T) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Entry { time, kind, seq, payload });
        self.peak = self.peak.max(self.heap.len());
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    /// Pops the next event if it is due at exactly `time`.
    pub fn pop_at(&mut self, time: f64) -> Option<(EventKind, T)> {
        if self.heap.peek()?.time == time {
            self.heap.pop().map(|e| (e.kind, e.payload))
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Largest number of simultaneously pending events seen so far.
    pub fn peak_len(&self) -> usize {
        self.peak
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_times_break_ties_by_kind_then_insertion() {
        let mut q = EventQueue::default();
        q.push(1.0, EventKind::Timer, "t1");
        q.push(1.0, EventKind::Submission, "s1");
        q.push(0.5, EventKind::Timer, "early");
        q.push(1.0, EventKind::Submission, "s2");
        q.push(1.0, EventKind::Completion, "c");
        assert_eq!(q.peek_time(), Some(0.5));
        assert_eq!(q.pop_at(0.5).unwrap().1, "early");
        let order: Vec<_> = std::iter::from_fn(|| q.pop_at(1.0).map(|e| e.1)).collect();
        assert_eq!(order, ["c", "s1", "s2", "t1"]);
        assert_eq!(q.peak_len(), 5);
        assert!(q.is_empty());
    }
}
