use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// Simulation time in microseconds.
pub type Micros = u64;

pub const SECOND: Micros = 1_000_000;

pub fn seconds(s: f64) -> Micros {
    (s * SECOND as f64).round() as Micros
}

pub fn as_seconds(t: Micros) -> f64 {
    t as f64 / SECOND as f64
}

struct Entry<E> {
    time: Micros,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Min-queue on (time, insertion order).
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    next_seq: u64,
    now: Micros,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0, now: 0 }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Events in the past are clamped to the current time.
    pub fn push(&mut self, time: Micros, event: E) {
        let time = time.max(self.now);
        self.heap.push(Reverse(Entry { time, seq: self.next_seq, event }));
        self.next_seq += 1;
    }

    pub fn push_in(&mut self, delay: Micros, event: E) {
        self.push(self.now + delay, event);
    }

    pub fn peek_time(&self) -> Option<Micros> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn pop(&mut self) -> Option<(Micros, E)> {
        let Reverse(entry) = self.heap.pop()?;
        self.now = entry.time;
        Some((entry.time, entry.event))
    }

    /// Move the clock forward without an event.
    pub fn advance_to(&mut self, time: Micros) {
        self.now = self.now.max(time);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        q.push(5, 'b');
        q.push(3, 'a');
        q.push(5, 'c');
        q.push(5, 'd');
        let order: Vec<char> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, vec!['a', 'b', 'c', 'd']);
    }

    #[test]
    fn past_events_are_clamped() {
        let mut q = EventQueue::new();
        q.push(10, 1);
        q.pop();
        q.push(4, 2);
        assert_eq!(q.pop(), Some((10, 2)));
    }
}
