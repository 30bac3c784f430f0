use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How events scheduled for the same time and class are ordered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Insertion order.
    #[default]
    Fifo,
    /// Seeded random order, for fuzzing the protocol against event orderings.
    Shuffled,
}

struct Entry<E> {
    time: u64,
    class: u8,
    key: u64,
    seq: u64,
    event: E,
}

impl<E> Entry<E> {
    fn rank(&self) -> (u64, u8, u64, u64) {
        (self.time, self.class, self.key, self.seq)
    }
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.rank() == other.rank()
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
        self.rank().cmp(&other.rank())
    }
}

/// Time-ordered event queue: time, then class, then the tie-break key, then
/// insertion sequence.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    seq: u64,
    tie_break: TieBreak,
    rng: ChaCha8Rng,
}

impl<E> EventQueue<E> {
    pub fn new(tie_break: TieBreak, rng: ChaCha8Rng) -> Self {
        EventQueue { heap: BinaryHeap::new(), seq: 0, tie_break, rng }
    }

    pub fn fifo() -> Self {
        EventQueue::new(TieBreak::Fifo, ChaCha8Rng::seed_from_u64(0))
    }

    pub fn push(&mut self, time: u64, class: u8, event: E) {
        let key = match self.tie_break {
            TieBreak::Fifo => 0,
            TieBreak::Shuffled => self.rng.random(),
        };
        self.heap.push(Reverse(Entry { time, class, key, seq: self.seq, event }));
        self.seq += 1;
    }

    /// Permutes `items` under [`TieBreak::Shuffled`]; no-op otherwise.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        if self.tie_break == TieBreak::Shuffled {
            items.shuffle(&mut self.rng);
        }
    }

    pub fn pop(&mut self) -> Option<(u64, E)> {
        self.heap.pop().map(|Reverse(e)| (e.time, e.event))
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_then_class_then_insertion() {
        let mut q = EventQueue::fifo();
        q.push(10, 1, "c");
        q.push(5, 1, "a");
        q.push(10, 0, "b");
        q.push(10, 1, "d");
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|(_, e)| e).collect();
        assert_eq!(order, ["a", "b", "c", "d"]);
    }

    #[test]
    fn shuffled_keeps_time_order_and_is_seeded() {
        let run = |seed| {
            let mut q = EventQueue::new(TieBreak::Shuffled, ChaCha8Rng::seed_from_u64(seed));
            for i in 0..20 {
                q.push(i / 5, 0, i);
            }
            std::iter::from_fn(|| q.pop()).collect::<Vec<_>>()
        };
        let a = run(1);
        assert!(a.windows(2).all(|w| w[0].0 <= w[1].0));
        assert_eq!(a, run(1));
        assert_ne!(a, run(2));
    }
}
