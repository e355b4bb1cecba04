//! The shared experience buffer.

use rand::Rng;

use crate::env::Observation;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Observation,
    pub a: usize,
    pub r: f64,
    pub s_next: Observation,
    /// True terminal: the target does not bootstrap from `s_next`.
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot the next push overwrites once the ring is full.
    head: usize,
    insert_count: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            insert_count: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn insert_count(&self) -> u64 {
        self.insert_count
    }

    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.head] = transition;
            self.head = (self.head + 1) % self.capacity;
        }
        self.insert_count += 1;
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.storage.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// `batch_size` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let len = self.storage.len();
        Ok((0..batch_size)
            .map(|_| &self.storage[rng.gen_range(0..len)])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use proptest::prelude::*;

    fn transition(tag: usize) -> Transition {
        Transition {
            s: Observation::one_hot(0, 1),
            a: tag,
            r: tag as f64,
            s_next: Observation::one_hot(0, 1),
            done: false,
        }
    }

    #[test]
    fn push_one() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        buf.push(transition(0));
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn evicts_oldest() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..4 {
            buf.push(transition(i));
        }
        assert_eq!(buf.len(), 3);
        let tags: Vec<usize> = buf.iter().map(|t| t.a).collect();
        assert_eq!(tags, vec![1, 2, 3]);
    }

    #[test]
    fn full_buffer_keeps_insertion_order() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        for i in 0..5 {
            buf.push(transition(i));
        }
        let tags: Vec<usize> = buf.iter().map(|t| t.a).collect();
        assert_eq!(tags, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_item_is_always_drawn() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        buf.push(transition(7));
        let mut rng = seeding::stream(0, &[]);
        let batch = buf.sample(4, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|t| t.a == 7));
    }

    #[test]
    fn empty_sample_rejected() {
        let buf = ReplayBuffer::new(5).unwrap();
        let mut rng = seeding::stream(0, &[]);
        assert!(matches!(buf.sample(1, &mut rng), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn same_seed_same_batch() {
        let mut buf = ReplayBuffer::new(50).unwrap();
        for i in 0..50 {
            buf.push(transition(i));
        }
        let a: Vec<usize> = buf
            .sample(16, &mut seeding::stream(5, &[]))
            .unwrap()
            .iter()
            .map(|t| t.a)
            .collect();
        let b: Vec<usize> = buf
            .sample(16, &mut seeding::stream(5, &[]))
            .unwrap()
            .iter()
            .map(|t| t.a)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_sampling_frequency() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            buf.push(transition(i));
        }
        let mut rng = seeding::stream(42, &[]);
        let mut counts = [0usize; 10];
        let draws = 100_000;
        for _ in 0..draws {
            counts[buf.sample(1, &mut rng).unwrap()[0].a] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() <= 0.01, "frequency {freq}");
        }
    }

    proptest! {
        #[test]
        fn len_and_contents_track_a_fifo(capacity in 1usize..20, pushes in 0usize..60) {
            let mut buf = ReplayBuffer::new(capacity).unwrap();
            for i in 0..pushes {
                buf.push(transition(i));
                prop_assert!(buf.len() <= capacity);
            }
            prop_assert_eq!(buf.len(), pushes.min(capacity));
            prop_assert_eq!(buf.insert_count(), pushes as u64);
            let expected: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
            let got: Vec<usize> = buf.iter().map(|t| t.a).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
