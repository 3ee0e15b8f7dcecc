use rand::Rng;

use crate::envs::Transition;

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    min_size_to_train: usize,
    items: Vec<Transition>,
    /// Slot the next insert overwrites once the ring is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, min_size_to_train: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            min_size_to_train,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_size_to_train(&self) -> usize {
        self.min_size_to_train
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ready(&self) -> bool {
        !self.items.is_empty() && self.items.len() >= self.min_size_to_train
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.head] = transition;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// Uniform sampling with replacement; `None` until the warmup size is reached.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, batch_size: usize) -> Option<Vec<&Transition>> {
        if !self.ready() {
            return None;
        }
        Some(
            (0..batch_size)
                .map(|_| &self.items[rng.gen_range(0..self.items.len())])
                .collect(),
        )
    }
}
