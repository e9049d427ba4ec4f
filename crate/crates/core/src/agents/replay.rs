use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    pub s: T,
    pub a: Action,
    pub r: T,
    pub s_next: T,
}

/// Fixed-capacity FIFO of transitions; a push at capacity evicts the oldest.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<Transition<T>>,
}

impl<T: Copy> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        self.items.iter()
    }

    /// `n` distinct transitions drawn uniformly; `None` if fewer are stored.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Vec<Transition<T>>> {
        if n > self.items.len() {
            return None;
        }
        Some(
            index::sample(rng, self.items.len(), n)
                .into_iter()
                .map(|i| self.items[i])
                .collect(),
        )
    }
}
