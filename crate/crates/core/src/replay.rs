//! Transition storage with uniform replay sampling.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// One environment interaction, carrying the action taken one step earlier
/// (null at an episode start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub prev_action: Option<usize>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; once full, the oldest transition is evicted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(CoreError::invalid("ReplayBuffer", "capacity must be positive"));
        }
        Ok(ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            head: 0,
        })
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.head] = transition;
            self.head = (self.head + 1) % self.capacity;
        }
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

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Uniform indices with replacement; one RNG draw per index.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(CoreError::InsufficientData {
                context: "replay sample",
                need: 1,
                got: 0,
            });
        }
        Ok((0..n).map(|_| rng.gen_range(0..self.items.len())).collect())
    }

    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Result<Vec<&'a Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
