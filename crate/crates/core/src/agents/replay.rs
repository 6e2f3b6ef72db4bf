//! Fixed-capacity FIFO replay buffer with uniform sampling.

use super::AgentError;
use rand::Rng;

/// One stored interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Flattened hybrid action: partition ++ freq.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Ring buffer; eviction is strictly oldest-first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(4096)),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.data[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    /// `n` uniform draws with replacement. Errors while the buffer holds
    /// fewer than `n` transitions (the training loop skips learning until
    /// warmup is over).
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, AgentError> {
        if self.data.len() < n {
            return Err(AgentError::InsufficientData {
                have: self.data.len(),
                need: n,
            });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.data.len())).collect())
    }
}
