//! Experience replay: a ring buffer of joint transitions with uniform
//! with-replacement minibatch sampling driven by a caller-owned RNG.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("transition carries {got} agents, buffer expects {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("cannot sample from an empty replay buffer")]
    Empty,
}

/// One stored interaction: (s, a^{1..n}, r^{1..n}, s', terminal).
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; once full, the oldest entries are overwritten
/// first.
#[derive(Debug)]
pub struct ReplayBuffer {
    n_agents: usize,
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_agents: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { n_agents, capacity, storage: Vec::new(), cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.storage[index]
    }

    pub fn push(&mut self, t: Transition) -> Result<(), ReplayError> {
        if t.actions.len() != self.n_agents || t.rewards.len() != self.n_agents {
            return Err(ReplayError::ArityMismatch {
                expected: self.n_agents,
                got: t.actions.len().max(t.rewards.len()),
            });
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        Ok(())
    }

    /// `batch_size` uniform draws with replacement; deterministic given the
    /// RNG state. Returns indices so callers can assemble columns without
    /// cloning transitions.
    pub fn sample_indices(
        &self,
        batch_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<usize>, ReplayError> {
        if self.storage.is_empty() {
            return Err(ReplayError::Empty);
        }
        Ok((0..batch_size).map(|_| rng.random_range(0..self.storage.len())).collect())
    }

    pub fn sample_batch(
        &self,
        batch_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<&Transition>, ReplayError> {
        Ok(self.sample_indices(batch_size, rng)?.into_iter().map(|i| &self.storage[i]).collect())
    }
}
