use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{AgentRng, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experience<A> {
    pub t: u64,
    pub obs: [Scalar; 2],
    pub action: A,
    pub reward: Scalar,
    pub next_obs: [Scalar; 2],
}

/// Fixed-capacity ring buffer; the oldest experience is overwritten first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer<A> {
    capacity: usize,
    items: Vec<Experience<A>>,
    next: usize,
    last_t: Option<u64>,
}

impl<A: Copy> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "replay buffer capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            last_t: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Experiences must arrive in increasing time order.
    pub fn push(&mut self, exp: Experience<A>) -> Result<()> {
        if let Some(last) = self.last_t {
            if exp.t <= last {
                return Err(Error::Config(format!(
                    "replay experience at t={} arrived after t={last}",
                    exp.t
                )));
            }
        }
        self.last_t = Some(exp.t);
        if self.items.len() < self.capacity {
            self.items.push(exp);
        } else {
            self.items[self.next] = exp;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// Uniform sample of `batch` distinct stored experiences.
    pub fn sample(&self, rng: &mut AgentRng, batch: usize) -> Result<Vec<Experience<A>>> {
        if batch > self.items.len() {
            return Err(Error::Config(format!(
                "cannot sample {batch} experiences from a buffer holding {}",
                self.items.len()
            )));
        }
        Ok(index::sample(rng, self.items.len(), batch)
            .into_iter()
            .map(|i| self.items[i])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience<A>> {
        self.items.iter()
    }
}
