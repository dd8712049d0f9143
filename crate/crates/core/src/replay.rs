//! Episode records and the ring replay buffer.
//!
//! Episodes are stored compactly: the environment seed, the joint actions,
//! and the per-step reward terms. Observations, states, and masks are
//! regenerated deterministically from the seed when a batch is assembled,
//! which keeps a 5000-episode buffer small.

use rand::Rng;
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// One stored step: everything that cannot be regenerated by replaying the
/// environment.
#[derive(Debug, Clone)]
pub struct CompactStep {
    pub actions: Vec<usize>,
    /// Per-agent intrinsic rewards fixed at collection time.
    pub intrinsic: Vec<f64>,
    /// Index into the rule set of the rule that fired, per agent.
    pub matched_rule: Vec<Option<usize>>,
    pub reward_ex: f64,
    pub reward_shaped: f64,
}

#[derive(Debug, Clone)]
pub struct CompactEpisode {
    pub env_seed: u64,
    pub steps: Vec<CompactStep>,
    /// Extrinsic return, for cheap bookkeeping.
    pub return_ex: f64,
    pub won: bool,
}

impl CompactEpisode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// FIFO ring of episodes with uniform sampling of distinct entries.
pub struct ReplayBuffer {
    episodes: VecDeque<CompactEpisode>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer { episodes: VecDeque::with_capacity(capacity), capacity })
    }

    pub fn push(&mut self, episode: CompactEpisode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniformly sample `batch` distinct episodes.
    pub fn sample<'a>(&'a self, batch: usize, rng: &mut impl Rng) -> Result<Vec<&'a CompactEpisode>> {
        if batch == 0 || batch > self.episodes.len() {
            return Err(Error::InvalidInput(format!(
                "cannot sample {batch} episodes from a buffer of {}",
                self.episodes.len()
            )));
        }
        let idx = rand::seq::index::sample(rng, self.episodes.len(), batch);
        Ok(idx.iter().map(|i| &self.episodes[i]).collect())
    }
}
