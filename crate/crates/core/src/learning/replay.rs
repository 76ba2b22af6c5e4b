//! Bounded FIFO replay store with uniform sampling.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::JointAction;
use crate::neural::StateEncoding;
use crate::task::ChessboardState;

/// One interaction record: state, joint action, both rewards, next state,
/// terminal flag. Encodings ride along so minibatch assembly never has to
/// re-encode.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: ChessboardState,
    pub encoding: StateEncoding,
    pub action: JointAction,
    pub r_leader: f64,
    pub r_follower: f64,
    pub next_state: ChessboardState,
    pub next_encoding: StateEncoding,
    pub done: bool,
}

/// Bounded FIFO of transitions. Eviction is oldest-first; sampling is
/// uniform with replacement over the current contents, driven by the
/// buffer's own rng so sampling never perturbs the environment stream.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> ReplayBuffer {
        ReplayBuffer { capacity, storage: VecDeque::with_capacity(capacity.min(1 << 20)), rng }
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

    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(transition);
    }

    /// `k` indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, k: usize) -> Vec<usize> {
        let n = self.storage.len();
        (0..k).map(|_| self.rng.gen_range(0..n)).collect()
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.storage[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }
}
