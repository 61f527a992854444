//! Prioritized experience replay backed by a sum tree.
//!
//! Transitions enter at the current maximum leaf priority so every
//! experience is replayed at least once before being down-weighted. Sampling
//! is stratified: the total priority mass is split into `batch` equal
//! segments with one uniform draw per segment.

use rand::Rng;
use thiserror::Error;

use crate::market_data::StateVector;
use crate::qnet::Action;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("requested batch of {batch} but only {stored} transitions stored")]
    NotEnoughStored { batch: usize, stored: usize },
    #[error("tree index {0} is stale or out of range")]
    BadIndex(usize),
    #[error("state and next_state encodings differ")]
    MixedRepresentation,
}

/// One environment step: (state, action, reward, next state, terminal).
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: Action,
    pub reward: f64,
    pub next_state: StateVector,
    pub terminal: bool,
}

/// Binary tree of prefix sums over leaf priorities. Leaf count is a power of
/// two; internal node `i` equals the sum of its children `2i+1` and `2i+2`.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    /// `capacity` is rounded up to the next power of two.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1).next_power_of_two();
        SumTree {
            capacity,
            nodes: vec![0.0; 2 * capacity - 1],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    pub fn leaf_priority(&self, leaf: usize) -> f64 {
        self.nodes[self.capacity - 1 + leaf]
    }

    /// Set a leaf priority and refresh the path to the root.
    pub fn set(&mut self, leaf: usize, priority: f64) {
        assert!(leaf < self.capacity, "leaf index out of range");
        assert!(priority >= 0.0 && priority.is_finite());
        let mut idx = self.capacity - 1 + leaf;
        let delta = priority - self.nodes[idx];
        self.nodes[idx] = priority;
        while idx > 0 {
            idx = (idx - 1) / 2;
            self.nodes[idx] += delta;
        }
    }

    /// Descend by prefix sum: returns the leaf whose cumulative interval
    /// contains `value` in `[0, total)`.
    pub fn find(&self, value: f64) -> usize {
        let mut idx = 0;
        let mut v = value;
        while idx < self.capacity - 1 {
            let left = 2 * idx + 1;
            if v < self.nodes[left] {
                idx = left;
            } else {
                v -= self.nodes[left];
                idx = left + 1;
            }
        }
        idx - (self.capacity - 1)
    }

    /// Re-verify the children-sum invariant on every internal node.
    pub fn verify(&self, tol: f64) -> bool {
        (0..self.capacity - 1).all(|i| {
            let s = self.nodes[2 * i + 1] + self.nodes[2 * i + 2];
            (self.nodes[i] - s).abs() <= tol * s.abs().max(1.0)
        })
    }
}

/// A batch drawn from the buffer with importance-sampling weights
/// normalized so the largest weight is exactly 1.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub transitions: Vec<Transition>,
    pub tree_indices: Vec<usize>,
    pub is_weights: Vec<f64>,
}

/// Proportional prioritized replay buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    tree: SumTree,
    slots: Vec<Option<Transition>>,
    write: usize,
    stored: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        let tree = SumTree::new(capacity);
        let cap = tree.capacity();
        ReplayBuffer {
            tree,
            slots: vec![None; cap],
            write: 0,
            stored: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.stored
    }

    pub fn is_empty(&self) -> bool {
        self.stored == 0
    }

    pub fn capacity(&self) -> usize {
        self.tree.capacity()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Store a transition at the write cursor with the current maximum leaf
    /// priority (1.0 when the buffer is empty), overwriting the oldest entry
    /// once full.
    pub fn push(&mut self, t: Transition) -> Result<(), ReplayError> {
        if t.state.representation != t.next_state.representation
            || t.state.dimension() != t.next_state.dimension()
        {
            return Err(ReplayError::MixedRepresentation);
        }
        self.push_unchecked(t);
        Ok(())
    }

    fn push_unchecked(&mut self, t: Transition) {
        let max_p = (0..self.capacity())
            .filter(|&i| self.slots[i].is_some())
            .map(|i| self.tree.leaf_priority(i))
            .fold(0.0, f64::max);
        let priority = if max_p > 0.0 { max_p } else { 1.0 };
        self.slots[self.write] = Some(t);
        self.tree.set(self.write, priority);
        self.write = (self.write + 1) % self.capacity();
        self.stored = (self.stored + 1).min(self.capacity());
    }

    /// Stratified proportional sampling with importance weights
    /// `w_i = (N * P(i))^(-beta)` normalized by the batch maximum.
    pub fn sample(
        &self,
        batch: usize,
        beta: f64,
        rng: &mut impl Rng,
    ) -> Result<SampleBatch, ReplayError> {
        if self.stored < batch {
            return Err(ReplayError::NotEnoughStored {
                batch,
                stored: self.stored,
            });
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        let n = self.stored as f64;
        let mut transitions = Vec::with_capacity(batch);
        let mut tree_indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for i in 0..batch {
            let lo = segment * i as f64;
            let hi = segment * (i + 1) as f64;
            let draw = rng.gen_range(lo..hi);
            let leaf = self.tree.find(draw.min(total * (1.0 - 1e-12)));
            let prob = self.tree.leaf_priority(leaf) / total;
            let w = (n * prob).powf(-beta);
            let t = self.slots[leaf]
                .as_ref()
                .ok_or(ReplayError::BadIndex(leaf))?
                .clone();
            transitions.push(t);
            tree_indices.push(leaf);
            weights.push(w);
        }
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in weights.iter_mut() {
            *w /= max_w;
        }
        Ok(SampleBatch {
            transitions,
            tree_indices,
            is_weights: weights,
        })
    }

    /// Refresh the priorities of previously sampled leaves to
    /// `(|td_error| + eps)^alpha`.
    pub fn update_priorities(
        &mut self,
        indices: &[usize],
        td_errors: &[f64],
        alpha: f64,
        eps: f64,
    ) -> Result<(), ReplayError> {
        assert_eq!(indices.len(), td_errors.len());
        for (&leaf, &delta) in indices.iter().zip(td_errors) {
            if leaf >= self.capacity() || self.slots[leaf].is_none() {
                return Err(ReplayError::BadIndex(leaf));
            }
            self.tree.set(leaf, (delta.abs() + eps).powf(alpha));
        }
        Ok(())
    }
}
