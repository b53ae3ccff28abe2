//! Replay storage, the sequence buffer for windowed actors, and exploration.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::world::Vec2;

pub const DEFAULT_REPLAY_CAPACITY: usize = 500_000;

/// One joint interaction step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub next_obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec2>,
    pub rewards: Vec<f64>,
    pub terminal: bool,
    /// World step index before the step was taken.
    pub step_index: usize,
    pub episode_index: usize,
}

impl Transition {
    pub fn n_agents(&self) -> usize {
        self.obs.len()
    }

    pub fn is_finite(&self) -> bool {
        let all = |v: &[f64]| v.iter().all(|x| x.is_finite());
        all(&self.state)
            && all(&self.next_state)
            && self.obs.iter().all(|o| all(o))
            && self.next_obs.iter().all(|o| all(o))
            && self.actions.iter().all(|a| a.is_finite())
            && all(&self.rewards)
    }
}

/// Fixed-capacity ring; the oldest element is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    storage: Vec<T>,
    capacity: usize,
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        }
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

    pub fn push(&mut self, element: T) {
        if self.storage.len() < self.capacity {
            self.storage.push(element);
        } else {
            self.storage[self.cursor] = element;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Element `i` counted from the oldest stored element.
    pub fn get(&self, i: usize) -> Option<&T> {
        if i >= self.storage.len() {
            return None;
        }
        let start = if self.storage.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        self.storage.get((start + i) % self.storage.len())
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        (0..self.len()).filter_map(move |i| self.get(i))
    }

    /// Uniform sample without replacement. `None` until at least `batch_size`
    /// elements are stored.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Option<Vec<&T>> {
        if batch_size == 0 || self.len() < batch_size {
            return None;
        }
        Some(
            index::sample(rng, self.len(), batch_size)
                .into_iter()
                .map(|i| &self.storage[i])
                .collect(),
        )
    }
}

/// The most recent `capacity` transitions of the current episode, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceWindow {
    items: VecDeque<Arc<Transition>>,
    capacity: usize,
}

impl SequenceWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "sequence length must be positive");
        SequenceWindow {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
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

    pub fn push(&mut self, transition: Arc<Transition>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
    }

    pub fn reset(&mut self) {
        self.items.clear();
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.items.iter().map(|t| t.as_ref())
    }

    pub fn last(&self) -> Option<&Transition> {
        self.items.back().map(|t| t.as_ref())
    }

    /// Agent `agent`'s observations, oldest first, left-padded to the window
    /// capacity by repeating the oldest one. Empty if the window is empty.
    pub fn observation_window(&self, agent: usize) -> Vec<&[f64]> {
        self.padded(|t| t.obs[agent].as_slice())
    }

    /// The window the actor would see one step later: stored observations
    /// shifted by one, ending with the final transition's next observation.
    pub fn next_observation_window(&self, agent: usize) -> Vec<&[f64]> {
        match self.last() {
            Some(last) => acting_window(self, agent, &last.next_obs[agent]),
            None => Vec::new(),
        }
    }

    fn padded<'a>(&'a self, pick: impl Fn(&'a Transition) -> &'a [f64]) -> Vec<&'a [f64]> {
        let Some(first) = self.items.front() else {
            return Vec::new();
        };
        let pad = self.capacity - self.items.len();
        std::iter::repeat_n(pick(first), pad)
            .chain(self.items.iter().map(|t| pick(t)))
            .collect()
    }

    /// Consecutive step indices within a single episode.
    pub fn is_contiguous(&self) -> bool {
        self.items
            .iter()
            .zip(self.items.iter().skip(1))
            .all(|(a, b)| a.episode_index == b.episode_index && b.step_index == a.step_index + 1)
    }
}

/// Acting-time observation window: the observations of up to `len - 1` stored
/// transitions followed by the current observation, left-padded by repetition.
pub fn acting_window<'a>(
    seq: &'a SequenceWindow,
    agent: usize,
    current: &'a [f64],
) -> Vec<&'a [f64]> {
    let len = seq.capacity();
    let history: Vec<&[f64]> = seq
        .transitions()
        .skip(seq.len().saturating_sub(len - 1))
        .map(|t| t.obs[agent].as_slice())
        .collect();
    let oldest = history.first().copied().unwrap_or(current);
    let pad = len - 1 - history.len();
    std::iter::repeat_n(oldest, pad)
        .chain(history)
        .chain(std::iter::once(current))
        .collect()
}

/// With probability `epsilon` draw a uniform action in [-1, 1]^2; otherwise add
/// N(0, noise_rate^2) per component. The result is clamped to [-1, 1].
pub fn explore(action: Vec2, rng: &mut impl Rng, epsilon: f64, noise_rate: f64) -> Vec2 {
    let noisy = if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Vec2::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
    } else if noise_rate > 0.0 {
        let normal = Normal::new(0.0, noise_rate).expect("noise rate is finite");
        Vec2::new(action.x + normal.sample(rng), action.y + normal.sample(rng))
    } else {
        action
    };
    Vec2::new(noisy.x.clamp(-1.0, 1.0), noisy.y.clamp(-1.0, 1.0))
}
