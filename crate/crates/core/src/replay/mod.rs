//! Experience replay with episode-aware history windows.

mod history;

use rand::Rng;

pub use history::{advance_live_history, HistoryWindow, WindowBatch};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub act: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub episode_id: u64,
    /// 1 for the first transition of an episode.
    pub step_in_episode: usize,
}

/// Minibatch of `(h_t, o_t, a_t, r_t, o_{t+1}, h_{t+1}, d_t)`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub current: WindowBatch,
    pub next: WindowBatch,
    pub act: Tensor,
    pub reward: Vec<f64>,
    pub done: Vec<f64>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.reward.len()
    }
}

/// Fixed-capacity FIFO of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    slots: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            slots: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn store(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim {
            return Err(Error::dim(
                "replay.store",
                &[t.obs.len(), t.next_obs.len()],
                &[self.obs_dim, self.obs_dim],
            ));
        }
        if t.act.len() != self.act_dim {
            return Err(Error::dim("replay.store", &[t.act.len()], &[self.act_dim]));
        }
        if t.step_in_episode == 0 {
            return Err(Error::Contract("step_in_episode starts at 1".into()));
        }
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            self.slots[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Transition `index` counted from the oldest stored one.
    pub fn get(&self, index: usize) -> &Transition {
        assert!(
            index < self.slots.len(),
            "replay index {index} out of range"
        );
        &self.slots[(self.head + index) % self.slots.len()]
    }

    /// History window `h_t^l` preceding the transition at `index`.
    ///
    /// Walks back through earlier transitions of the same episode, stopping
    /// at the episode start or the oldest stored transition.
    pub fn history_at(&self, index: usize, len: usize) -> HistoryWindow {
        let mut w = HistoryWindow::empty(len, self.obs_dim, self.act_dim);
        if len == 0 {
            return w;
        }
        let episode = self.get(index).episode_id;
        let mut back = 0;
        while back < len && back < index && self.get(index - back - 1).episode_id == episode {
            back += 1;
        }
        for i in index - back..index {
            let t = self.get(i);
            w = w.advanced(&t.obs, &t.act);
        }
        w
    }

    /// Uniform sampling with replacement of `n` transitions with their
    /// current and next history windows.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        n: usize,
        len: usize,
        rng: &mut R,
    ) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::Contract(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        self.batch_from_indices(&indices, len)
    }

    pub fn batch_from_indices(&self, indices: &[usize], len: usize) -> Result<Batch> {
        let mut obs = Vec::with_capacity(indices.len());
        let mut next_obs = Vec::with_capacity(indices.len());
        let mut windows = Vec::with_capacity(indices.len());
        let mut next_windows = Vec::with_capacity(indices.len());
        let mut act = Vec::with_capacity(indices.len() * self.act_dim);
        let mut reward = Vec::with_capacity(indices.len());
        let mut done = Vec::with_capacity(indices.len());
        for &i in indices {
            let t = self.get(i);
            let h = self.history_at(i, len);
            next_windows.push(h.advanced(&t.obs, &t.act));
            windows.push(h);
            obs.push(t.obs.as_slice());
            next_obs.push(t.next_obs.as_slice());
            act.extend_from_slice(&t.act);
            reward.push(t.reward);
            done.push(if t.done { 1.0 } else { 0.0 });
        }
        Ok(Batch {
            current: WindowBatch::from_parts(&obs, &windows)?,
            next: WindowBatch::from_parts(&next_obs, &next_windows)?,
            act: Tensor::new(vec![indices.len(), self.act_dim], act)?,
            reward,
            done,
            indices: indices.to_vec(),
        })
    }
}
