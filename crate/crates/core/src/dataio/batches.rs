use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{CallTrajectory, DataError, Step};
use crate::features::OBS_DIM;
use crate::policy::from_bps;
use crate::scalar::Scalar;
use crate::seeds::{self, Stream};

/// All transitions of a dataset. Observations are stored once per step;
/// `next[i]` is the row of the successor observation. The last step of
/// every leg is terminal and points at itself.
#[derive(Debug, Clone)]
pub struct TransitionSet<T> {
    obs: Array2<T>,
    actions: Array1<T>,
    rewards: Array1<T>,
    next: Vec<usize>,
    done: Vec<bool>,
    leg: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TransitionBatch<T> {
    pub obs: Array2<T>,
    /// Normalized actions in `[-1, 1]`.
    pub actions: Array1<T>,
    pub rewards: Array1<T>,
    pub next_obs: Array2<T>,
    pub done: Vec<bool>,
    pub indices: Vec<usize>,
}

impl<T: Scalar> TransitionBatch<T> {
    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    /// `1 - done` as a scalar mask.
    pub fn not_done(&self) -> Array1<T> {
        self.done
            .iter()
            .map(|&d| if d { T::zero() } else { T::one() })
            .collect()
    }
}

impl<T: Scalar> TransitionSet<T> {
    pub fn new(
        obs: Array2<T>,
        actions: Array1<T>,
        rewards: Array1<T>,
        next: Vec<usize>,
        done: Vec<bool>,
        leg: Vec<usize>,
    ) -> Result<Self, DataError> {
        let n = obs.nrows();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if obs.ncols() != OBS_DIM {
            return Err(super::schema(
                "obs",
                format!("expected {OBS_DIM} columns, got {}", obs.ncols()),
            ));
        }
        for (name, len) in [
            ("actions", actions.len()),
            ("rewards", rewards.len()),
            ("next", next.len()),
            ("done", done.len()),
            ("leg", leg.len()),
        ] {
            if len != n {
                return Err(super::schema(name, format!("length {len} != {n}")));
            }
        }
        if let Some(i) = actions.iter().position(|a| !(a.abs() <= T::one())) {
            return Err(DataError::Range {
                path: format!("actions[{i}]"),
                value: actions[i].as_f64(),
                range: "[-1, 1]",
            });
        }
        if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(super::schema(format!("rewards[{i}]"), "non-finite reward"));
        }
        if let Some(i) = (0..n).find(|&i| next[i] >= n || leg[next[i]] != leg[i]) {
            return Err(super::schema(
                format!("next[{i}]"),
                "successor outside the leg",
            ));
        }
        Ok(Self {
            obs,
            actions,
            rewards,
            next,
            done,
            leg,
        })
    }

    /// Build transitions from call legs; `reward` maps a step to its scalar
    /// reward. Each leg of `n` steps yields `n - 1` ordinary transitions and
    /// one terminal transition.
    pub fn from_calls(
        calls: &[CallTrajectory],
        reward: impl Fn(&Step) -> f64,
    ) -> Result<Self, DataError> {
        let total: usize = calls.iter().map(|c| c.steps.len()).sum();
        if total == 0 {
            return Err(DataError::Empty);
        }
        let mut obs = Array2::<T>::zeros((total, OBS_DIM));
        let mut actions = Vec::with_capacity(total);
        let mut rewards = Vec::with_capacity(total);
        let mut next = Vec::with_capacity(total);
        let mut done = Vec::with_capacity(total);
        let mut leg = Vec::with_capacity(total);
        let mut row = 0;
        for (li, call) in calls.iter().enumerate() {
            call.validate().map_err(|e| match e {
                DataError::Schema { path, msg } => DataError::Schema {
                    path: format!("call {}: {path}", call.call_id),
                    msg,
                },
                DataError::Range { path, value, range } => DataError::Range {
                    path: format!("call {}: {path}", call.call_id),
                    value,
                    range,
                },
                other => other,
            })?;
            let n = call.steps.len();
            for (si, step) in call.steps.iter().enumerate() {
                for (dst, &v) in obs.row_mut(row).iter_mut().zip(&step.observation) {
                    *dst = T::lit(v);
                }
                let a = from_bps(step.bandwidth_prediction_bps).map_err(|e| DataError::Schema {
                    path: format!("call {}: bandwidth_predictions[{si}]", call.call_id),
                    msg: e.to_string(),
                })?;
                actions.push(T::lit(a.value()));
                let r = reward(step);
                if !r.is_finite() {
                    return Err(super::schema(
                        format!("call {}: step {si}", call.call_id),
                        "non-finite reward",
                    ));
                }
                rewards.push(T::lit(r));
                let last = si + 1 == n;
                next.push(if last { row } else { row + 1 });
                done.push(last);
                leg.push(li);
                row += 1;
            }
        }
        Self::new(
            obs,
            Array1::from(actions),
            Array1::from(rewards),
            next,
            done,
            leg,
        )
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    pub fn observations(&self) -> &Array2<T> {
        &self.obs
    }

    pub fn actions(&self) -> &Array1<T> {
        &self.actions
    }

    pub fn leg_of(&self, i: usize) -> usize {
        self.leg[i]
    }

    pub fn next_of(&self, i: usize) -> usize {
        self.next[i]
    }

    pub fn is_done(&self, i: usize) -> bool {
        self.done[i]
    }

    pub fn batch(&self, indices: &[usize]) -> TransitionBatch<T> {
        let b = indices.len();
        let mut obs = Array2::zeros((b, OBS_DIM));
        let mut next_obs = Array2::zeros((b, OBS_DIM));
        for (k, &i) in indices.iter().enumerate() {
            obs.row_mut(k).assign(&self.obs.row(i));
            next_obs.row_mut(k).assign(&self.obs.row(self.next[i]));
        }
        TransitionBatch {
            obs,
            actions: indices.iter().map(|&i| self.actions[i]).collect(),
            rewards: indices.iter().map(|&i| self.rewards[i]).collect(),
            next_obs,
            done: indices.iter().map(|&i| self.done[i]).collect(),
            indices: indices.to_vec(),
        }
    }

    /// Endless minibatch stream: each epoch is a fresh seeded permutation
    /// cut into batches of `batch_size`; the last batch of an epoch may be
    /// shorter.
    pub fn stream(&self, batch_size: usize, seed: u64) -> Result<BatchStream<'_, T>, DataError> {
        if batch_size == 0 || batch_size > self.len() {
            return Err(DataError::BatchSize {
                batch: batch_size,
                available: self.len(),
            });
        }
        Ok(BatchStream {
            set: self,
            batch_size,
            rng: seeds::substream(seed, Stream::Minibatch),
            order: Vec::new(),
            pos: 0,
            epoch: 0,
        })
    }
}

pub struct BatchStream<'a, T> {
    set: &'a TransitionSet<T>,
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
}

impl<T: Scalar> BatchStream<'_, T> {
    /// Number of epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }
}

impl<T: Scalar> Iterator for BatchStream<'_, T> {
    type Item = TransitionBatch<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            self.order = (0..self.set.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.set.batch(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }
}
