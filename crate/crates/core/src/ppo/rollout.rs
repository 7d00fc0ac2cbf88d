use ndarray::Array2;

use super::ActorCritic;
use crate::env::{Environment, StateVector};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// On-policy transitions. Row `t` of every array belongs to step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub states: Array2<f64>,
    pub next_states: Array2<f64>,
    /// Actions as sampled from the policy; these carry the log-probs.
    pub actions: Array2<f64>,
    /// Actions after clipping into the environment's bounds.
    pub applied_actions: Array2<f64>,
    pub rewards: Vec<f64>,
    /// Rewards used for advantage estimation; equal to `rewards` until a
    /// bonus is added.
    pub refined_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub terminals: Vec<bool>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Value of the state that follows step `t` for bootstrapping: 0 after a
    /// true terminal, `V(s_{t+1})` otherwise.
    pub next_values: Vec<f64>,
    /// Extrinsic returns of episodes that finished inside this batch.
    pub episode_returns: Vec<f64>,
    /// Per-coordinate divisor turning states into network inputs.
    pub obs_scale: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn mean_episode_return(&self) -> Option<f64> {
        if self.episode_returns.is_empty() {
            None
        } else {
            Some(self.episode_returns.iter().sum::<f64>() / self.episode_returns.len() as f64)
        }
    }

    /// Network inputs for the rows of `states`.
    pub fn features_of(&self, states: &Array2<f64>) -> Array2<f64> {
        let mut f = states.clone();
        for mut row in f.rows_mut() {
            for (v, k) in row.iter_mut().zip(&self.obs_scale) {
                *v /= k;
            }
        }
        f
    }
}

/// Steps one environment instance across batch boundaries. Episode `i`
/// resets with seed `derive(seed, "episode", i)`.
pub struct RolloutWorker {
    env: Box<dyn Environment>,
    seed: u64,
    episode: u64,
    state: StateVector,
    ep_return: f64,
}

impl RolloutWorker {
    pub fn new(mut env: Box<dyn Environment>, seed: u64) -> Self {
        let state = env.reset(seed::derive(seed, "episode", 0));
        RolloutWorker {
            env,
            seed,
            episode: 0,
            state,
            ep_return: 0.0,
        }
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    /// Samples `n_steps` transitions from `ac.policy`.
    pub fn collect(&mut self, ac: &ActorCritic, n_steps: usize, rng: &mut Rng) -> Result<RolloutBatch> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        let spec = self.env.spec().clone();
        let d = spec.obs_dim;
        let a_dim = spec.action_space.row_dim();
        let mut states = Vec::with_capacity(n_steps * d);
        let mut next_states = Vec::with_capacity(n_steps * d);
        let mut actions = Vec::with_capacity(n_steps * a_dim);
        let mut applied = Vec::with_capacity(n_steps * a_dim);
        let mut rewards = Vec::with_capacity(n_steps);
        let mut dones = Vec::with_capacity(n_steps);
        let mut terminals = Vec::with_capacity(n_steps);
        let mut log_probs = Vec::with_capacity(n_steps);
        let mut values = Vec::with_capacity(n_steps);
        let mut next_values = Vec::with_capacity(n_steps);
        let mut episode_returns = Vec::new();

        for t in 0..n_steps {
            let x = spec.features(&self.state);
            let dist = ac.policy.dist(&x)?;
            let action = dist.sample(rng);
            let lp = dist.log_prob(&action)?;
            if !lp.is_finite() {
                return Err(Error::Divergence(format!("non-finite log-prob at step {t}")));
            }
            let v = ac.value.forward(&x)?[0];
            let clipped = spec.action_space.clip(&action)?;
            let out = self.env.step(&clipped)?;

            states.extend_from_slice(&self.state);
            next_states.extend_from_slice(&out.next);
            actions.extend(action.to_row());
            applied.extend(clipped.to_row());
            rewards.push(out.reward);
            dones.push(out.done);
            terminals.push(out.terminal);
            log_probs.push(lp);
            values.push(v);
            self.ep_return += out.reward;

            let last = t + 1 == n_steps;
            if out.terminal {
                next_values.push(0.0);
            } else if out.done || last {
                next_values.push(ac.value.forward(&spec.features(&out.next))?[0]);
            } else {
                // filled with the next step's value below
                next_values.push(f64::NAN);
            }

            if out.done {
                episode_returns.push(self.ep_return);
                self.ep_return = 0.0;
                self.episode += 1;
                self.state = self.env.reset(seed::derive(self.seed, "episode", self.episode));
            } else {
                self.state = out.next;
            }
        }
        for t in 0..n_steps - 1 {
            if next_values[t].is_nan() {
                next_values[t] = values[t + 1];
            }
        }

        let mat = |v: Vec<f64>, cols: usize| Array2::from_shape_vec((n_steps, cols), v).expect("row lengths");
        Ok(RolloutBatch {
            states: mat(states, d),
            next_states: mat(next_states, d),
            actions: mat(actions, a_dim),
            applied_actions: mat(applied, a_dim),
            refined_rewards: rewards.clone(),
            rewards,
            dones,
            terminals,
            log_probs,
            values,
            next_values,
            episode_returns,
            obs_scale: spec.obs_scale.clone(),
        })
    }
}
