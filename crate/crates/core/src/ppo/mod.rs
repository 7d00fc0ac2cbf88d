//! Proximal policy optimization: rollouts, GAE and the clipped-surrogate
//! update.

mod gae;
mod rollout;
mod update;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use gae::{compute_gae, normalize};
pub use rollout::{RolloutBatch, RolloutWorker};
pub use update::{minibatch_loss, ppo_update, MinibatchLoss, UpdateStats};

use crate::env::{ActionSpace, EnvSpec};
use crate::error::{Error, Result};
use crate::nnkit::{AdamState, DistNet, Head, Mlp};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub clip_param: f64,
    pub n_epochs: usize,
    pub steps_per_update: usize,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    /// Initial Gaussian log standard deviation.
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            learning_rate: 3e-4,
            batch_size: 256,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.1,
            value_coef: 1.0,
            clip_param: 0.25,
            n_epochs: 10,
            steps_per_update: 2048,
            policy_hidden: vec![64, 64],
            value_hidden: vec![128, 128],
            init_log_std: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("ppo: {msg}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda must lie in (0, 1]");
        }
        if !(self.clip_param > 0.0) {
            return bad("clip_param must be positive");
        }
        if self.n_epochs == 0 || self.batch_size == 0 || self.steps_per_update == 0 {
            return bad("n_epochs, batch_size and steps_per_update must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Policy and value networks trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: DistNet,
    pub value: Mlp,
}

impl ActorCritic {
    pub fn new(spec: &EnvSpec, config: &PpoConfig, rng: &mut Rng) -> Self {
        let mut sizes = vec![spec.obs_dim];
        sizes.extend(&config.policy_hidden);
        sizes.push(spec.action_space.head_dim());
        let head = match &spec.action_space {
            ActionSpace::Continuous { low, .. } => Head::gaussian(low.len(), config.init_log_std),
            ActionSpace::Discrete { n } => Head::categorical(*n),
        };
        let policy = DistNet::new(Mlp::new(&sizes, 0.01, rng), head).expect("sizes chain");
        let mut vsizes = vec![spec.obs_dim];
        vsizes.extend(&config.value_hidden);
        vsizes.push(1);
        let value = Mlp::new(&vsizes, 1.0, rng);
        ActorCritic { policy, value }
    }
}

/// Adam state for both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoOptim {
    pub policy: AdamState,
    pub value: AdamState,
}

impl PpoOptim {
    pub fn new(ac: &ActorCritic, learning_rate: f64) -> Self {
        PpoOptim {
            policy: AdamState::new(&ac.policy.tensors(), learning_rate),
            value: AdamState::new(&ac.value.tensors(), learning_rate),
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub update_idx: usize,
    pub steps: usize,
    pub mean_ep_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub mean_intrinsic: f64,
}

pub fn write_diagnostics<W: Write>(out: W, rows: &[DiagnosticsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "update_idx",
            "steps",
            "mean_ep_return",
            "policy_loss",
            "value_loss",
            "entropy",
            "clip_frac",
            "mean_intrinsic",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diagnostics<R: std::io::Read>(input: R) -> Result<Vec<DiagnosticsRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// A PPO training run: networks, optimizer state, the rollout worker and the
/// update counter. Every random stream is derived from `seed`, so two runs
/// with the same seed and the same reward refinement are bitwise identical.
pub struct PpoRun {
    pub ac: ActorCritic,
    pub optim: PpoOptim,
    pub worker: RolloutWorker,
    pub config: PpoConfig,
    seed: u64,
    updates: usize,
    last_return: f64,
}

impl PpoRun {
    pub fn new(env: Box<dyn crate::env::Environment>, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = env.spec().clone();
        let ac = ActorCritic::new(&spec, &config, &mut crate::seed::stream(seed, "init", 0));
        let optim = PpoOptim::new(&ac, config.learning_rate);
        let worker = RolloutWorker::new(env, crate::seed::derive(seed, "env", 0));
        Ok(PpoRun {
            ac,
            optim,
            worker,
            config,
            seed,
            updates: 0,
            last_return: 0.0,
        })
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Collects a batch, lets `refine` rewrite its rewards (returning the mean
    /// bonus it added), and applies one PPO update. The batch is returned for
    /// callers that train on it further.
    pub fn iterate(
        &mut self,
        refine: impl FnOnce(&mut RolloutBatch) -> Result<f64>,
    ) -> Result<(DiagnosticsRow, RolloutBatch)> {
        let u = self.updates as u64;
        let mut act_rng = crate::seed::stream(self.seed, "act", u);
        let mut shuffle_rng = crate::seed::stream(self.seed, "shuffle", u);
        let mut batch = self
            .worker
            .collect(&self.ac, self.config.steps_per_update, &mut act_rng)?;
        if let Some(r) = batch.mean_episode_return() {
            self.last_return = r;
        }
        let mean_intrinsic = refine(&mut batch)?;
        let (adv, ret) = compute_gae(&batch, &self.config);
        let stats = ppo_update(
            &mut self.ac,
            &mut self.optim,
            &batch,
            &adv,
            &ret,
            &self.config,
            &mut shuffle_rng,
        )
        .map_err(|e| match e {
            Error::Divergence(m) => Error::Divergence(format!("update {u}: {m}")),
            other => other,
        })?;
        self.updates += 1;
        let row = DiagnosticsRow {
            update_idx: self.updates - 1,
            steps: self.updates * self.config.steps_per_update,
            mean_ep_return: self.last_return,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_frac: stats.clip_frac,
            mean_intrinsic,
        };
        Ok((row, batch))
    }

    /// Runs `n` updates with extrinsic reward only.
    pub fn train(&mut self, n: usize) -> Result<Vec<DiagnosticsRow>> {
        (0..n).map(|_| self.iterate(|_| Ok(0.0)).map(|(row, _)| row)).collect()
    }
}
