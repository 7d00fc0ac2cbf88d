//! The open-ended population loop, its intrinsic reward and the baselines.
//!
//! Policy `k` is trained with PPO on `r + α/(k-1) Σ_i clip(-log T_i, 0, c)`,
//! where `T_i` are the frozen inverse dynamics models of the earlier
//! policies. After training, policy `k`'s own inverse model is frozen and
//! appended to the archive together with the policy.

mod archive;
mod dvd;
mod intrinsic;
mod train;

use serde::{Deserialize, Serialize};

pub use archive::{ArchiveEntry, ArchiveMeta, EntryMeta, PolicyArchive};
pub use dvd::{dvd_similarity, dvd_style_bonus};
pub use intrinsic::{intrinsic_bonus, intrinsic_reward, refine_rewards, INTRINSIC_CLIP_MAX};
pub(crate) use train::mean_actions;
pub use train::{entry_seed, run_open_ended, train_next_policy};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Inverse-dynamics disagreement bonus.
    Dir,
    /// Independent PPO runs, no bonus.
    Multi,
    /// Mean-action dissimilarity bonus, all policies trained round-robin.
    DvdStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirConfig {
    pub population_size: usize,
    /// PPO updates per policy.
    pub iterations_per_policy: usize,
    pub alpha: f64,
    /// Kept for documentation; the loop uses fixed multipliers instead of a
    /// threshold.
    pub diversity_threshold_delta: f64,
    pub intrinsic_clip_max: f64,
    pub baseline_mode: BaselineMode,
    pub idm_hidden: Vec<usize>,
    pub idm_learning_rate: f64,
    pub idm_batch_size: usize,
    /// Passes over each rollout batch per PPO update.
    pub idm_epochs_per_update: usize,
    /// Bonus coefficient of the DvD-style baseline.
    pub dvd_coef: f64,
}

impl Default for DirConfig {
    fn default() -> Self {
        DirConfig {
            population_size: 3,
            iterations_per_policy: 98,
            alpha: 0.05,
            diversity_threshold_delta: 0.0,
            intrinsic_clip_max: INTRINSIC_CLIP_MAX,
            baseline_mode: BaselineMode::Dir,
            idm_hidden: vec![128, 128],
            idm_learning_rate: 3e-4,
            idm_batch_size: 256,
            idm_epochs_per_update: 1,
            dvd_coef: 0.05,
        }
    }
}

impl DirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::invalid("population_size must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be a nonnegative number"));
        }
        if !(self.intrinsic_clip_max > 0.0) {
            return Err(Error::invalid("intrinsic_clip_max must be positive"));
        }
        if self.idm_batch_size == 0 || self.idm_epochs_per_update == 0 {
            return Err(Error::invalid("idm_batch_size and idm_epochs_per_update must be positive"));
        }
        Ok(())
    }

    /// The bonus scale actually applied: zero for the Multi baseline.
    pub fn effective_alpha(&self) -> f64 {
        match self.baseline_mode {
            BaselineMode::Multi => 0.0,
            _ => self.alpha,
        }
    }
}

/// Bonus scale per built-in environment. The walker's value comes from
/// `examples/alpha_sweep.rs`: the largest α on {0.05, 0.03, 0.02, 0.01}
/// whose policies all keep 70% of policy 1's return. The other environments
/// use 0.05.
pub fn default_alpha(env_name: &str) -> f64 {
    match env_name {
        "duty_walker" => 0.02,
        _ => 0.05,
    }
}
