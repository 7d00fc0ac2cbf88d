//! Diversity-in-Regulation (DiR).
//!
//! Trains a population of policies one at a time. Policy `k` is rewarded for
//! executing actions that the frozen inverse dynamics models of policies
//! `1..k` find unlikely, where those models only see a filtered view of the
//! state. The filtration decides which behavioral differences count as
//! diversity.
//!
//! Module map:
//!
//! - [`env`]: environment trait, the three built-in toy environments,
//!   dynamics-mismatch variants and the state filtration.
//! - [`nnkit`]: small MLPs, a tensor-level reverse-mode tape, distribution
//!   heads and Adam.
//! - [`ppo`]: rollouts, GAE and the clipped-surrogate update.
//! - [`idm`]: learned inverse dynamics models and the exact tabular oracle.
//! - [`dir`]: the intrinsic reward, the policy archive and the open-ended loop,
//!   plus the Multi and DvD-style baselines.
//! - [`evalkit`]: few-shot adaptation, diversity scores, behavior descriptors
//!   and the exact information-theoretic diagnostics.

pub mod dir;
pub mod env;
pub mod error;
pub mod evalkit;
pub mod idm;
pub mod nnkit;
pub mod ppo;
pub mod seed;

pub use error::{Error, Result};
