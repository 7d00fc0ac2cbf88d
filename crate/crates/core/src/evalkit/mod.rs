//! Evaluation: few-shot adaptation, population diversity, behavior
//! descriptors, percentile curves, the inverse-model variance experiment and
//! exact information-theoretic diagnostics on tabular MDPs.
//!
//! Policies are evaluated deterministically (Gaussian mean or categorical
//! argmax). Episode `i` of an evaluation resets with
//! `derive(seed, "eval", i)`, so every policy faces the same initial states.

mod adapt;
mod descriptor;
mod diversity;
mod info;
mod variance;

pub use adapt::{
    few_shot_adapt, few_shot_adapt_policies, select_best, write_adaptation_csv, AdaptationResult,
};
pub use descriptor::{
    behavior_descriptor, descriptor_distance, min_pairwise_distance, write_descriptor_csv,
    BehaviorDescriptor,
};
pub use diversity::{behavior_embedding, collect_probe_states, population_diversity_score, DiversityScore};
pub use info::{conditional_mi_exact, kl_ce_gap_check, KlCeReport, MiEstimate};
pub use variance::{
    idm_variance_experiment, sample_transitions, validate_chain, Transitions, VarianceExperimentConfig,
};

use crate::env::{EnvHandle, StateVector};
use crate::dir::PolicyArchive;
use crate::error::{Error, Result};
use crate::nnkit::DistNet;
use crate::seed;

/// Outcome of one deterministic evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode_return: f64,
    pub length: usize,
    /// Per-channel means of the descriptor samples, empty if the environment
    /// has none.
    pub channels: Vec<f64>,
    pub activity: Vec<f64>,
    pub states: Vec<StateVector>,
}

/// Runs `n_episodes` deterministic episodes of `policy`, with actions
/// clipped into the action bounds.
pub fn run_episodes(
    policy: &DistNet,
    handle: &EnvHandle,
    n_episodes: usize,
    seed: u64,
    keep_states: bool,
) -> Result<Vec<EpisodeSummary>> {
    let mut env = handle.build()?;
    let spec = env.spec().clone();
    let n_ch = spec.descriptor_channels.len();
    let mut out = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let mut state = env.reset(seed::derive(seed, "eval", i as u64));
        let mut ret = 0.0;
        let mut channels = vec![0.0; n_ch];
        let mut activity: Vec<f64> = Vec::new();
        let mut states = Vec::new();
        let mut len = 0;
        loop {
            if keep_states {
                states.push(state.clone());
            }
            let action = spec.action_space.clip(&policy.dist(&spec.features(&state))?.mode())?;
            let step = env.step(&action)?;
            ret += step.reward;
            len += 1;
            if let Some(d) = env.descriptor() {
                for (acc, v) in channels.iter_mut().zip(&d.channels) {
                    *acc += v;
                }
                if activity.is_empty() {
                    activity = vec![0.0; d.activity.len()];
                }
                for (acc, v) in activity.iter_mut().zip(&d.activity) {
                    *acc += v;
                }
            }
            if step.done {
                break;
            }
            state = step.next;
        }
        let n = len as f64;
        out.push(EpisodeSummary {
            episode_return: ret,
            length: len,
            channels: channels.into_iter().map(|c| c / n).collect(),
            activity: activity.into_iter().map(|c| c / n).collect(),
            states,
        });
    }
    Ok(out)
}

/// Mean deterministic return over `n_episodes`.
pub fn mean_return(policy: &DistNet, handle: &EnvHandle, n_episodes: usize, seed: u64) -> Result<f64> {
    let eps = run_episodes(policy, handle, n_episodes, seed, false)?;
    Ok(eps.iter().map(|e| e.episode_return).sum::<f64>() / eps.len().max(1) as f64)
}

/// Deterministic mean return of every archive entry, worst first. Entries
/// are `(1-based index, mean return)`.
pub fn percentile_performance(
    archive: &PolicyArchive,
    handle: &EnvHandle,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if archive.is_empty() {
        return Err(Error::usage("percentile curve of an empty archive"));
    }
    let returns = archive
        .policies()
        .iter()
        .map(|p| mean_return(p, handle, n_episodes, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(sort_ascending(&returns))
}

/// Returns sorted ascending with their 1-based indices; equal returns keep
/// index order.
pub fn sort_ascending(mean_returns: &[f64]) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = mean_returns
        .iter()
        .enumerate()
        .map(|(i, r)| (i + 1, *r))
        .collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v
}

pub fn write_percentile_csv<W: std::io::Write>(out: W, curve: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "percentile", "policy_idx", "mean_return"])?;
    let m = curve.len();
    for (rank, (idx, r)) in curve.iter().enumerate() {
        let pct = if m > 1 { 100.0 * rank as f64 / (m - 1) as f64 } else { 0.0 };
        w.write_record([rank.to_string(), pct.to_string(), idx.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
