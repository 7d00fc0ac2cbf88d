use ndarray::Array2;

use crate::error::{Error, Result};
use crate::idm::InverseModel;
use crate::ppo::RolloutBatch;

/// Default upper clip on each predecessor's `-log T`.
pub const INTRINSIC_CLIP_MAX: f64 = 20.0;

/// Per-transition bonus `α/(k-1) · Σ_i clip(-log T_i(a | f(s), f(s')), 0, clip_max)`
/// over the `k - 1` predecessors. Zero when there are no predecessors.
pub fn intrinsic_bonus<M: InverseModel + ?Sized>(
    predecessors: &[&M],
    states: &Array2<f64>,
    actions: &Array2<f64>,
    next_states: &Array2<f64>,
    alpha: f64,
    clip_max: f64,
) -> Result<Vec<f64>> {
    let n = states.nrows();
    if predecessors.is_empty() || alpha == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if !(alpha >= 0.0) || !(clip_max > 0.0) {
        return Err(Error::invalid("alpha must be nonnegative and clip_max positive"));
    }
    let mut sum = vec![0.0; n];
    for (i, m) in predecessors.iter().enumerate() {
        if !m.is_frozen() {
            return Err(Error::usage(format!("predecessor {} is not frozen", i + 1)));
        }
        for (acc, lp) in sum.iter_mut().zip(m.log_probs(states, actions, next_states)?) {
            *acc += (-lp).clamp(0.0, clip_max);
        }
    }
    let scale = alpha / predecessors.len() as f64;
    Ok(sum.into_iter().map(|s| scale * s).collect())
}

/// Bonus for a single transition.
pub fn intrinsic_reward<M: InverseModel + ?Sized>(
    predecessors: &[&M],
    s: &[f64],
    a: &[f64],
    s_next: &[f64],
    alpha: f64,
    clip_max: f64,
) -> Result<f64> {
    let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row");
    Ok(intrinsic_bonus(predecessors, &row(s), &row(a), &row(s_next), alpha, clip_max)?[0])
}

/// Sets `refined = extrinsic + bonus` using the clipped actions the
/// environment executed. Returns the mean bonus.
pub fn refine_rewards<M: InverseModel + ?Sized>(
    batch: &mut RolloutBatch,
    predecessors: &[&M],
    alpha: f64,
    clip_max: f64,
) -> Result<f64> {
    let bonus = intrinsic_bonus(
        predecessors,
        &batch.states,
        &batch.applied_actions,
        &batch.next_states,
        alpha,
        clip_max,
    )?;
    for ((refined, r), b) in batch.refined_rewards.iter_mut().zip(&batch.rewards).zip(&bonus) {
        *refined = r + b;
    }
    Ok(bonus.iter().sum::<f64>() / bonus.len().max(1) as f64)
}
