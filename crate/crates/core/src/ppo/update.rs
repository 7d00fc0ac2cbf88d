use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::gae::normalize;
use super::{ActorCritic, PpoConfig, PpoOptim, RolloutBatch};
use crate::error::{Error, Result};
use crate::nnkit::Tape;
use crate::seed::Rng;

/// Means over every minibatch of the update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    /// Clip fraction of the very first minibatch.
    pub first_clip_frac: f64,
}

/// Losses of one minibatch and their gradients.
pub struct MinibatchLoss {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub policy_grads: Vec<Array2<f64>>,
    pub value_grads: Vec<Array2<f64>>,
}

/// Clipped surrogate plus entropy bonus plus value regression on the rows
/// `idx` of the given arrays.
#[allow(clippy::too_many_arguments)]
pub fn minibatch_loss(
    ac: &ActorCritic,
    features: &Array2<f64>,
    actions: &Array2<f64>,
    old_log_probs: &[f64],
    advantages: &[f64],
    returns: &[f64],
    idx: &[usize],
    config: &PpoConfig,
) -> Result<MinibatchLoss> {
    let b = idx.len();
    let col = |v: &[f64]| Array2::from_shape_fn((b, 1), |(i, _)| v[idx[i]]);
    let tape = Tape::new();
    let x = tape.leaf(features.select(Axis(0), idx));
    let acts = actions.select(Axis(0), idx);
    let pol = ac.policy.bind(&tape);
    let val = ac.value.bind(&tape);

    let logp = pol.log_prob(&tape, x, &acts);
    let ratio = logp.sub(tape.leaf(col(old_log_probs))).exp();
    let adv = tape.leaf(col(advantages));
    let eps = config.clip_param;
    let surrogate = ratio.mul(adv).min(ratio.clamp(1.0 - eps, 1.0 + eps).mul(adv));
    let policy_loss = surrogate.mean().neg();
    let entropy = pol.entropy(&tape, x).mean();
    let value_loss = val.forward(x).sub(tape.leaf(col(returns))).square().mean();
    let loss = policy_loss
        .sub(entropy.scale(config.entropy_coef))
        .add(value_loss.scale(config.value_coef));

    let total = loss.item();
    let ratios = ratio.value();
    let clipped = ratios.iter().filter(|r| (*r - 1.0).abs() > eps).count();
    let grads = tape.backward(loss)?;
    Ok(MinibatchLoss {
        total,
        policy_loss: policy_loss.item(),
        value_loss: value_loss.item(),
        entropy: entropy.item(),
        clip_frac: clipped as f64 / b as f64,
        policy_grads: grads.collect(&pol.vars()),
        value_grads: grads.collect(&val.vars()),
    })
}

/// `n_epochs` passes of shuffled minibatch descent on the PPO loss.
/// Advantages are normalized over the whole batch first.
pub fn ppo_update(
    ac: &mut ActorCritic,
    optim: &mut PpoOptim,
    batch: &RolloutBatch,
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    let n = batch.len();
    if n == 0 || advantages.len() != n || returns.len() != n {
        return Err(Error::invalid("advantages and returns must match a nonempty batch"));
    }
    let features = batch.features_of(&batch.states);
    let adv = normalize(advantages);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    for epoch in 0..config.n_epochs {
        order.shuffle(rng);
        for (m, idx) in order.chunks(config.batch_size).enumerate() {
            let mb = minibatch_loss(
                ac,
                &features,
                &batch.actions,
                &batch.log_probs,
                &adv,
                returns,
                idx,
                config,
            )?;
            if !mb.total.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {epoch}, minibatch {m} (rows {}..)",
                    idx[0]
                )));
            }
            if count == 0 {
                stats.first_clip_frac = mb.clip_frac;
            }
            stats.policy_loss += mb.policy_loss;
            stats.value_loss += mb.value_loss;
            stats.entropy += mb.entropy;
            stats.clip_frac += mb.clip_frac;
            count += 1;
            optim.policy.step(&mut ac.policy.tensors_mut(), &mb.policy_grads)?;
            ac.policy.project();
            optim.value.step(&mut ac.value.tensors_mut(), &mb.value_grads)?;
        }
    }
    let c = count as f64;
    stats.policy_loss /= c;
    stats.value_loss /= c;
    stats.entropy /= c;
    stats.clip_frac /= c;
    Ok(stats)
}
