use std::path::Path;

use ndarray::Array2;

use super::archive::{ArchiveEntry, EntryMeta, PolicyArchive};
use super::dvd::dvd_style_bonus;
use super::intrinsic::refine_rewards;
use super::BaselineMode;
use crate::env::ActionSpace;
use crate::error::{Error, Result};
use crate::idm::{Idm, IdmTrainer};
use crate::nnkit::{ActionDist, DistNet};
use crate::ppo::{DiagnosticsRow, PpoRun, RolloutBatch};
use crate::seed;

/// Seed of archive entry `k` (1-based). Entry 1 under every baseline mode
/// uses the same seed, so it is the same plain-PPO policy.
pub fn entry_seed(master_seed: u64, k: usize) -> u64 {
    seed::derive(master_seed, "policy", k as u64)
}

struct Learner {
    run: PpoRun,
    idm: Idm,
    trainer: IdmTrainer,
    seed: u64,
    log: Vec<DiagnosticsRow>,
}

impl Learner {
    fn new(archive: &PolicyArchive, seed: u64) -> Result<Self> {
        let env = archive.env.build()?;
        let spec = env.spec().clone();
        let run = PpoRun::new(env, archive.ppo.clone(), seed)?;
        let idm = Idm::new(
            &spec,
            archive.filtration.clone(),
            &archive.dir.idm_hidden,
            &mut seed::stream(seed, "idm_init", 0),
        )?;
        let trainer = IdmTrainer::new(&idm, archive.dir.idm_learning_rate, archive.dir.idm_batch_size);
        Ok(Learner {
            run,
            idm,
            trainer,
            seed,
            log: Vec::new(),
        })
    }

    /// One PPO update with the given reward refinement, then one round of
    /// inverse-model training on the same batch.
    fn step(
        &mut self,
        epochs: usize,
        refine: impl FnOnce(&mut RolloutBatch) -> Result<f64>,
    ) -> Result<()> {
        let u = self.run.updates() as u64;
        let (row, batch) = self.run.iterate(refine)?;
        let steps = self.trainer.steps_per_epoch(batch.len()) * epochs;
        self.trainer.train(
            &mut self.idm,
            &batch.states,
            &batch.applied_actions,
            &batch.next_states,
            steps,
            &mut seed::stream(self.seed, "idm", u),
        )?;
        self.log.push(row);
        Ok(())
    }

    fn finish(mut self, index: usize) -> ArchiveEntry {
        self.idm.freeze();
        let updates = self.run.updates();
        ArchiveEntry {
            meta: EntryMeta {
                index,
                seed: self.seed,
                steps: updates * self.run.config.steps_per_update,
                updates,
                final_mean_return: self.log.last().map_or(0.0, |r| r.mean_ep_return),
            },
            policy: self.run.ac.policy,
            value: self.run.ac.value,
            idm: self.idm,
            log: self.log,
        }
    }
}

/// Trains the next entry against the archive's frozen inverse models.
/// The archive itself is not modified.
pub fn train_next_policy(archive: &PolicyArchive, seed: u64) -> Result<ArchiveEntry> {
    let cfg = &archive.dir;
    if cfg.baseline_mode == BaselineMode::DvdStyle {
        return Err(Error::usage("the DvD-style baseline trains its population jointly"));
    }
    let k = archive.len() + 1;
    let alpha = cfg.effective_alpha();
    let clip = cfg.intrinsic_clip_max;
    let preds = archive.idms();
    let mut learner = Learner::new(archive, seed)?;
    for _ in 0..cfg.iterations_per_policy {
        learner.step(cfg.idm_epochs_per_update, |b| refine_rewards(b, &preds, alpha, clip))?;
    }
    Ok(learner.finish(k))
}

/// Mean actions of `policy` on the rows of `features`: Gaussian means
/// clipped into the action bounds, or categorical probabilities.
pub(crate) fn mean_actions(
    policy: &DistNet,
    features: &Array2<f64>,
    space: &ActionSpace,
) -> Vec<Vec<f64>> {
    policy
        .dist_batch(features.view())
        .into_iter()
        .map(|d| match (d, space) {
            (ActionDist::Gaussian(g), ActionSpace::Continuous { low, high }) => g
                .mean
                .iter()
                .zip(low.iter().zip(high))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect(),
            (ActionDist::Gaussian(g), _) => g.mean,
            (ActionDist::Categorical(c), _) => c.probs(),
        })
        .collect()
}

fn train_dvd(archive: &mut PolicyArchive, out: Option<&Path>) -> Result<()> {
    if !archive.is_empty() {
        return Err(Error::usage("the DvD-style baseline cannot resume a partial population"));
    }
    let spec = archive.spec();
    if spec.action_space.is_discrete() {
        return Err(Error::invalid("the DvD-style baseline compares continuous mean actions"));
    }
    let m = archive.dir.population_size;
    let coef = archive.dir.dvd_coef;
    let mut learners = (1..=m)
        .map(|k| Learner::new(archive, entry_seed(archive.master_seed, k)))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..archive.dir.iterations_per_policy {
        for k in 0..m {
            let snapshot: Vec<DistNet> = learners.iter().map(|l| l.run.ac.policy.clone()).collect();
            let space = spec.action_space.clone();
            let epochs = archive.dir.idm_epochs_per_update;
            learners[k].step(epochs, |b| {
                if m < 2 {
                    return Ok(0.0);
                }
                let f = b.features_of(&b.states);
                let per_policy: Vec<Vec<Vec<f64>>> =
                    snapshot.iter().map(|p| mean_actions(p, &f, &space)).collect();
                let mut total = 0.0;
                for t in 0..b.len() {
                    let at_t: Vec<Vec<f64>> = per_policy.iter().map(|p| p[t].clone()).collect();
                    let bonus = dvd_style_bonus(&at_t, k, coef)?;
                    b.refined_rewards[t] = b.rewards[t] + bonus;
                    total += bonus;
                }
                Ok(total / b.len() as f64)
            })?;
        }
    }
    for (i, l) in learners.into_iter().enumerate() {
        archive.push(l.finish(i + 1))?;
    }
    if let Some(dir) = out {
        archive.save(dir)?;
    }
    Ok(())
}

/// Trains entries until the archive holds `population_size` policies,
/// saving after every entry when `out` is given. An archive that already
/// holds entries is continued from where it stopped.
pub fn run_open_ended(archive: &mut PolicyArchive, out: Option<&Path>) -> Result<()> {
    if archive.dir.baseline_mode == BaselineMode::DvdStyle {
        return train_dvd(archive, out);
    }
    while archive.len() < archive.dir.population_size {
        let k = archive.len() + 1;
        let entry = train_next_policy(archive, entry_seed(archive.master_seed, k))?;
        archive.push(entry)?;
        if let Some(dir) = out {
            archive.save(dir)?;
        }
    }
    Ok(())
}
