use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::env::{EnvHandle, FiltrationSpec};
use crate::error::{Error, Result};
use crate::idm::{Idm, IdmTrainer, IdmVarianceReport};
use crate::nnkit::DistNet;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceExperimentConfig {
    /// Episodes of behavior data per seed.
    pub train_episodes: usize,
    /// Held-out episodes on which the spread is measured.
    pub probe_episodes: usize,
    /// Passes over the training data. The Gaussian head's spread is a free
    /// parameter that Adam moves by roughly the learning rate per step, so
    /// `epochs × steps per epoch × learning_rate` has to exceed the distance
    /// to its optimum for levels to be comparable.
    pub epochs: usize,
    pub idm_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for VarianceExperimentConfig {
    fn default() -> Self {
        VarianceExperimentConfig {
            train_episodes: 100,
            probe_episodes: 30,
            epochs: 60,
            idm_hidden: vec![128, 128],
            learning_rate: 3e-3,
            batch_size: 256,
        }
    }
}

/// Transitions with the actions the environment actually applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub next_states: Array2<f64>,
}

/// Samples `n_episodes` stochastic episodes of `policy`.
pub fn sample_transitions(
    policy: &DistNet,
    handle: &EnvHandle,
    n_episodes: usize,
    seed: u64,
) -> Result<Transitions> {
    let mut env = handle.build()?;
    let spec = env.spec().clone();
    let mut rng = seed::stream(seed, "act", 0);
    let (mut s, mut a, mut n) = (Vec::new(), Vec::new(), Vec::new());
    let mut rows = 0;
    for i in 0..n_episodes {
        let mut state = env.reset(seed::derive(seed, "episode", i as u64));
        loop {
            let action = policy.dist(&spec.features(&state))?.sample(&mut rng);
            let applied = spec.action_space.clip(&action)?;
            let out = env.step(&applied)?;
            s.extend_from_slice(&state);
            a.extend(applied.to_row());
            n.extend_from_slice(&out.next);
            rows += 1;
            if out.done {
                break;
            }
            state = out.next;
        }
    }
    let mat = |v: Vec<f64>| {
        let cols = if rows == 0 { 0 } else { v.len() / rows };
        Array2::from_shape_vec((rows, cols), v).expect("row lengths")
    };
    Ok(Transitions {
        states: mat(s),
        actions: mat(a),
        next_states: mat(n),
    })
}

/// Checks that each level keeps a strict subset of the previous level's
/// indices.
pub fn validate_chain(chain: &[FiltrationSpec], obs_dim: usize) -> Result<()> {
    if chain.is_empty() {
        return Err(Error::invalid("the filtration chain is empty"));
    }
    for f in chain {
        f.validate_for(obs_dim)?;
    }
    for (j, w) in chain.windows(2).enumerate() {
        if w[0] == w[1] || !w[1].is_coarsening_of(&w[0]) {
            return Err(Error::invalid(format!(
                "filtration level {} does not strictly coarsen level {j}",
                j + 1
            )));
        }
    }
    Ok(())
}

/// For every seed, trains one inverse model per filtration level on the
/// same behavior data and measures its inference spread on held-out
/// episodes.
pub fn idm_variance_experiment(
    handle: &EnvHandle,
    chain: &[FiltrationSpec],
    behavior: &DistNet,
    seeds: &[u64],
    config: &VarianceExperimentConfig,
) -> Result<IdmVarianceReport> {
    let spec = handle.spec();
    validate_chain(chain, spec.obs_dim)?;
    if seeds.is_empty() || config.train_episodes == 0 || config.probe_episodes == 0 {
        return Err(Error::invalid("the variance experiment needs seeds and episodes"));
    }
    let mut values = vec![Vec::with_capacity(seeds.len()); chain.len()];
    for &s in seeds {
        let train = sample_transitions(behavior, handle, config.train_episodes, seed::derive(s, "train", 0))?;
        let probe = sample_transitions(behavior, handle, config.probe_episodes, seed::derive(s, "probe", 0))?;
        for (l, filt) in chain.iter().enumerate() {
            let mut idm = Idm::new(
                &spec,
                filt.clone(),
                &config.idm_hidden,
                &mut seed::stream(s, "idm_init", l as u64),
            )?;
            let mut trainer = IdmTrainer::new(&idm, config.learning_rate, config.batch_size);
            let steps = trainer.steps_per_epoch(train.states.nrows()) * config.epochs;
            trainer.train(
                &mut idm,
                &train.states,
                &train.actions,
                &train.next_states,
                steps,
                &mut seed::stream(s, "idm", l as u64),
            )?;
            idm.freeze();
            values[l].push(idm.inference_spread(&probe.states, &probe.next_states)?);
        }
    }
    Ok(IdmVarianceReport {
        levels: chain.iter().map(|f| f.keep_indices().to_vec()).collect(),
        seeds: seeds.to_vec(),
        values,
    })
}
