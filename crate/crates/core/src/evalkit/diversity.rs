use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::run_episodes;
use crate::dir::mean_actions;
use crate::env::{EnvHandle, EnvSpec, StateVector};
use crate::error::{Error, Result};
use crate::nnkit::DistNet;
use crate::seed;

/// Determinant diversity of a population over shared probe states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityScore {
    /// `K[i][j] = exp(-‖e_i - e_j‖² / (2 ℓ² dim))`.
    pub kernel: Vec<Vec<f64>>,
    pub determinant: f64,
    pub n_probe: usize,
    pub length_scale: f64,
    pub embedding_dim: usize,
}

/// Probe states drawn uniformly without replacement from the union of the
/// policies' deterministic rollouts. Each policy runs episodes until the
/// union holds at least `n_probe` states or `max_episodes` have been run
/// per policy.
pub fn collect_probe_states(
    policies: &[&DistNet],
    handle: &EnvHandle,
    n_probe: usize,
    seed: u64,
) -> Result<Vec<StateVector>> {
    if policies.is_empty() || n_probe == 0 {
        return Err(Error::invalid("probe collection needs policies and a positive count"));
    }
    const MAX_EPISODES: usize = 64;
    let horizon = handle.spec().horizon.max(1);
    let per_policy = n_probe.div_ceil(policies.len() * horizon).clamp(1, MAX_EPISODES);
    let mut pool = Vec::new();
    for p in policies {
        for ep in run_episodes(p, handle, per_policy, seed::derive(seed, "probe", 0), true)? {
            pool.extend(ep.states);
        }
    }
    if pool.len() <= n_probe {
        return Ok(pool);
    }
    let mut rng = seed::stream(seed, "probe_subsample", 0);
    let mut idx = sample(&mut rng, pool.len(), n_probe).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
}

/// Concatenated mean actions of `policy` over the probe states.
pub fn behavior_embedding(policy: &DistNet, spec: &EnvSpec, probe: &[StateVector]) -> Result<Vec<f64>> {
    let dim = spec.obs_dim;
    let mut f = Array2::zeros((probe.len(), dim));
    for (i, s) in probe.iter().enumerate() {
        spec.check_state(s)?;
        for (j, v) in spec.features(s).into_iter().enumerate() {
            f[[i, j]] = v;
        }
    }
    Ok(mean_actions(policy, &f, &spec.action_space).concat())
}

/// Kernel matrix and determinant of the population's behavior embeddings.
pub fn population_diversity_score(
    policies: &[&DistNet],
    spec: &EnvSpec,
    probe: &[StateVector],
    length_scale: f64,
) -> Result<DiversityScore> {
    if policies.len() < 2 {
        return Err(Error::usage("the diversity score needs at least two policies"));
    }
    if probe.is_empty() {
        return Err(Error::invalid("the diversity score needs probe states"));
    }
    if !(length_scale > 0.0 && length_scale.is_finite()) {
        return Err(Error::invalid("length_scale must be positive"));
    }
    let emb = policies
        .iter()
        .map(|p| behavior_embedding(p, spec, probe))
        .collect::<Result<Vec<_>>>()?;
    let dim = emb[0].len();
    let m = emb.len();
    let denom = 2.0 * length_scale * length_scale * dim as f64;
    let kernel: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let d2: f64 = emb[i].iter().zip(&emb[j]).map(|(a, b)| (a - b).powi(2)).sum();
                    (-d2 / denom).exp()
                })
                .collect()
        })
        .collect();
    // the kernel is positive semidefinite with unit diagonal; rounding can
    // push the LU determinant of a duplicated population slightly below 0
    let determinant = DMatrix::from_fn(m, m, |i, j| kernel[i][j]).determinant().clamp(0.0, 1.0);
    Ok(DiversityScore {
        kernel,
        determinant,
        n_probe: probe.len(),
        length_scale,
        embedding_dim: dim,
    })
}
