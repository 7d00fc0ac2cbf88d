use std::collections::BTreeMap;

use ndarray::Array2;

use super::InverseModel;
use crate::env::{FiltrationSpec, PolicyTable, TabularMdp};
use crate::error::{Error, Result};
use crate::nnkit::PROB_FLOOR;

/// Filtered coordinates of a state pair `(f(s), f(s'))`.
pub type PairKey = (Vec<i64>, Vec<i64>);

fn key_of(filtration: &FiltrationSpec, s: &[f64], s_next: &[f64]) -> PairKey {
    let f = |v: &[f64]| filtration.keep_indices().iter().map(|&i| v[i].round() as i64).collect();
    (f(s), f(s_next))
}

/// Joint mass `d(s) π(a|s) P(s'|s,a)` summed within each filtered pair
/// class: `num[(s̄, s̄')][a]`. The masses over all keys and actions sum to 1
/// when `occupancy` does.
pub fn pair_distribution(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    filtration: &FiltrationSpec,
    occupancy: &[f64],
) -> Result<BTreeMap<PairKey, Vec<f64>>> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    if policy.n_states != n || policy.n_actions != na || occupancy.len() != n {
        return Err(Error::invalid("policy or occupancy does not match the MDP"));
    }
    filtration.validate_for(mdp.state_dim())?;
    let vecs: Vec<Vec<f64>> = (0..n).map(|s| mdp.state_vector(s)).collect();
    let mut out: BTreeMap<PairKey, Vec<f64>> = BTreeMap::new();
    for s in 0..n {
        if occupancy[s] == 0.0 {
            continue;
        }
        for a in 0..na {
            let w = occupancy[s] * policy.get(s, a);
            if w == 0.0 {
                continue;
            }
            for (next, p) in mdp.transition_row(s, a).iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                let key = key_of(filtration, &vecs[s], &vecs[next]);
                out.entry(key).or_insert_with(|| vec![0.0; na])[a] += w * p;
            }
        }
    }
    Ok(out)
}

/// Exact filtered inverse dynamics `P^π(a | s̄, s̄')` of a policy on a
/// tabular MDP. Pairs the policy never produces have no row.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDynamicsTable {
    pub n_actions: usize,
    pub filtration: FiltrationSpec,
    /// Normalized action distribution per supported pair.
    pub rows: BTreeMap<PairKey, Vec<f64>>,
    /// Probability of each supported pair under the policy.
    pub weights: BTreeMap<PairKey, f64>,
}

/// Enumerates the numerator `Σ d(s) π(a|s) P(s'|s,a)` over each filtered
/// class and normalizes over actions.
pub fn tabular_inverse_dynamics(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    filtration: &FiltrationSpec,
    occupancy: &[f64],
) -> Result<InverseDynamicsTable> {
    let joint = pair_distribution(mdp, policy, filtration, occupancy)?;
    let mut rows = BTreeMap::new();
    let mut weights = BTreeMap::new();
    for (key, num) in joint {
        let z: f64 = num.iter().sum();
        if z <= 0.0 {
            continue;
        }
        rows.insert(key.clone(), num.iter().map(|v| v / z).collect());
        weights.insert(key, z);
    }
    Ok(InverseDynamicsTable {
        n_actions: mdp.n_actions(),
        filtration: filtration.clone(),
        rows,
        weights,
    })
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

impl InverseDynamicsTable {
    pub fn row(&self, s: &[f64], s_next: &[f64]) -> Option<&[f64]> {
        self.rows
            .get(&key_of(&self.filtration, s, s_next))
            .map(Vec::as_slice)
    }

    /// `P(a | f(s), f(s'))`, 0 for unsupported pairs.
    pub fn prob(&self, s: &[f64], a: usize, s_next: &[f64]) -> f64 {
        self.row(s, s_next).map_or(0.0, |r| r[a])
    }

    /// Pair-weighted mean row entropy `E[H(P(·|s̄,s̄'))]`.
    pub fn mean_entropy(&self) -> f64 {
        self.rows
            .iter()
            .map(|(k, r)| self.weights[k] * entropy(r))
            .sum()
    }
}

impl InverseModel for InverseDynamicsTable {
    /// Log-probabilities floored at `ln(1e-8)`, which also covers pairs the
    /// table's policy never produces.
    fn log_probs(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        next_states: &Array2<f64>,
    ) -> Result<Vec<f64>> {
        self.filtration.validate_for(states.ncols())?;
        Ok(states
            .rows()
            .into_iter()
            .zip(next_states.rows())
            .zip(actions.column(0))
            .map(|((s, n), &a)| {
                let p = self.prob(&s.to_vec(), a as usize, &n.to_vec());
                p.max(PROB_FLOOR).ln()
            })
            .collect())
    }

    fn is_frozen(&self) -> bool {
        true
    }
}
