use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{FiltrationSpec, PolicyTable, TabularMdp};
use crate::error::{Error, Result};
use crate::idm::{pair_distribution, PairKey};
use crate::nnkit::PROB_FLOOR;

/// Exact `I(a; z | s̄, s̄')` with its two entropy terms, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub mi: f64,
    /// `H(a | s̄, s̄')`.
    pub h_action_given_pair: f64,
    /// `H(a | s̄, s̄', z)`.
    pub h_action_given_pair_z: f64,
    pub method: String,
}

fn plogp_sum(masses: &[f64]) -> f64 {
    let z: f64 = masses.iter().sum();
    if z <= 0.0 {
        return 0.0;
    }
    masses
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|m| -m * (m / z).ln())
        .sum()
}

/// Enumerates the joint `p(z, s̄, s̄', a)` with `z` uniform over the
/// policies, each acting from its own discounted visitation.
pub fn conditional_mi_exact(
    mdp: &TabularMdp,
    policies: &[PolicyTable],
    filtration: &FiltrationSpec,
) -> Result<MiEstimate> {
    if policies.is_empty() {
        return Err(Error::invalid("the MI diagnostic needs at least one policy"));
    }
    let w = 1.0 / policies.len() as f64;
    let mut pooled: BTreeMap<PairKey, Vec<f64>> = BTreeMap::new();
    let mut h_given_z = 0.0;
    for pi in policies {
        let occ = mdp.discounted_visitation(pi)?;
        let joint = pair_distribution(mdp, pi, filtration, &occ)?;
        for (key, num) in joint {
            h_given_z += w * plogp_sum(&num);
            let acc = pooled.entry(key).or_insert_with(|| vec![0.0; num.len()]);
            for (a, v) in acc.iter_mut().zip(&num) {
                *a += w * v;
            }
        }
    }
    let h_pair: f64 = pooled.values().map(|num| plogp_sum(num)).sum();
    Ok(MiEstimate {
        mi: h_pair - h_given_z,
        h_action_given_pair: h_pair,
        h_action_given_pair_z: h_given_z,
        method: "exact-tabular".into(),
    })
}

/// The KL form of the disagreement, its cross-entropy surrogate with exact
/// tables, their gap and the expected inverse-dynamics entropy of `π_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlCeReport {
    pub div: f64,
    pub div_ce: f64,
    pub gap: f64,
    pub expected_entropy: f64,
}

impl KlCeReport {
    /// `|gap - E[H]|`, zero up to rounding when the identity holds.
    pub fn identity_error(&self) -> f64 {
        (self.gap - self.expected_entropy).abs()
    }
}

/// Compares `Div = E_{π_k}[KL(P^{π_k} ‖ P^{π_i})]` with
/// `Div_ce = E_{π_k}[-log P^{π_i}]`, both over `π_k`'s filtered pairs.
/// `P^{π_i}` is floored at `1e-8` where `π_i` never produces the pair or
/// action, on both sides, so the identity `Div_ce - Div = E[H(P^{π_k})]`
/// stays exact.
pub fn kl_ce_gap_check(
    mdp: &TabularMdp,
    policy_k: &PolicyTable,
    policy_i: &PolicyTable,
    filtration: &FiltrationSpec,
) -> Result<KlCeReport> {
    let occ_k = mdp.discounted_visitation(policy_k)?;
    let occ_i = mdp.discounted_visitation(policy_i)?;
    let joint_k = pair_distribution(mdp, policy_k, filtration, &occ_k)?;
    let joint_i = pair_distribution(mdp, policy_i, filtration, &occ_i)?;
    let (mut div, mut div_ce, mut ent) = (0.0, 0.0, 0.0);
    for (key, num_k) in &joint_k {
        let z_k: f64 = num_k.iter().sum();
        if z_k <= 0.0 {
            continue;
        }
        let row_i: Option<(f64, &Vec<f64>)> = joint_i
            .get(key)
            .map(|n| (n.iter().sum::<f64>(), n))
            .filter(|(z, _)| *z > 0.0);
        for (a, &m) in num_k.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let p_k = m / z_k;
            let p_i = row_i.map_or(0.0, |(z, n)| n[a] / z).max(PROB_FLOOR);
            div += m * (p_k.ln() - p_i.ln());
            div_ce -= m * p_i.ln();
            ent -= m * p_k.ln();
        }
    }
    Ok(KlCeReport {
        div,
        div_ce,
        gap: div_ce - div,
        expected_entropy: ent,
    })
}
