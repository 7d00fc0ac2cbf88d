//! Diagnostics behind `dir-lab diag`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use dirlab::dir::PolicyArchive;
use dirlab::env::{EnvHandle, FiltrationSpec, PolicyTable, TabularMdp};
use dirlab::evalkit::{
    behavior_descriptor, collect_probe_states, conditional_mi_exact, idm_variance_experiment,
    kl_ce_gap_check, percentile_performance, population_diversity_score, write_descriptor_csv,
    write_percentile_csv, DiversityScore, KlCeReport, MiEstimate, VarianceExperimentConfig,
};
use dirlab::idm::IdmVarianceReport;
use dirlab::nnkit::DistNet;
use dirlab::ppo::{PpoConfig, PpoRun};
use dirlab::seed;

use crate::CliError;

/// Tolerance of the KL/CE gap identity.
pub const KLCE_TOL: f64 = 1e-9;

fn lib(e: dirlab::Error) -> CliError {
    match e {
        dirlab::Error::Corrupt(m) => CliError::Archive(m),
        dirlab::Error::InvalidArgument(m) | dirlab::Error::Usage(m) => CliError::Config(m),
        other => CliError::Training(other.to_string()),
    }
}

/// A random tabular instance: at most 20 states over one to three
/// coordinates, two to four actions, `n_policies` full-support policies and
/// a random filtration.
pub fn random_instance(seed_value: u64, n_policies: usize) -> (TabularMdp, Vec<PolicyTable>, FiltrationSpec) {
    use dirlab::env::FiltrationSpec as F;
    let mut rng = seed::stream(seed_value, "instance", 0);
    let radices = TabularMdp::random_radices(&mut rng, 20);
    let n_actions = 2 + (seed::derive(seed_value, "actions", 0) % 3) as usize;
    let mdp = TabularMdp::random(&mut rng, &radices, n_actions, 0.9).expect("valid shape");
    let policies = (0..n_policies)
        .map(|_| PolicyTable::random(&mut rng, mdp.n_states(), n_actions))
        .collect();
    let filtration = F::random(&mut rng, mdp.state_dim());
    (mdp, policies, filtration)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiInput {
    pub mdp: TabularMdp,
    pub policies: Vec<PolicyTable>,
    pub filtration: FiltrationSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlCeInput {
    pub mdp: TabularMdp,
    pub policy_k: PolicyTable,
    pub policy_i: PolicyTable,
    pub filtration: FiltrationSpec,
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        CliError::Config(format!(
            "{origin}:{}:{}: field `{}`: {inner}",
            inner.line(),
            inner.column(),
            e.path()
        ))
    })
}

pub fn mi_exact(input: &MiInput) -> Result<MiEstimate, CliError> {
    conditional_mi_exact(&input.mdp, &input.policies, &input.filtration).map_err(lib)
}

pub fn mi_random(n: usize, seed_value: u64, n_policies: usize) -> Result<Vec<MiEstimate>, CliError> {
    (0..n)
        .map(|i| {
            let (mdp, policies, filt) = random_instance(seed::derive(seed_value, "mi", i as u64), n_policies);
            conditional_mi_exact(&mdp, &policies, &filt).map_err(lib)
        })
        .collect()
}

pub fn write_mi_csv<W: Write>(out: W, rows: &[MiEstimate]) -> Result<(), CliError> {
    let mut w = out;
    let mut s = String::from("instance,mi,h_action_given_pair,h_action_given_pair_z,method\n");
    for (i, r) in rows.iter().enumerate() {
        s.push_str(&format!(
            "{i},{},{},{},{}\n",
            r.mi, r.h_action_given_pair, r.h_action_given_pair_z, r.method
        ));
    }
    w.write_all(s.as_bytes()).map_err(|e| CliError::Training(e.to_string()))
}

pub fn klce(input: &KlCeInput) -> Result<KlCeReport, CliError> {
    kl_ce_gap_check(&input.mdp, &input.policy_k, &input.policy_i, &input.filtration).map_err(lib)
}

pub fn klce_random(n: usize, seed_value: u64) -> Result<Vec<KlCeReport>, CliError> {
    (0..n)
        .map(|i| {
            let (mdp, p, filt) = random_instance(seed::derive(seed_value, "klce", i as u64), 2);
            kl_ce_gap_check(&mdp, &p[0], &p[1], &filt).map_err(lib)
        })
        .collect()
}

/// Writes the per-instance table and returns the largest identity error.
pub fn write_klce_csv<W: Write>(mut out: W, rows: &[KlCeReport]) -> Result<f64, CliError> {
    let mut s = String::from("instance,div,div_ce,gap,expected_entropy,gap_error\n");
    let mut worst = 0.0f64;
    for (i, r) in rows.iter().enumerate() {
        worst = worst.max(r.identity_error());
        s.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            r.div,
            r.div_ce,
            r.gap,
            r.expected_entropy,
            r.identity_error()
        ));
    }
    out.write_all(s.as_bytes()).map_err(|e| CliError::Training(e.to_string()))?;
    Ok(worst)
}

/// Three-level chain on the arm: full state, without the second joint's
/// velocity, without the second joint entirely.
pub fn arm_chain() -> Vec<FiltrationSpec> {
    let full = FiltrationSpec::identity(6);
    let no_vel = full.without(3).expect("index kept");
    let no_joint = no_vel.without(1).expect("index kept");
    vec![full, no_vel, no_joint]
}

/// Plain PPO run used as the behavior policy of the variance experiment.
pub fn train_behavior(handle: &EnvHandle, ppo: &PpoConfig, updates: usize, seed_value: u64) -> Result<DistNet, CliError> {
    let env = handle.build().map_err(lib)?;
    let mut run = PpoRun::new(env, ppo.clone(), seed_value).map_err(lib)?;
    run.train(updates).map_err(lib)?;
    Ok(run.ac.policy)
}

pub fn idm_variance(
    handle: &EnvHandle,
    chain: &[FiltrationSpec],
    behavior: &DistNet,
    seeds: &[u64],
    config: &VarianceExperimentConfig,
) -> Result<IdmVarianceReport, CliError> {
    idm_variance_experiment(handle, chain, behavior, seeds, config).map_err(lib)
}

pub fn diversity(archive: &PolicyArchive, n_probe: usize, length_scale: f64, seed_value: u64) -> Result<DiversityScore, CliError> {
    let policies = archive.policies();
    let probe = collect_probe_states(&policies, &archive.env, n_probe, seed_value).map_err(lib)?;
    population_diversity_score(&policies, &archive.spec(), &probe, length_scale).map_err(lib)
}

pub fn percentile<W: Write>(out: W, archive: &PolicyArchive, n_episodes: usize, seed_value: u64) -> Result<(), CliError> {
    let curve = percentile_performance(archive, &archive.env, n_episodes, seed_value).map_err(lib)?;
    write_percentile_csv(out, &curve).map_err(lib)
}

pub fn descriptors<W: Write>(out: W, archive: &PolicyArchive, n_episodes: usize, seed_value: u64) -> Result<(), CliError> {
    let descs = archive
        .policies()
        .iter()
        .map(|p| behavior_descriptor(p, &archive.env, n_episodes, seed_value))
        .collect::<dirlab::Result<Vec<_>>>()
        .map_err(lib)?;
    write_descriptor_csv(out, &descs).map_err(lib)
}
