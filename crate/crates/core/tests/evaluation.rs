//! Population evaluation: diversity score, adaptation and descriptors.

use proptest::prelude::*;
use rand::Rng as _;

use dirlab::env::{EnvConfig, EnvHandle, VariantSpec, WalkerParams};
use dirlab::evalkit::{
    behavior_descriptor, behavior_embedding, collect_probe_states, few_shot_adapt_policies, mean_return,
    population_diversity_score,
};
use dirlab::nnkit::DistNet;
use dirlab::ppo::{ActorCritic, PpoConfig};
use dirlab::seed;

fn walker() -> EnvHandle {
    EnvHandle::new(EnvConfig::DutyWalker(WalkerParams { horizon: 60, ..WalkerParams::default() }))
}

/// A random policy whose mean actions vary visibly across states.
fn policy(s: u64) -> DistNet {
    let cfg = PpoConfig { policy_hidden: vec![16], ..PpoConfig::default() };
    let mut rng = seed::rng(s);
    let mut ac = ActorCritic::new(&walker().spec(), &cfg, &mut rng);
    for t in ac.policy.tensors_mut() {
        t.mapv_inplace(|v| v + rng.random_range(-0.5..0.5));
    }
    ac.policy
}

fn cofactor_det(k: &[Vec<f64>]) -> f64 {
    k[0][0] * (k[1][1] * k[2][2] - k[1][2] * k[2][1]) - k[0][1] * (k[1][0] * k[2][2] - k[1][2] * k[2][0])
        + k[0][2] * (k[1][0] * k[2][1] - k[1][1] * k[2][0])
}

#[test]
fn three_policy_determinant_matches_cofactor_expansion() {
    for s in 0..10 {
        let ps = [policy(3 * s), policy(3 * s + 1), policy(3 * s + 2)];
        let refs: Vec<&DistNet> = ps.iter().collect();
        let probe = collect_probe_states(&refs, &walker(), 64, s).unwrap();
        let score = population_diversity_score(&refs, &walker().spec(), &probe, 0.5).unwrap();
        let emb: Vec<Vec<f64>> = refs.iter().map(|p| behavior_embedding(p, &walker().spec(), &probe).unwrap()).collect();
        let dim = emb[0].len() as f64;
        for i in 0..3 {
            for j in 0..3 {
                let d2: f64 = emb[i].iter().zip(&emb[j]).map(|(a, b)| (a - b).powi(2)).sum();
                assert!((score.kernel[i][j] - (-d2 / (2.0 * 0.25 * dim)).exp()).abs() < 1e-12);
            }
        }
        assert!((score.determinant - cofactor_det(&score.kernel)).abs() < 1e-12);
        assert!(score.determinant > 0.0);
    }
}

#[test]
fn duplicated_policy_collapses_the_determinant() {
    let (a, b) = (policy(1), policy(2));
    let refs = vec![&a, &b, &a];
    let probe = collect_probe_states(&refs, &walker(), 128, 0).unwrap();
    let score = population_diversity_score(&refs, &walker().spec(), &probe, 1.0).unwrap();
    assert!(score.determinant < 1e-9, "{}", score.determinant);
    assert_eq!(score.n_probe, 128);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn determinant_lies_in_the_unit_interval(s in 0u64..1000, m in 2usize..5, scale in 0.05f64..5.0) {
        let ps: Vec<DistNet> = (0..m as u64).map(|i| policy(s * 10 + i)).collect();
        let refs: Vec<&DistNet> = ps.iter().collect();
        let probe = collect_probe_states(&refs, &walker(), 32, s).unwrap();
        let score = population_diversity_score(&refs, &walker().spec(), &probe, scale).unwrap();
        prop_assert!((0.0..=1.0).contains(&score.determinant));
    }
}

#[test]
fn adaptation_picks_the_best_mean_return() {
    let ps: Vec<DistNet> = (0..4).map(policy).collect();
    let refs: Vec<&DistNet> = ps.iter().collect();
    let broken = walker().apply_variant(&VariantSpec::BrokenActuator { actuator_index: 0 }).unwrap();
    for h in [walker(), broken] {
        let r = few_shot_adapt_policies(&refs, &h, 5, 3).unwrap();
        let direct: Vec<f64> = refs.iter().map(|p| mean_return(p, &h, 5, 3).unwrap()).collect();
        assert_eq!(r.mean_returns, direct);
        let best = direct.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = direct.iter().position(|&v| v == best).unwrap() + 1;
        assert_eq!(r.selected, first);
        assert_eq!(r.selected_return, best);
    }
}

#[test]
fn descriptors_are_duty_fractions() {
    let d = behavior_descriptor(&policy(7), &walker(), 4, 1).unwrap();
    assert_eq!(d.channels.len(), 2);
    assert_eq!(d.per_episode.len(), 4);
    for ep in &d.per_episode {
        assert!(ep.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    for c in 0..2 {
        let mean = d.per_episode.iter().map(|e| e[c]).sum::<f64>() / 4.0;
        assert!((mean - d.channels[c]).abs() < 1e-12);
    }
    assert_eq!(d, behavior_descriptor(&policy(7), &walker(), 4, 1).unwrap());
}
