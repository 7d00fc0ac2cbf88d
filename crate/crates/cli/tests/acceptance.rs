//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
//! criterion fails.
//!
//! The population criteria train 8 seeds of DiR and of the Multi control on
//! the walker preset, which takes the bulk of the runtime.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;

use dirlab::dir::{intrinsic_bonus, run_open_ended, BaselineMode, PolicyArchive};
use dirlab::env::tabular::sample_index;
use dirlab::env::{EnvConfig, EnvHandle, EnvSpec, FiltrationSpec, GridParams, PolicyTable, TabularMdp, VariantSpec};
use dirlab::evalkit::{
    behavior_descriptor, conditional_mi_exact, few_shot_adapt, min_pairwise_distance, AdaptationResult,
    VarianceExperimentConfig,
};
use dirlab::idm::{tabular_inverse_dynamics, Idm};
use dirlab::nnkit::{max_relative_fd_error, DistNet, Tape};
use dirlab::ppo::{compute_gae, minibatch_loss, ActorCritic, PpoConfig, RolloutBatch};
use dirlab::seed;
use dirlab_cli::{cmd_adapt, cmd_train, config::preset, diag, with_pool, write_adaptation, AdaptationSummary, RunConfig};

const IDM_ORACLE_TOL: f64 = 1e-10;
const KLCE_TOL: f64 = 1e-9;
const REGULATION_TOL: f64 = 1e-9;
const FD_TOL: f64 = 1e-4;
const GAE_TOL: f64 = 1e-12;
const COARSENING_TOL: f64 = 1e-9;
const DET_DUPLICATE_MAX: f64 = 1e-9;
const COFACTOR_TOL: f64 = 1e-12;
const MI_TOL: f64 = 1e-9;
const RETURN_FLOOR: f64 = 0.7;
const ADAPT_EPISODES: usize = 20;
const N_SEEDS: u64 = 8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs one criterion, turning a panic into a failure and enforcing its
/// runtime budget.
fn run(n: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f));
    let took = start.elapsed();
    let (pass, detail) = match result {
        Ok(o) if took <= budget => (o.pass, o.detail),
        Ok(o) => (false, format!("{}; over the {:.0} s budget", o.detail, budget.as_secs_f64())),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!(
        "criterion {n:>2} {} {name}: {detail} [{:.1} s]",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    pass
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn filtered(mdp: &TabularMdp, f: &FiltrationSpec, s: usize) -> Vec<i64> {
    f.keep_indices().iter().map(|&i| mdp.coords(s)[i]).collect()
}

/// `P(a | f(s), f(s'))` by direct enumeration of Bayes' rule.
fn bayes_row(mdp: &TabularMdp, pi: &PolicyTable, d: &[f64], f: &FiltrationSpec, key: &(Vec<i64>, Vec<i64>)) -> Vec<f64> {
    let mut num = vec![0.0; mdp.n_actions()];
    for s in (0..mdp.n_states()).filter(|&s| filtered(mdp, f, s) == key.0) {
        for t in (0..mdp.n_states()).filter(|&t| filtered(mdp, f, t) == key.1) {
            for (a, v) in num.iter_mut().enumerate() {
                *v += d[s] * pi.get(s, a) * mdp.p(s, a, t);
            }
        }
    }
    let z: f64 = num.iter().sum();
    num.into_iter().map(|v| v / z).collect()
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for i in 0..100 {
        let (mdp, pis, f) = diag::random_instance(seed::derive(1, "c1", i), 1);
        assert!(mdp.n_states() <= 20 && mdp.n_actions() <= 4);
        let d = mdp.discounted_visitation(&pis[0]).unwrap();
        let table = tabular_inverse_dynamics(&mdp, &pis[0], &f, &d).unwrap();
        for (key, row) in &table.rows {
            let oracle = bayes_row(&mdp, &pis[0], &d, &f, key);
            for (x, y) in row.iter().zip(&oracle) {
                worst = worst.max((x - y).abs());
            }
            pairs += 1;
        }
    }
    outcome(worst <= IDM_ORACLE_TOL, format!("max error {worst:.2e} over {pairs} supported pairs"))
}

fn criterion_2() -> Outcome {
    let rows = diag::klce_random(100, 2).unwrap();
    let worst = rows.iter().map(|r| r.identity_error()).fold(0.0, f64::max);
    let min_entropy = rows.iter().map(|r| r.expected_entropy).fold(f64::INFINITY, f64::min);
    outcome(
        worst <= KLCE_TOL && min_entropy >= 0.0,
        format!("max gap error {worst:.2e}, min expected entropy {min_entropy:.3e}"),
    )
}

fn as_rows(v: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((v.len(), v[0].len()), |(i, j)| v[i][j])
}

fn rollout(mdp: &TabularMdp, pi: &PolicyTable, len: usize, rng: &mut seed::Rng) -> [Array2<f64>; 3] {
    let mut s = sample_index(mdp.initial(), rng.random());
    let (mut xs, mut acts, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..len {
        let a = sample_index(pi.row(s), rng.random());
        let t = sample_index(mdp.transition_row(s, a), rng.random());
        xs.push(mdp.state_vector(s));
        acts.push(vec![a as f64]);
        ys.push(mdp.state_vector(t));
        s = t;
    }
    [as_rows(&xs), as_rows(&acts), as_rows(&ys)]
}

fn criterion_3() -> Outcome {
    let mut identity_worst = 0.0f64;
    let mut empty_worst = 0.0f64;
    for i in 0..20 {
        let mut rng = seed::stream(3, "c3", i);
        let mdp = TabularMdp::random_injective(&mut rng, &[4, 4], 4, 0.9).unwrap();
        let f = FiltrationSpec::identity(2);
        let tables: Vec<_> = (0..3)
            .map(|_| {
                let p = PolicyTable::random(&mut rng, 16, 4);
                let d = mdp.discounted_visitation(&p).unwrap();
                tabular_inverse_dynamics(&mdp, &p, &f, &d).unwrap()
            })
            .collect();
        let refs: Vec<_> = tables.iter().collect();
        let current = PolicyTable::random(&mut rng, 16, 4);
        let [x, a, y] = rollout(&mdp, &current, 50, &mut rng);
        for b in intrinsic_bonus(&refs, &x, &a, &y, 0.7, 20.0).unwrap() {
            identity_worst = identity_worst.max(b.abs());
        }

        let (mdp, pis, _) = diag::random_instance(seed::derive(3, "c3-empty", i), 2);
        let d = mdp.discounted_visitation(&pis[0]).unwrap();
        let table = tabular_inverse_dynamics(&mdp, &pis[0], &FiltrationSpec::empty(), &d).unwrap();
        let marginal: Vec<f64> = (0..mdp.n_actions())
            .map(|act| (0..mdp.n_states()).map(|s| d[s] * pis[0].get(s, act)).sum())
            .collect();
        let [x, a, y] = rollout(&mdp, &pis[1], 40, &mut rng);
        let alpha = 0.3;
        let bonus = intrinsic_bonus(&[&table], &x, &a, &y, alpha, 20.0).unwrap();
        for (b, act) in bonus.iter().zip(a.column(0)) {
            let expected = alpha * (-marginal[*act as usize].ln()).clamp(0.0, 20.0);
            empty_worst = empty_worst.max((b - expected).abs());
        }
    }
    outcome(
        identity_worst <= REGULATION_TOL && empty_worst <= REGULATION_TOL,
        format!("identity filtration max bonus {identity_worst:.2e}, empty filtration max error {empty_worst:.2e}"),
    )
}

fn uniform(rng: &mut seed::Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn random_actions(rng: &mut seed::Rng, spec: &EnvSpec, rows: usize) -> Array2<f64> {
    let n = spec.action_space.head_dim();
    if spec.action_space.is_discrete() {
        Array2::from_shape_fn((rows, 1), |_| rng.random_range(0..n) as f64)
    } else {
        uniform(rng, rows, n)
    }
}

fn jitter(tensors: Vec<&mut Array2<f64>>, rng: &mut seed::Rng) {
    for t in tensors {
        t.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
    }
}

fn mean_entropy(net: &DistNet, x: &Array2<f64>) -> (f64, Vec<Array2<f64>>) {
    let tape = Tape::new();
    let bound = net.bind(&tape);
    let h = bound.entropy(&tape, tape.leaf(x.clone())).mean();
    let grads = tape.backward(h).unwrap();
    (h.item(), grads.collect(&bound.vars()))
}

fn with_tensors(mut net: DistNet, p: &[Array2<f64>]) -> DistNet {
    for (t, v) in net.tensors_mut().into_iter().zip(p) {
        t.assign(v);
    }
    net
}

fn criterion_4() -> Outcome {
    const ROWS: usize = 12;
    const H: f64 = 1e-5;
    let specs = [
        EnvConfig::DutyWalker(Default::default()).spec(),
        EnvConfig::TabularGrid(GridParams::default()).spec(),
    ];
    let cfg = PpoConfig {
        policy_hidden: vec![8, 8],
        value_hidden: vec![8],
        init_log_std: -0.3,
        ..PpoConfig::default()
    };
    let idx: Vec<usize> = (0..ROWS).collect();
    let mut worst = [0.0f64; 4];
    for i in 0..20u64 {
        let spec = &specs[(i % 2) as usize];
        let mut rng = seed::stream(4, "c4", i);
        let mut ac = ActorCritic::new(spec, &cfg, &mut rng);
        jitter(ac.policy.tensors_mut(), &mut rng);
        jitter(ac.value.tensors_mut(), &mut rng);
        let x = uniform(&mut rng, ROWS, spec.obs_dim);
        let acts = random_actions(&mut rng, spec, ROWS);
        let adv: Vec<f64> = (0..ROWS).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ret: Vec<f64> = (0..ROWS).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tape = Tape::new();
        let lp = ac.policy.bind(&tape).log_prob(&tape, tape.leaf(x.clone()), &acts).value();
        let old: Vec<f64> = lp.iter().map(|l| l + rng.random_range(-0.1..0.1)).collect();
        let loss = |ac: &ActorCritic| minibatch_loss(ac, &x, &acts, &old, &adv, &ret, &idx, &cfg).unwrap();
        let g = loss(&ac);

        let mut params: Vec<Array2<f64>> = ac.policy.tensors().into_iter().cloned().collect();
        worst[0] = worst[0].max(max_relative_fd_error(&mut params, &g.policy_grads, H, |p| {
            let mut probe = ac.clone();
            probe.policy = with_tensors(probe.policy, p);
            loss(&probe).total
        }));

        let mut params: Vec<Array2<f64>> = ac.value.tensors().into_iter().cloned().collect();
        worst[1] = worst[1].max(max_relative_fd_error(&mut params, &g.value_grads, H, |p| {
            let mut probe = ac.clone();
            for (t, v) in probe.value.tensors_mut().into_iter().zip(p) {
                t.assign(v);
            }
            loss(&probe).total
        }));

        let (_, eg) = mean_entropy(&ac.policy, &x);
        let mut params: Vec<Array2<f64>> = ac.policy.tensors().into_iter().cloned().collect();
        worst[2] = worst[2].max(max_relative_fd_error(&mut params, &eg, H, |p| {
            mean_entropy(&with_tensors(ac.policy.clone(), p), &x).0
        }));

        let f = FiltrationSpec::random(&mut rng, spec.obs_dim);
        let mut idm = Idm::new(spec, f, &[8, 8], &mut rng).unwrap();
        jitter(idm.net.tensors_mut(), &mut rng);
        let xi = idm.inputs(&uniform(&mut rng, ROWS, spec.obs_dim), &uniform(&mut rng, ROWS, spec.obs_dim)).unwrap();
        let (_, ig) = idm.nll_and_grads(&xi, &acts).unwrap();
        let mut params: Vec<Array2<f64>> = idm.net.tensors().into_iter().cloned().collect();
        worst[3] = worst[3].max(max_relative_fd_error(&mut params, &ig, H, |p| {
            let mut probe = idm.clone();
            probe.net = with_tensors(probe.net, p);
            probe.nll_and_grads(&xi, &acts).unwrap().0
        }));
    }
    outcome(
        worst.iter().all(|&w| w < FD_TOL),
        format!(
            "max relative error surrogate {:.1e}, value {:.1e}, entropy {:.1e}, inverse model {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn gae_batch(r: Vec<f64>, v: Vec<f64>, next: Vec<f64>, done: Vec<bool>) -> RolloutBatch {
    let n = r.len();
    RolloutBatch {
        states: Array2::zeros((n, 1)),
        next_states: Array2::zeros((n, 1)),
        actions: Array2::zeros((n, 1)),
        applied_actions: Array2::zeros((n, 1)),
        refined_rewards: r.clone(),
        rewards: r,
        terminals: vec![false; n],
        dones: done,
        log_probs: vec![0.0; n],
        values: v,
        next_values: next,
        episode_returns: Vec::new(),
        obs_scale: vec![1.0],
    }
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    let mut with_dones = 0;
    for i in 0..500 {
        let mut rng = seed::stream(5, "c5", i);
        let n = rng.random_range(1..=64);
        let draw = |rng: &mut seed::Rng| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<f64>>();
        let (r, v, next) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let done: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
        with_dones += usize::from(done[..n - 1].iter().any(|&d| d));
        let cfg = PpoConfig {
            gamma: rng.random_range(0.5..1.0),
            gae_lambda: rng.random_range(0.01..=1.0),
            ..PpoConfig::default()
        };
        let (adv, _) = compute_gae(&gae_batch(r.clone(), v.clone(), next.clone(), done.clone()), &cfg);
        for t in 0..n {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                sum += w * (r[k] + cfg.gamma * next[k] - v[k]);
                if done[k] {
                    break;
                }
                w *= cfg.gamma * cfg.gae_lambda;
            }
            worst = worst.max((adv[t] - sum).abs());
        }
    }
    outcome(
        worst <= GAE_TOL,
        format!("max error {worst:.2e} over 500 batches, {with_dones} with mid-batch episode ends"),
    )
}

fn criterion_6() -> Outcome {
    let cfg = preset("two_link_arm").unwrap();
    let handle = cfg.handle();
    let behavior = diag::train_behavior(&handle, &PpoConfig::default(), 30, 0).unwrap();
    let seeds: Vec<u64> = (1..=5).collect();
    let report =
        diag::idm_variance(&handle, &diag::arm_chain(), &behavior, &seeds, &VarianceExperimentConfig::default()).unwrap();
    let monotone = (0..seeds.len()).filter(|&j| report.seed_monotone(j, 0.0)).count();
    let means: Vec<String> = report.level_means().iter().map(|m| format!("{m:.3}")).collect();
    outcome(
        monotone >= 4,
        format!("weakly increasing in {monotone}/5 seeds; level means {}", means.join(" < ")),
    )
}

fn criterion_7() -> Outcome {
    let mut worst_drop = 0.0f64;
    let mut chains = 0;
    for i in 0..100 {
        let (mdp, pis, _) = diag::random_instance(seed::derive(7, "c7", i), 1);
        let d = mdp.discounted_visitation(&pis[0]).unwrap();
        let mut level = FiltrationSpec::identity(mdp.state_dim());
        let mut last = tabular_inverse_dynamics(&mdp, &pis[0], &level, &d).unwrap().mean_entropy();
        let mut rng = seed::stream(7, "c7-chain", i);
        while !level.keep_indices().is_empty() {
            let keep = level.keep_indices();
            level = level.without(keep[rng.random_range(0..keep.len())]).unwrap();
            let h = tabular_inverse_dynamics(&mdp, &pis[0], &level, &d).unwrap().mean_entropy();
            worst_drop = worst_drop.max(last - h);
            last = h;
        }
        chains += 1;
    }
    outcome(
        worst_drop <= COARSENING_TOL,
        format!("largest entropy decrease {worst_drop:.2e} along {chains} chains"),
    )
}

/// DiR and Multi archives of one master seed on the walker preset. Entry 1
/// of the Multi archive is the same plain PPO run as DiR's entry 1, so it is
/// reused rather than retrained.
struct Paired {
    seed: u64,
    dir: PolicyArchive,
    multi: PolicyArchive,
}

fn train_pair(cfg: &RunConfig, seed: u64) -> Paired {
    let mut dir = PolicyArchive::new(cfg.handle(), cfg.filtration(), cfg.dir.clone(), cfg.ppo.clone(), seed).unwrap();
    run_open_ended(&mut dir, None).unwrap();
    let mut multi_cfg = cfg.dir.clone();
    multi_cfg.baseline_mode = BaselineMode::Multi;
    let mut multi = PolicyArchive::new(cfg.handle(), cfg.filtration(), multi_cfg, cfg.ppo.clone(), seed).unwrap();
    multi.push(dir.entries()[0].clone()).unwrap();
    run_open_ended(&mut multi, None).unwrap();
    Paired { seed, dir, multi }
}

fn train_populations() -> Vec<Paired> {
    let cfg = preset("duty_walker").unwrap();
    assert_eq!(cfg.dir.population_size, 3);
    assert!(cfg.dir.iterations_per_policy * cfg.ppo.steps_per_update >= 200_000);
    with_pool(|| (1..=N_SEEDS).into_par_iter().map(|s| train_pair(&cfg, s)).collect()).unwrap()
}

fn min_descriptor_distance(a: &PolicyArchive) -> f64 {
    let d: Vec<_> = a
        .policies()
        .iter()
        .map(|p| behavior_descriptor(p, &a.env, ADAPT_EPISODES, 0).unwrap())
        .collect();
    min_pairwise_distance(&d).unwrap()
}

fn criterion_8(pops: &[Paired]) -> Outcome {
    let mut wins = 0;
    let mut all_keep = true;
    let mut worst_ratio = f64::INFINITY;
    for p in pops {
        let (d, m) = (min_descriptor_distance(&p.dir), min_descriptor_distance(&p.multi));
        let returns = few_shot_adapt(&p.dir, &p.dir.env, ADAPT_EPISODES, 0).unwrap().mean_returns;
        let ratio = returns.iter().map(|r| r / returns[0]).fold(f64::INFINITY, f64::min);
        worst_ratio = worst_ratio.min(ratio);
        all_keep &= returns.iter().all(|&r| r >= RETURN_FLOOR * returns[0]);
        wins += usize::from(d > m);
        let shown: Vec<String> = returns.iter().map(|r| format!("{r:.1}")).collect();
        println!(
            "  seed {}: min descriptor distance DiR {d:.4} Multi {m:.4}; DiR returns {}",
            p.seed,
            shown.join(" ")
        );
    }
    outcome(
        wins >= 6 && all_keep,
        format!("DiR more diverse in {wins}/8 seeds; lowest return ratio to policy 1 {worst_ratio:.2}"),
    )
}

fn broken(env: &EnvHandle, i: usize) -> EnvHandle {
    env.apply_variant(&VariantSpec::BrokenActuator { actuator_index: i }).unwrap()
}

fn criterion_9(pops: &[Paired]) -> Outcome {
    let mut not_worse = 0;
    let mut switched = 0;
    for p in pops {
        let base = few_shot_adapt(&p.dir, &p.dir.env, ADAPT_EPISODES, 0).unwrap();
        let results: Vec<AdaptationResult> = (0..2)
            .map(|i| few_shot_adapt(&p.dir, &broken(&p.dir.env, i), ADAPT_EPISODES, 0).unwrap())
            .collect();
        // policy 1 is the plain PPO policy of this seed
        not_worse += usize::from(results.iter().all(|r| r.selected_return >= r.mean_returns[0]));
        switched += usize::from(results.iter().any(|r| r.selected != base.selected));
        let shown: Vec<String> = results
            .iter()
            .enumerate()
            .map(|(i, r)| format!("broken{i} picks {} ({:.1} vs PG {:.1})", r.selected, r.selected_return, r.mean_returns[0]))
            .collect();
        println!("  seed {}: base picks {}; {}", p.seed, base.selected, shown.join("; "));
    }
    outcome(
        not_worse >= 6 && switched >= 3,
        format!("best-of-population >= PG in {not_worse}/8 seeds; selection changes in {switched}/8 seeds"),
    )
}

fn cofactor_det(k: &[Vec<f64>]) -> f64 {
    k[0][0] * (k[1][1] * k[2][2] - k[1][2] * k[2][1]) - k[0][1] * (k[1][0] * k[2][2] - k[1][2] * k[2][0])
        + k[0][2] * (k[1][0] * k[2][1] - k[1][1] * k[2][0])
}

fn criterion_10(pops: &[Paired]) -> Outcome {
    let mut in_range = true;
    let mut cofactor_worst = 0.0f64;
    let mut dup_worst = 0.0f64;
    for p in pops {
        for a in [&p.dir, &p.multi] {
            let s = diag::diversity(a, 256, 1.0, 0).unwrap();
            in_range &= (0.0..=1.0).contains(&s.determinant);
            cofactor_worst = cofactor_worst.max((s.determinant - cofactor_det(&s.kernel)).abs());
        }
        let mut dup = p.dir.truncated(2);
        let mut first = p.dir.entries()[0].clone();
        first.meta.index = 3;
        dup.push(first).unwrap();
        let s = diag::diversity(&dup, 256, 1.0, 0).unwrap();
        in_range &= (0.0..=1.0).contains(&s.determinant);
        dup_worst = dup_worst.max(s.determinant);
    }
    outcome(
        in_range && dup_worst < DET_DUPLICATE_MAX && cofactor_worst <= COFACTOR_TOL,
        format!(
            "all determinants in [0, 1]: {in_range}; duplicated entry det {dup_worst:.2e}; cofactor error {cofactor_worst:.2e}"
        ),
    )
}

fn criterion_11() -> Outcome {
    let mut clones = 0.0f64;
    for i in 0..20 {
        let (mdp, pis, f) = diag::random_instance(seed::derive(11, "c11", i), 1);
        let same = vec![pis[0].clone(); 3];
        clones = clones.max(conditional_mi_exact(&mdp, &same, &f).unwrap().mi.abs());
    }
    // one state whose two actions both loop back; each policy always picks
    // its own action
    let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0], 0.9, vec![]).unwrap();
    let pols = [PolicyTable::deterministic(2, &[0]).unwrap(), PolicyTable::deterministic(2, &[1]).unwrap()];
    let bit = conditional_mi_exact(&mdp, &pols, &FiltrationSpec::identity(1)).unwrap().mi;
    let mut injective = 0.0f64;
    for i in 0..20 {
        let mut rng = seed::stream(11, "c11-injective", i);
        let mdp = TabularMdp::random_injective(&mut rng, &[3, 4], 3, 0.9).unwrap();
        let pols: Vec<_> = (0..3).map(|_| PolicyTable::random(&mut rng, 12, 3)).collect();
        injective = injective.max(conditional_mi_exact(&mdp, &pols, &FiltrationSpec::identity(2)).unwrap().mi.abs());
    }
    let bit_err = (bit - std::f64::consts::LN_2).abs();
    outcome(
        clones <= MI_TOL && bit_err <= MI_TOL && injective <= MI_TOL,
        format!("clones {clones:.2e}, one-bit error {bit_err:.2e}, injective identity {injective:.2e}"),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Every command path, twice, into separate directories.
fn command_outputs(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut cfg = preset("duty_walker").unwrap();
    cfg.seeds = vec![1, 2];
    cfg.dir.iterations_per_policy = 2;
    cfg.ppo.steps_per_update = 256;
    cfg.ppo.batch_size = 64;
    cfg.ppo.n_epochs = 2;
    let runs = cmd_train(&cfg, &root.join("train"), false).unwrap();
    let archive = dirlab_cli::load_archive(&runs[0]).unwrap();
    let results = cmd_adapt(&archive, &cfg.variants, 3, 0).unwrap();
    let summary = AdaptationSummary {
        archive: "seed_1".into(),
        n_policies: archive.len(),
        n_episodes: 3,
        seed: 0,
        results,
    };
    write_adaptation(&root.join("adapt"), &summary).unwrap();
    let mut reports: Vec<(String, Vec<u8>)> = Vec::new();
    let mut buf = Vec::new();
    diag::write_klce_csv(&mut buf, &diag::klce_random(10, 0).unwrap()).unwrap();
    reports.push(("klce".into(), std::mem::take(&mut buf)));
    diag::write_mi_csv(&mut buf, &diag::mi_random(10, 0, 3).unwrap()).unwrap();
    reports.push(("mi".into(), std::mem::take(&mut buf)));
    diag::percentile(&mut buf, &archive, 3, 0).unwrap();
    reports.push(("percentile".into(), std::mem::take(&mut buf)));
    diag::descriptors(&mut buf, &archive, 3, 0).unwrap();
    reports.push(("descriptors".into(), std::mem::take(&mut buf)));
    let score = diag::diversity(&archive, 64, 1.0, 0).unwrap();
    reports.push(("diversity".into(), serde_json::to_vec(&score).unwrap()));
    let arm = preset("two_link_arm").unwrap().handle();
    let small = VarianceExperimentConfig {
        train_episodes: 4,
        probe_episodes: 2,
        epochs: 2,
        ..VarianceExperimentConfig::default()
    };
    let behavior = archive.policies()[0].clone();
    let walker_chain = vec![
        FiltrationSpec::identity(6),
        FiltrationSpec::new(vec![0, 1, 4, 5]).unwrap(),
    ];
    diag::idm_variance(&archive.env, &walker_chain, &behavior, &[1, 2], &small)
        .unwrap()
        .write_csv(&mut buf)
        .unwrap();
    reports.push(("idm_variance".into(), std::mem::take(&mut buf)));
    let arm_behavior = diag::train_behavior(&arm, &cfg.ppo, 1, 0).unwrap();
    diag::idm_variance(&arm, &diag::arm_chain(), &arm_behavior, &[1], &small)
        .unwrap()
        .write_csv(&mut buf)
        .unwrap();
    reports.push(("idm_variance_arm".into(), buf));
    let mut out = dir_bytes(root);
    out.extend(reports);
    out
}

fn criterion_12() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let a = command_outputs(&tmp.path().join("a"));
    let b = command_outputs(&tmp.path().join("b"));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        a.len() == b.len() && differing.is_empty(),
        format!("{} outputs compared, differing: {:?}", a.len(), differing),
    )
}

/// Criterion numbers given on the command line restrict the run to those;
/// none runs all twelve.
fn selection() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if picked.is_empty() {
        (1..=12).collect()
    } else {
        picked
    }
}

fn main() {
    let want = selection();
    let mut pass = Vec::new();
    let quick: [(usize, &str, Duration, fn() -> Outcome); 7] = [
        (1, "tabular inverse dynamics oracle", minutes(1), criterion_1),
        (2, "KL / cross-entropy gap identity", minutes(1), criterion_2),
        (3, "regulation limits", minutes(1), criterion_3),
        (4, "finite-difference gradients", minutes(2), criterion_4),
        (5, "advantage estimation oracle", Duration::from_secs(10), criterion_5),
        (6, "inference spread grows with coarser filtration", minutes(15), criterion_6),
        (7, "exact coarsening monotonicity", minutes(1), criterion_7),
    ];
    for (n, name, budget, f) in quick {
        if want.contains(&n) {
            pass.push(run(n, name, budget, f));
        }
    }

    if want.iter().any(|n| (8..=10).contains(n)) {
        let start = Instant::now();
        let pops = panic::catch_unwind(train_populations);
        let training = start.elapsed();
        println!("  trained {N_SEEDS} DiR and Multi populations in {:.0} s", training.as_secs_f64());
        let remaining = minutes(120).saturating_sub(training);
        let population: [(usize, &str, Duration, &dyn Fn(&[Paired]) -> Outcome); 3] = [
            (8, "open-ended diversity", remaining, &criterion_8),
            (9, "adaptation under broken actuators", minutes(10), &criterion_9),
            (10, "diversity score properties", minutes(1), &criterion_10),
        ];
        for (n, name, budget, f) in population {
            if !want.contains(&n) {
                continue;
            }
            match &pops {
                Ok(pops) => pass.push(run(n, name, budget, || f(pops))),
                Err(_) => {
                    println!("criterion {n:>2} FAIL {name}: population training panicked");
                    pass.push(false);
                }
            }
        }
    }
    if want.contains(&11) {
        pass.push(run(11, "conditional mutual information cases", minutes(1), criterion_11));
    }
    if want.contains(&12) {
        pass.push(run(12, "byte-identical reruns", minutes(10), criterion_12));
    }

    let passed = pass.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", pass.len());
    if passed != pass.len() {
        std::process::exit(1);
    }
}
