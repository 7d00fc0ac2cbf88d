//! Finite MDPs with explicit transition tables.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{ActionSpace, ActionValue, EnvSpec, Environment, StateVector, StepOutcome};
use crate::error::{Error, Result};
use crate::seed::Rng;

const ROW_TOL: f64 = 1e-9;

/// Draws an index from a probability vector using a single uniform.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn check_distribution(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid(format!("{what}: negative or non-finite entry")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::invalid(format!("{what}: sums to {s}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMdp {
    n_states: usize,
    n_actions: usize,
    /// `transition[(s * n_actions + a) * n_states + s']`
    transition: Vec<f64>,
    /// `reward[s * n_actions + a]`
    reward: Vec<f64>,
    initial: Vec<f64>,
    gamma: f64,
    /// Integer coordinates of each state; these are the observations.
    #[serde(default)]
    coords: Vec<Vec<i64>>,
}

/// A finite MDP. States are observed through integer coordinate vectors so
/// that coordinate filtrations are meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct TabularMdp {
    raw: RawMdp,
    index: HashMap<Vec<i64>, usize>,
}

impl TryFrom<RawMdp> for TabularMdp {
    type Error = Error;

    fn try_from(raw: RawMdp) -> Result<Self> {
        TabularMdp::from_raw(raw)
    }
}

impl From<TabularMdp> for RawMdp {
    fn from(m: TabularMdp) -> Self {
        m.raw
    }
}

impl TabularMdp {
    /// Validates and builds an MDP. Empty `coords` means each state is
    /// observed as its own index.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
        gamma: f64,
        coords: Vec<Vec<i64>>,
    ) -> Result<Self> {
        Self::from_raw(RawMdp {
            n_states,
            n_actions,
            transition,
            reward,
            initial,
            gamma,
            coords,
        })
    }

    fn from_raw(mut raw: RawMdp) -> Result<Self> {
        let (s, a) = (raw.n_states, raw.n_actions);
        if s == 0 || a == 0 {
            return Err(Error::invalid("an MDP needs at least one state and one action"));
        }
        if raw.transition.len() != s * a * s {
            return Err(Error::invalid("transition table has the wrong size"));
        }
        if raw.reward.len() != s * a || raw.initial.len() != s {
            return Err(Error::invalid("reward or initial table has the wrong size"));
        }
        if !(0.0..1.0).contains(&raw.gamma) {
            return Err(Error::invalid(format!("gamma {} outside [0, 1)", raw.gamma)));
        }
        for (i, row) in raw.transition.chunks(s).enumerate() {
            check_distribution(&format!("P(.|s={}, a={})", i / a, i % a), row)?;
        }
        check_distribution("initial distribution", &raw.initial)?;
        if raw.coords.is_empty() {
            raw.coords = (0..s as i64).map(|i| vec![i]).collect();
        }
        if raw.coords.len() != s || raw.coords.iter().any(|c| c.len() != raw.coords[0].len()) {
            return Err(Error::invalid("every state needs a coordinate vector of equal length"));
        }
        let index: HashMap<_, _> = raw
            .coords
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        if index.len() != s {
            return Err(Error::invalid("state coordinates must be distinct"));
        }
        Ok(TabularMdp { raw, index })
    }

    /// A `width × width` grid with actions N, E, S, W. Walls keep the agent in
    /// place; with probability `slip` the action is replaced by a uniformly
    /// random one. Reward 1 is collected in the far corner.
    pub fn grid(width: usize, slip: f64, gamma: f64) -> Result<Self> {
        if width < 2 || !(0.0..=1.0).contains(&slip) {
            return Err(Error::invalid("grid needs width >= 2 and slip in [0, 1]"));
        }
        let n = width * width;
        let moves: [(i64, i64); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];
        let w = width as i64;
        let mut transition = vec![0.0; n * 4 * n];
        let mut reward = vec![0.0; n * 4];
        let goal = n - 1;
        for s in 0..n {
            let (x, y) = ((s % width) as i64, (s / width) as i64);
            for a in 0..4 {
                for (b, (dx, dy)) in moves.iter().enumerate() {
                    let p = if a == b { 1.0 - slip } else { 0.0 } + slip / 4.0;
                    let (nx, ny) = (x + dx, y + dy);
                    let next = if (0..w).contains(&nx) && (0..w).contains(&ny) {
                        (ny * w + nx) as usize
                    } else {
                        s
                    };
                    transition[(s * 4 + a) * n + next] += p;
                }
                if s == goal {
                    reward[s * 4 + a] = 1.0;
                }
            }
        }
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        let coords = (0..n)
            .map(|s| vec![(s % width) as i64, (s / width) as i64])
            .collect();
        Self::new(n, 4, transition, reward, initial, gamma, coords)
    }

    /// A random MDP whose states are the mixed-radix digit vectors over
    /// `radices`; every transition row has full support.
    pub fn random(rng: &mut Rng, radices: &[usize], n_actions: usize, gamma: f64) -> Result<Self> {
        let n = radices.iter().product::<usize>();
        let mut transition = Vec::with_capacity(n * n_actions * n);
        for _ in 0..n * n_actions {
            transition.extend(random_simplex(rng, n));
        }
        let reward = (0..n * n_actions).map(|_| rng.random::<f64>()).collect();
        let initial = random_simplex(rng, n);
        Self::new(n, n_actions, transition, reward, initial, gamma, mixed_radix(radices))
    }

    /// Random mixed-radix shape with one to three coordinates, each of radix
    /// 2 to 4, and at most `max_states` states in total.
    pub fn random_radices(rng: &mut Rng, max_states: usize) -> Vec<usize> {
        let dims = rng.random_range(1..=3usize);
        let mut radices: Vec<usize> = Vec::with_capacity(dims);
        for _ in 0..dims {
            let used: usize = radices.iter().product();
            let cap = (max_states / used).min(4);
            if cap < 2 {
                break;
            }
            radices.push(rng.random_range(2..=cap));
        }
        if radices.is_empty() {
            radices.push(max_states.clamp(1, 4));
        }
        radices
    }

    /// A random deterministic MDP in which distinct actions from the same
    /// state always reach distinct next states.
    pub fn random_injective(
        rng: &mut Rng,
        radices: &[usize],
        n_actions: usize,
        gamma: f64,
    ) -> Result<Self> {
        let n = radices.iter().product::<usize>();
        if n < n_actions {
            return Err(Error::invalid("injective MDP needs at least as many states as actions"));
        }
        let mut transition = vec![0.0; n * n_actions * n];
        for s in 0..n {
            let mut targets: Vec<usize> = (0..n).collect();
            for i in 0..n_actions {
                let j = rng.random_range(i..n);
                targets.swap(i, j);
                transition[(s * n_actions + i) * n + targets[i]] = 1.0;
            }
        }
        let reward = (0..n * n_actions).map(|_| rng.random::<f64>()).collect();
        let initial = random_simplex(rng, n);
        Self::new(n, n_actions, transition, reward, initial, gamma, mixed_radix(radices))
    }

    pub fn n_states(&self) -> usize {
        self.raw.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.raw.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.raw.gamma
    }

    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.raw.transition[(s * self.raw.n_actions + a) * self.raw.n_states + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.raw.n_states;
        let start = (s * self.raw.n_actions + a) * n;
        &self.raw.transition[start..start + n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.raw.reward[s * self.raw.n_actions + a]
    }

    pub fn initial(&self) -> &[f64] {
        &self.raw.initial
    }

    pub fn coords(&self, s: usize) -> &[i64] {
        &self.raw.coords[s]
    }

    pub fn state_dim(&self) -> usize {
        self.raw.coords[0].len()
    }

    pub fn state_vector(&self, s: usize) -> StateVector {
        self.raw.coords[s].iter().map(|&c| c as f64).collect()
    }

    /// Recovers the state index from an observed coordinate vector.
    pub fn index_of(&self, state: &[f64]) -> Option<usize> {
        let key: Vec<i64> = state.iter().map(|v| v.round() as i64).collect();
        self.index.get(&key).copied()
    }

    /// State-to-state transition matrix under `policy`.
    pub fn policy_transition(&self, policy: &PolicyTable) -> Result<DMatrix<f64>> {
        policy.check_shape(self)?;
        let n = self.n_states();
        let mut m = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions() {
                let pa = policy.get(s, a);
                if pa == 0.0 {
                    continue;
                }
                for (next, p) in self.transition_row(s, a).iter().enumerate() {
                    m[(s, next)] += pa * p;
                }
            }
        }
        Ok(m)
    }

    /// Normalized discounted state visitation
    /// `d = (1 - γ) μᵀ (I - γ P_π)⁻¹`, by a direct linear solve.
    pub fn discounted_visitation(&self, policy: &PolicyTable) -> Result<Vec<f64>> {
        let n = self.n_states();
        let p = self.policy_transition(policy)?;
        let g = self.gamma();
        let lhs = DMatrix::identity(n, n) - p.transpose() * g;
        let rhs = DVector::from_iterator(n, self.initial().iter().map(|m| (1.0 - g) * m));
        let d = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Divergence("singular visitation system".into()))?;
        Ok(d.iter().copied().collect())
    }
}

fn random_simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    // cubing spreads the mass unevenly while keeping full support
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn mixed_radix(radices: &[usize]) -> Vec<Vec<i64>> {
    let n = radices.iter().product::<usize>();
    (0..n)
        .map(|mut s| {
            radices
                .iter()
                .map(|&r| {
                    let d = s % r;
                    s /= r;
                    d as i64
                })
                .collect()
        })
        .collect()
}

/// A stochastic policy over a finite MDP: `probs[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(Error::invalid("policy table has the wrong size"));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            check_distribution(&format!("pi(.|s={s})"), row)?;
        }
        Ok(PolicyTable {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// A random policy with full support.
    pub fn random(rng: &mut Rng, n_states: usize, n_actions: usize) -> Self {
        let probs = (0..n_states)
            .flat_map(|_| random_simplex(rng, n_actions))
            .collect();
        PolicyTable {
            n_states,
            n_actions,
            probs,
        }
    }

    /// Always takes `actions[s]`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::invalid(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(PolicyTable {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::invalid(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Parameters of the built-in grid world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub width: usize,
    pub slip: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            width: 5,
            slip: 0.1,
            horizon: 20,
            gamma: 0.99,
        }
    }
}

/// Episodic simulator over a [`TabularMdp`] with a fixed horizon.
pub struct TabularEnv {
    mdp: TabularMdp,
    spec: EnvSpec,
    rng: Rng,
    state: usize,
    t: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, horizon: usize, name: &str) -> Self {
        let dim = mdp.state_dim();
        let obs_scale = (0..dim)
            .map(|k| {
                (0..mdp.n_states())
                    .map(|s| mdp.coords(s)[k].unsigned_abs() as f64)
                    .fold(1.0, f64::max)
            })
            .collect();
        let spec = EnvSpec {
            name: name.into(),
            obs_dim: dim,
            action_space: ActionSpace::Discrete { n: mdp.n_actions() },
            horizon,
            gamma_hint: mdp.gamma(),
            obs_scale,
            descriptor_channels: Vec::new(),
        };
        TabularEnv {
            mdp,
            spec,
            rng: Rng::seed_from_u64(0),
            state: 0,
            t: 0,
        }
    }

    pub fn grid(p: &GridParams) -> Self {
        let mdp = TabularMdp::grid(p.width, p.slip.clamp(0.0, 1.0), p.gamma)
            .expect("grid parameters are validated by construction");
        TabularEnv::new(mdp, p.horizon, "tabular_grid")
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl Environment for TabularEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        self.rng = Rng::seed_from_u64(seed);
        self.state = sample_index(self.mdp.initial(), self.rng.random());
        self.t = 0;
        self.mdp.state_vector(self.state)
    }

    fn step(&mut self, action: &ActionValue) -> Result<StepOutcome> {
        let a = match self.spec.action_space.clip(action)? {
            ActionValue::Discrete(a) => a,
            ActionValue::Continuous(_) => unreachable!("clip checks the action kind"),
        };
        let reward = self.mdp.reward(self.state, a);
        let u = self.rng.random();
        self.state = sample_index(self.mdp.transition_row(self.state, a), u);
        self.t += 1;
        Ok(StepOutcome {
            next: self.mdp.state_vector(self.state),
            reward,
            done: self.t >= self.spec.horizon,
            terminal: false,
        })
    }

    fn hidden_state(&self) -> Vec<f64> {
        vec![self.state as f64, self.t as f64]
    }
}
