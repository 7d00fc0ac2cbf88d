//! Two-legged planar walker with duty-cycle dynamics.
//!
//! Each leg is either grounded (stance) or lifted (swing) and has a phase
//! `p ∈ [0, 1]`. A grounded leg driven with positive action sweeps backwards,
//! advancing `p` and pushing the torso forward; at `p = 1` it lifts off. A
//! grounded leg given no thrust stays planted and drags. A lifted leg swings
//! forward, faster for larger action, and lands when `p` reaches 0. When
//! both feet are off the ground after a step the torso stumbles and loses a
//! fixed fraction of its velocity, so a fast two-leg gait has to keep the
//! legs out of phase, while hopping on one leg with the other planted is
//! always supported.
//!
//! Observation: `(dx, v, p0, p1, c0, c1)` with `c` the contact flags.
//! Reward: forward displacement `dx` of the step.

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{
    ActionSpace, ActionValue, DescriptorStep, EnvSpec, Environment, StateVector, StepOutcome,
};
use crate::error::Result;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerParams {
    pub mass: f64,
    pub friction: f64,
    /// Forward impulse per unit of stance sweep.
    pub push_gain: f64,
    /// Phase advance of a stance leg at full thrust.
    pub sweep_rate: f64,
    /// Phase return of a swing leg at full action.
    pub return_rate: f64,
    pub air_drag: f64,
    /// Drag coefficient of a planted, idle leg.
    pub stance_drag: f64,
    /// Fraction of velocity lost when no foot is grounded.
    pub stumble_loss: f64,
    pub dt: f64,
    pub horizon: usize,
    /// Episodes end early when the speed exceeds this bound.
    pub max_speed: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        WalkerParams {
            mass: 1.0,
            friction: 1.0,
            push_gain: 1.0,
            sweep_rate: 0.5,
            return_rate: 0.34,
            air_drag: 0.5,
            stance_drag: 0.1,
            stumble_loss: 0.5,
            dt: 0.1,
            horizon: 200,
            max_speed: 50.0,
        }
    }
}

pub struct DutyWalker {
    params: WalkerParams,
    spec: EnvSpec,
    rng: Rng,
    x: f64,
    dx: f64,
    v: f64,
    phase: [f64; 2],
    contact: [bool; 2],
    t: usize,
    last: Option<DescriptorStep>,
}

impl DutyWalker {
    pub fn new(params: WalkerParams) -> Self {
        let spec = EnvSpec {
            name: "duty_walker".into(),
            obs_dim: 6,
            action_space: ActionSpace::Continuous {
                low: vec![-1.0; 2],
                high: vec![1.0; 2],
            },
            horizon: params.horizon,
            gamma_hint: 0.99,
            obs_scale: vec![1.0; 6],
            descriptor_channels: vec!["leg0_contact".into(), "leg1_contact".into()],
        };
        DutyWalker {
            params,
            spec,
            rng: Rng::seed_from_u64(0),
            x: 0.0,
            dx: 0.0,
            v: 0.0,
            phase: [0.0; 2],
            contact: [true; 2],
            t: 0,
            last: None,
        }
    }

    fn observe(&self) -> StateVector {
        vec![
            self.dx,
            self.v,
            self.phase[0],
            self.phase[1],
            f64::from(u8::from(self.contact[0])),
            f64::from(u8::from(self.contact[1])),
        ]
    }
}

impl Environment for DutyWalker {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        self.rng = Rng::seed_from_u64(seed);
        self.x = 0.0;
        self.dx = 0.0;
        self.v = 0.0;
        self.phase = [self.rng.random::<f64>(), self.rng.random::<f64>()];
        self.contact = [true; 2];
        self.t = 0;
        self.last = None;
        self.observe()
    }

    fn step(&mut self, action: &ActionValue) -> Result<StepOutcome> {
        let a = match self.spec.action_space.clip(action)? {
            ActionValue::Continuous(a) => a,
            ActionValue::Discrete(_) => unreachable!("clip checks the action kind"),
        };
        let p = &self.params;
        let grip = p.friction.min(1.0);
        let mut impulse = 0.0;
        let mut planted = 0.0;
        let mut thrust = [0.0; 2];
        for leg in 0..2 {
            if self.contact[leg] {
                let u = a[leg].max(0.0);
                if u > 0.0 {
                    let dp = (p.sweep_rate * u).min(1.0 - self.phase[leg]);
                    self.phase[leg] += dp;
                    impulse += p.push_gain * grip * dp;
                    thrust[leg] = 1.0;
                    if self.phase[leg] >= 1.0 {
                        self.phase[leg] = 1.0;
                        self.contact[leg] = false;
                    }
                } else {
                    planted += 1.0;
                }
            } else {
                let rate = p.return_rate * (0.25 + 0.75 * (a[leg] + 1.0) / 2.0);
                self.phase[leg] -= rate;
                if self.phase[leg] <= 0.0 {
                    self.phase[leg] = 0.0;
                    self.contact[leg] = true;
                }
            }
        }
        // semi-implicit drag keeps the update stable for any positive mass
        let damping = p.dt * (p.air_drag * self.v.abs() + p.stance_drag * p.friction * planted);
        self.v = (self.v + impulse / p.mass) / (1.0 + damping / p.mass);
        if !self.contact[0] && !self.contact[1] {
            self.v *= 1.0 - p.stumble_loss.clamp(0.0, 1.0);
        }
        self.dx = self.v * p.dt;
        self.x += self.dx;
        self.t += 1;
        self.last = Some(DescriptorStep {
            channels: self.contact.iter().map(|&c| f64::from(u8::from(c))).collect(),
            activity: thrust.to_vec(),
        });
        let terminal = self.v.abs() > p.max_speed;
        Ok(StepOutcome {
            next: self.observe(),
            reward: self.dx,
            done: terminal || self.t >= self.spec.horizon,
            terminal,
        })
    }

    fn hidden_state(&self) -> Vec<f64> {
        let mut s = self.observe();
        s.push(self.x);
        s.push(self.t as f64);
        s
    }

    fn descriptor(&self) -> Option<DescriptorStep> {
        self.last.clone()
    }
}
