//! Planar two-link reaching arm with velocity control.
//!
//! Observation: `(θ1, θ2, ω1, ω2, sin φ, cos φ)` where `φ` is the target
//! angle on a circle of fixed radius. The action sets joint angular
//! velocities in `[-1, 1]`; the realized displacement is perturbed by
//! multiplicative actuation noise, so a zero action leaves the angles fixed.

use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{
    ActionSpace, ActionValue, DescriptorStep, EnvSpec, Environment, StateVector, StepOutcome,
};
use crate::error::Result;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmParams {
    /// Length of each link.
    pub link_length: f64,
    pub dt: f64,
    /// Standard deviation of the multiplicative actuation noise.
    pub actuation_noise: f64,
    pub target_radius: f64,
    pub horizon: usize,
}

impl Default for ArmParams {
    fn default() -> Self {
        ArmParams {
            link_length: 1.0,
            dt: 0.1,
            actuation_noise: 0.2,
            target_radius: 1.2,
            horizon: 50,
        }
    }
}

pub struct TwoLinkArm {
    params: ArmParams,
    spec: EnvSpec,
    rng: Rng,
    theta: [f64; 2],
    omega: [f64; 2],
    phi: f64,
    t: usize,
    last: Option<DescriptorStep>,
}

impl TwoLinkArm {
    pub fn new(params: ArmParams) -> Self {
        let spec = EnvSpec {
            name: "two_link_arm".into(),
            obs_dim: 6,
            action_space: ActionSpace::Continuous {
                low: vec![-1.0; 2],
                high: vec![1.0; 2],
            },
            horizon: params.horizon,
            gamma_hint: 0.99,
            obs_scale: vec![PI, PI, 1.0, 1.0, 1.0, 1.0],
            descriptor_channels: vec!["joint0_forward".into(), "joint1_forward".into()],
        };
        TwoLinkArm {
            params,
            spec,
            rng: Rng::seed_from_u64(0),
            theta: [0.0; 2],
            omega: [0.0; 2],
            phi: 0.0,
            t: 0,
            last: None,
        }
    }

    fn observe(&self) -> StateVector {
        vec![
            self.theta[0],
            self.theta[1],
            self.omega[0],
            self.omega[1],
            self.phi.sin(),
            self.phi.cos(),
        ]
    }

    pub fn end_effector(&self) -> (f64, f64) {
        let l = self.params.link_length;
        let (a, b) = (self.theta[0], self.theta[0] + self.theta[1]);
        (l * (a.cos() + b.cos()), l * (a.sin() + b.sin()))
    }

    fn distance_to_target(&self) -> f64 {
        let (x, y) = self.end_effector();
        let r = self.params.target_radius;
        (x - r * self.phi.cos()).hypot(y - r * self.phi.sin())
    }
}

impl Environment for TwoLinkArm {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        self.rng = Rng::seed_from_u64(seed);
        self.theta = [
            self.rng.random_range(-PI / 2.0..PI / 2.0),
            self.rng.random_range(-PI / 2.0..PI / 2.0),
        ];
        self.omega = [0.0; 2];
        self.phi = self.rng.random_range(-PI..PI);
        self.t = 0;
        self.last = None;
        self.observe()
    }

    fn step(&mut self, action: &ActionValue) -> Result<StepOutcome> {
        let a = match self.spec.action_space.clip(action)? {
            ActionValue::Continuous(a) => a,
            ActionValue::Discrete(_) => unreachable!("clip checks the action kind"),
        };
        for j in 0..2 {
            let xi: f64 = StandardNormal.sample(&mut self.rng);
            self.theta[j] += self.params.dt * a[j] * (1.0 + self.params.actuation_noise * xi);
            self.omega[j] = a[j];
        }
        self.t += 1;
        self.last = Some(DescriptorStep {
            channels: a.iter().map(|&v| f64::from(v > 0.0)).collect(),
            activity: a.iter().map(|&v| f64::from(v != 0.0)).collect(),
        });
        Ok(StepOutcome {
            next: self.observe(),
            reward: -self.distance_to_target(),
            done: self.t >= self.spec.horizon,
            terminal: false,
        })
    }

    fn hidden_state(&self) -> Vec<f64> {
        vec![
            self.theta[0],
            self.theta[1],
            self.omega[0],
            self.omega[1],
            self.phi,
            self.t as f64,
        ]
    }

    fn descriptor(&self) -> Option<DescriptorStep> {
        self.last.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_action_keeps_angles() {
        let mut env = TwoLinkArm::new(ArmParams::default());
        let s0 = env.reset(3);
        for _ in 0..10 {
            let out = env.step(&ActionValue::Continuous(vec![0.0, 0.0])).unwrap();
            assert_eq!(out.next[..2], s0[..2]);
            assert_eq!(out.next[4..], s0[4..]);
        }
    }

    #[test]
    fn horizon_ends_episode() {
        let mut env = TwoLinkArm::new(ArmParams::default());
        env.reset(0);
        let a = ActionValue::Continuous(vec![0.5, -0.5]);
        for t in 1..=50 {
            let out = env.step(&a).unwrap();
            assert_eq!(out.done, t == 50);
            assert!(!out.terminal);
        }
    }

    #[test]
    fn reward_is_negative_distance() {
        let mut env = TwoLinkArm::new(ArmParams::default());
        env.reset(1);
        let out = env.step(&ActionValue::Continuous(vec![0.0, 0.0])).unwrap();
        assert!(out.reward <= 0.0);
        assert!((out.reward + env.distance_to_target()).abs() < 1e-15);
    }
}
