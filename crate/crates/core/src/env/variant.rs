use serde::{Deserialize, Serialize};

use super::{
    ActionSpace, ActionValue, DescriptorStep, EnvConfig, EnvSpec, Environment, StateVector,
    StepOutcome,
};
use crate::error::{Error, Result};

/// A perturbation of an environment's dynamics or observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantSpec {
    /// The indexed action component is replaced by 0 before the dynamics.
    BrokenActuator { actuator_index: usize },
    /// A named dynamics parameter is multiplied by `scale`.
    ParamScale { param_name: String, scale: f64 },
    /// The listed observation entries always read 0.
    SensorFailure { obs_indices: Vec<usize> },
}

impl VariantSpec {
    pub fn validate(&self, config: &EnvConfig) -> Result<()> {
        let spec = config.spec();
        match self {
            VariantSpec::BrokenActuator { actuator_index } => match &spec.action_space {
                ActionSpace::Discrete { .. } => Err(Error::invalid(format!(
                    "broken actuator needs a continuous action space; {} is discrete",
                    spec.name
                ))),
                ActionSpace::Continuous { low, .. } if *actuator_index >= low.len() => {
                    Err(Error::invalid(format!(
                        "actuator {actuator_index} out of range for {} action components",
                        low.len()
                    )))
                }
                _ => Ok(()),
            },
            VariantSpec::ParamScale { param_name, scale } => {
                config.scale_param(param_name, *scale).map(|_| ())
            }
            VariantSpec::SensorFailure { obs_indices } => {
                if obs_indices.is_empty() {
                    return Err(Error::invalid("sensor failure lists no observations"));
                }
                match obs_indices.iter().find(|&&i| i >= spec.obs_dim) {
                    Some(i) => Err(Error::invalid(format!(
                        "observation index {i} out of range for dimension {}",
                        spec.obs_dim
                    ))),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            VariantSpec::BrokenActuator { actuator_index } => format!("broken{actuator_index}"),
            VariantSpec::ParamScale { param_name, scale } => format!("{param_name}x{scale}"),
            VariantSpec::SensorFailure { obs_indices } => {
                let ids: Vec<String> = obs_indices.iter().map(usize::to_string).collect();
                format!("sensor{}", ids.join("_"))
            }
        }
    }
}

/// Applies broken actuators and failed sensors around an inner environment.
pub struct VariantEnv {
    inner: Box<dyn Environment>,
    broken: Vec<usize>,
    failed: Vec<usize>,
}

impl VariantEnv {
    pub fn new(inner: Box<dyn Environment>, broken: Vec<usize>, failed: Vec<usize>) -> Self {
        VariantEnv {
            inner,
            broken,
            failed,
        }
    }

    fn mask(&self, mut state: StateVector) -> StateVector {
        for &i in &self.failed {
            state[i] = 0.0;
        }
        state
    }
}

impl Environment for VariantEnv {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        let s = self.inner.reset(seed);
        self.mask(s)
    }

    fn step(&mut self, action: &ActionValue) -> Result<StepOutcome> {
        let action = match action {
            ActionValue::Continuous(a) if !self.broken.is_empty() => {
                let mut a = a.clone();
                for &i in &self.broken {
                    if let Some(v) = a.get_mut(i) {
                        *v = 0.0;
                    }
                }
                ActionValue::Continuous(a)
            }
            other => other.clone(),
        };
        let mut out = self.inner.step(&action)?;
        out.next = self.mask(out.next);
        Ok(out)
    }

    fn hidden_state(&self) -> Vec<f64> {
        self.inner.hidden_state()
    }

    fn descriptor(&self) -> Option<DescriptorStep> {
        self.inner.descriptor()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ArmParams, EnvHandle, GridParams, WalkerParams};

    fn walker() -> EnvHandle {
        EnvHandle::new(EnvConfig::DutyWalker(WalkerParams::default()))
    }

    #[test]
    fn broken_actuator_matches_manual_zeroing() {
        let broken = walker()
            .apply_variant(&VariantSpec::BrokenActuator { actuator_index: 0 })
            .unwrap();
        let mut a = broken.build().unwrap();
        let mut b = walker().build().unwrap();
        assert_eq!(a.reset(9), b.reset(9));
        for t in 0..100 {
            let x = (t as f64 * 0.37).sin();
            let y = (t as f64 * 0.91).cos();
            let oa = a.step(&ActionValue::Continuous(vec![x, y])).unwrap();
            let ob = b.step(&ActionValue::Continuous(vec![0.0, y])).unwrap();
            assert_eq!(oa, ob);
        }
    }

    #[test]
    fn sensor_failure_zeroes_only_listed_entries() {
        let failed = walker()
            .apply_variant(&VariantSpec::SensorFailure {
                obs_indices: vec![1, 3],
            })
            .unwrap();
        let mut a = failed.build().unwrap();
        let mut b = walker().build().unwrap();
        let (sa, sb) = (a.reset(4), b.reset(4));
        for i in 0..6 {
            assert_eq!(sa[i], if i == 1 || i == 3 { 0.0 } else { sb[i] });
        }
        for _ in 0..50 {
            let act = ActionValue::Continuous(vec![0.8, 0.3]);
            let (oa, ob) = (a.step(&act).unwrap(), b.step(&act).unwrap());
            for i in 0..6 {
                let expect = if i == 1 || i == 3 { 0.0 } else { ob.next[i] };
                assert_eq!(oa.next[i], expect);
            }
            assert_eq!(oa.reward, ob.reward);
        }
    }

    #[test]
    fn broken_actuator_rejected_on_discrete_env() {
        let grid = EnvHandle::new(EnvConfig::TabularGrid(GridParams::default()));
        let err = grid
            .apply_variant(&VariantSpec::BrokenActuator { actuator_index: 0 })
            .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn variants_compose_without_mutating_the_base() {
        let base = EnvHandle::new(EnvConfig::TwoLinkArm(ArmParams::default()));
        let scaled = base
            .apply_variant(&VariantSpec::ParamScale {
                param_name: "link_length".into(),
                scale: 1.5,
            })
            .unwrap();
        let both = scaled
            .apply_variant(&VariantSpec::BrokenActuator { actuator_index: 1 })
            .unwrap();
        assert!(base.variants.is_empty());
        assert_eq!(scaled.variants.len(), 1);
        assert_eq!(both.variant_label(), "link_lengthx1.5+broken1");
        assert!(base
            .apply_variant(&VariantSpec::ParamScale {
                param_name: "mass".into(),
                scale: 2.0
            })
            .is_err());
    }

    #[test]
    fn serde_shape() {
        let v: VariantSpec =
            serde_json::from_str(r#"{"kind":"broken_actuator","actuator_index":1}"#).unwrap();
        assert_eq!(v, VariantSpec::BrokenActuator { actuator_index: 1 });
    }
}
