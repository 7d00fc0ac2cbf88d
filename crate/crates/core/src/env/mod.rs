//! Environments, dynamics-mismatch variants and the state filtration.
//!
//! An environment instance owns its state and its random generator; `reset`
//! reseeds the generator, so a trajectory is a pure function of the reset
//! seed and the action sequence.

mod arm;
mod filtration;
pub mod tabular;
mod variant;
mod walker;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use arm::{ArmParams, TwoLinkArm};
pub use filtration::FiltrationSpec;
pub use tabular::{GridParams, PolicyTable, TabularEnv, TabularMdp};
pub use variant::{VariantEnv, VariantSpec};
pub use walker::{DutyWalker, WalkerParams};

use crate::error::{Error, Result};

/// An observation. Entries are finite and the length equals the
/// environment's `obs_dim`.
pub type StateVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionValue {
    Continuous(Vec<f64>),
    Discrete(usize),
}

impl ActionValue {
    /// Row encoding used in rollout batches: the components, or the index as
    /// a single float.
    pub fn to_row(&self) -> Vec<f64> {
        match self {
            ActionValue::Continuous(v) => v.clone(),
            ActionValue::Discrete(i) => vec![*i as f64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Continuous { low: Vec<f64>, high: Vec<f64> },
    Discrete { n: usize },
}

impl ActionSpace {
    /// Width of an action row: the vector dimension, or 1 for an index.
    pub fn row_dim(&self) -> usize {
        match self {
            ActionSpace::Continuous { low, .. } => low.len(),
            ActionSpace::Discrete { .. } => 1,
        }
    }

    /// Number of network outputs needed to parameterize a policy.
    pub fn head_dim(&self) -> usize {
        match self {
            ActionSpace::Continuous { low, .. } => low.len(),
            ActionSpace::Discrete { n } => *n,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    /// Checks dimensions and clips continuous components into bounds.
    pub fn clip(&self, action: &ActionValue) -> Result<ActionValue> {
        match (self, action) {
            (ActionSpace::Continuous { low, high }, ActionValue::Continuous(a)) => {
                if a.len() != low.len() {
                    return Err(Error::invalid(format!(
                        "action has {} components, environment expects {}",
                        a.len(),
                        low.len()
                    )));
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("action contains non-finite values"));
                }
                Ok(ActionValue::Continuous(
                    a.iter()
                        .zip(low.iter().zip(high))
                        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                        .collect(),
                ))
            }
            (ActionSpace::Discrete { n }, ActionValue::Discrete(i)) => {
                if i >= n {
                    return Err(Error::invalid(format!("action {i} outside [0, {n})")));
                }
                Ok(action.clone())
            }
            _ => Err(Error::invalid("action kind does not match the action space")),
        }
    }
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    pub horizon: usize,
    pub gamma_hint: f64,
    /// Network inputs are `state[i] / obs_scale[i]`.
    pub obs_scale: Vec<f64>,
    /// Names of the behavior-descriptor channels, empty if none.
    pub descriptor_channels: Vec<String>,
}

impl EnvSpec {
    pub fn features(&self, state: &[f64]) -> Vec<f64> {
        state.iter().zip(&self.obs_scale).map(|(s, k)| s / k).collect()
    }

    pub fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.obs_dim {
            return Err(Error::invalid(format!(
                "state has {} entries, environment declares {}",
                state.len(),
                self.obs_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: StateVector,
    pub reward: f64,
    /// The episode ended, by horizon or by a terminal state.
    pub done: bool,
    /// The episode ended in a true terminal state (no bootstrap).
    pub terminal: bool,
}

/// Per-step behavior-descriptor sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorStep {
    /// Values of the descriptor channels in `[0, 1]`.
    pub channels: Vec<f64>,
    /// Per-actuator activity indicators (thrust applied, joint moving forward).
    pub activity: Vec<f64>,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Draws an initial state from the initial distribution using a generator
    /// seeded with `seed`.
    fn reset(&mut self, seed: u64) -> StateVector;

    /// Advances from the current state. Continuous actions are clipped into
    /// the declared bounds before the dynamics see them.
    fn step(&mut self, action: &ActionValue) -> Result<StepOutcome>;

    /// The full internal state, including anything not emitted as an
    /// observation.
    fn hidden_state(&self) -> Vec<f64>;

    /// Descriptor sample for the most recent step.
    fn descriptor(&self) -> Option<DescriptorStep> {
        None
    }
}

/// Built-in environment selection and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    TabularGrid(GridParams),
    TwoLinkArm(ArmParams),
    DutyWalker(WalkerParams),
    /// An explicit tabular MDP, mostly for tests and diagnostics.
    Tabular { mdp: TabularMdp, horizon: usize },
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::TabularGrid(_) => "tabular_grid",
            EnvConfig::TwoLinkArm(_) => "two_link_arm",
            EnvConfig::DutyWalker(_) => "duty_walker",
            EnvConfig::Tabular { .. } => "tabular",
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            EnvConfig::TabularGrid(_) => &["slip"],
            EnvConfig::TwoLinkArm(_) => &["link_length"],
            EnvConfig::DutyWalker(_) => &["mass", "friction"],
            EnvConfig::Tabular { .. } => &[],
        }
    }

    /// Checks that every parameter is finite and in range.
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{}.{name} must be positive, got {v}", self.name())))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{}.{name} must be nonnegative, got {v}", self.name())))
            }
        };
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{}.{name} must lie in [0, 1], got {v}", self.name())))
            }
        };
        let horizon = |h: usize| pos("horizon", h as f64);
        match self {
            EnvConfig::TabularGrid(p) => {
                if p.width < 2 {
                    return Err(Error::invalid("tabular_grid.width must be at least 2"));
                }
                unit("slip", p.slip)?;
                pos("gamma", p.gamma)?;
                unit("gamma", p.gamma)?;
                horizon(p.horizon)
            }
            EnvConfig::TwoLinkArm(p) => {
                pos("link_length", p.link_length)?;
                pos("dt", p.dt)?;
                nonneg("actuation_noise", p.actuation_noise)?;
                nonneg("target_radius", p.target_radius)?;
                horizon(p.horizon)
            }
            EnvConfig::DutyWalker(p) => {
                pos("mass", p.mass)?;
                nonneg("friction", p.friction)?;
                nonneg("push_gain", p.push_gain)?;
                pos("sweep_rate", p.sweep_rate)?;
                pos("return_rate", p.return_rate)?;
                nonneg("air_drag", p.air_drag)?;
                nonneg("stance_drag", p.stance_drag)?;
                unit("stumble_loss", p.stumble_loss)?;
                pos("dt", p.dt)?;
                pos("max_speed", p.max_speed)?;
                horizon(p.horizon)
            }
            EnvConfig::Tabular { horizon: h, .. } => horizon(*h),
        }
    }

    /// Multiplies a named dynamics parameter.
    pub fn scale_param(&self, name: &str, scale: f64) -> Result<EnvConfig> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        let mut out = self.clone();
        match (&mut out, name) {
            (EnvConfig::TabularGrid(p), "slip") => p.slip = (p.slip * scale).min(1.0),
            (EnvConfig::TwoLinkArm(p), "link_length") => p.link_length *= scale,
            (EnvConfig::DutyWalker(p), "mass") => p.mass *= scale,
            (EnvConfig::DutyWalker(p), "friction") => p.friction *= scale,
            _ => {
                return Err(Error::invalid(format!(
                    "environment {} has no parameter {name:?} (known: {:?})",
                    self.name(),
                    self.param_names()
                )))
            }
        }
        Ok(out)
    }

    pub fn spec(&self) -> EnvSpec {
        self.build_base().spec().clone()
    }

    fn build_base(&self) -> Box<dyn Environment> {
        match self {
            EnvConfig::TabularGrid(p) => Box::new(TabularEnv::grid(p)),
            EnvConfig::TwoLinkArm(p) => Box::new(TwoLinkArm::new(p.clone())),
            EnvConfig::DutyWalker(p) => Box::new(DutyWalker::new(p.clone())),
            EnvConfig::Tabular { mdp, horizon } => {
                Box::new(TabularEnv::new(mdp.clone(), *horizon, "tabular"))
            }
        }
    }
}

/// An environment description plus the variants applied to it. Handles are
/// values: applying a variant returns a new handle and leaves the original
/// untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvHandle {
    pub config: EnvConfig,
    #[serde(default)]
    pub variants: Vec<VariantSpec>,
}

impl EnvHandle {
    pub fn new(config: EnvConfig) -> Self {
        EnvHandle {
            config,
            variants: Vec::new(),
        }
    }

    pub fn spec(&self) -> EnvSpec {
        self.config.spec()
    }

    pub fn apply_variant(&self, variant: &VariantSpec) -> Result<EnvHandle> {
        variant.validate(&self.config)?;
        let mut out = self.clone();
        out.variants.push(variant.clone());
        Ok(out)
    }

    /// Instantiates a fresh environment.
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        let mut config = self.config.clone();
        let mut broken = Vec::new();
        let mut failed = Vec::new();
        for v in &self.variants {
            v.validate(&self.config)?;
            match v {
                VariantSpec::ParamScale { param_name, scale } => {
                    config = config.scale_param(param_name, *scale)?;
                }
                VariantSpec::BrokenActuator { actuator_index } => broken.push(*actuator_index),
                VariantSpec::SensorFailure { obs_indices } => failed.extend(obs_indices),
            }
        }
        let base = config.build_base();
        if broken.is_empty() && failed.is_empty() {
            Ok(base)
        } else {
            Ok(Box::new(VariantEnv::new(base, broken, failed)))
        }
    }

    /// Short label naming the variants, `base` when none are applied.
    pub fn variant_label(&self) -> String {
        if self.variants.is_empty() {
            return "base".into();
        }
        self.variants
            .iter()
            .map(VariantSpec::label)
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// One recorded step of a trajectory dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub state: StateVector,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Writes `t,s_0..s_{D-1},a_0..,r,done` rows.
pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (d, a) = rows
        .first()
        .map_or((0, 0), |r| (r.state.len(), r.action.len()));
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("s_{i}")));
    header.extend((0..a).map(|i| format!("a_{i}")));
    header.push("r".into());
    header.push("done".into());
    w.write_record(&header)?;
    for (t, row) in rows.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.state.iter().map(f64::to_string));
        rec.extend(row.action.iter().map(f64::to_string));
        rec.push(row.reward.to_string());
        rec.push(u8::from(row.done).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
