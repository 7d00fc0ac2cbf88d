//! Run configuration: JSON schema, presets and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dirlab::dir::{default_alpha, DirConfig};
use dirlab::env::{
    ArmParams, EnvConfig, EnvHandle, FiltrationSpec, GridParams, VariantSpec, WalkerParams,
};
use dirlab::ppo::PpoConfig;

use crate::CliError;

/// One evaluation condition: a single variant or several applied together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VariantSet {
    One(VariantSpec),
    Many(Vec<VariantSpec>),
}

impl VariantSet {
    pub fn specs(&self) -> Vec<VariantSpec> {
        match self {
            VariantSet::One(v) => vec![v.clone()],
            VariantSet::Many(v) => v.clone(),
        }
    }

    /// The base handle with every variant of the set applied.
    pub fn apply(&self, base: &EnvHandle) -> dirlab::Result<EnvHandle> {
        self.specs().iter().try_fold(base.clone(), |h, v| h.apply_variant(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Deterministic episodes per policy and condition.
    pub n_episodes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_episodes: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    /// Kept state indices seen by the inverse models; the environment's
    /// preset filtration when omitted.
    #[serde(default)]
    pub filtration: Option<FiltrationSpec>,
    #[serde(default)]
    pub dir: DirConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub variants: Vec<VariantSet>,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Filtration used when a config does not name one: the walker keeps torso
/// motion and foot contacts, the arm drops its second joint, the grid keeps
/// the x coordinate.
pub fn default_filtration(env: &EnvConfig) -> FiltrationSpec {
    let keep = match env {
        EnvConfig::DutyWalker(_) => vec![0, 1, 4, 5],
        EnvConfig::TwoLinkArm(_) => vec![0, 2, 4, 5],
        EnvConfig::TabularGrid(_) => vec![0],
        EnvConfig::Tabular { mdp, .. } => (0..mdp.state_dim()).collect(),
    };
    FiltrationSpec::new(keep).expect("preset indices are increasing")
}

pub const PRESET_NAMES: [&str; 3] = ["duty_walker", "two_link_arm", "tabular_grid"];

/// Desk-scale preset of a built-in environment.
pub fn preset(name: &str) -> Option<RunConfig> {
    let (env, variants) = match name {
        "duty_walker" => (
            EnvConfig::DutyWalker(WalkerParams::default()),
            vec![
                broken(0),
                broken(1),
                scale("mass", 0.5),
                scale("mass", 2.0),
                scale("friction", 0.5),
                VariantSet::One(VariantSpec::SensorFailure {
                    obs_indices: vec![2, 3],
                }),
            ],
        ),
        "two_link_arm" => (
            EnvConfig::TwoLinkArm(ArmParams::default()),
            vec![
                broken(0),
                broken(1),
                scale("link_length", 0.75),
                scale("link_length", 1.5),
            ],
        ),
        "tabular_grid" => (
            EnvConfig::TabularGrid(GridParams::default()),
            vec![scale("slip", 3.0), scale("slip", 5.0)],
        ),
        _ => return None,
    };
    let dir = DirConfig {
        alpha: default_alpha(env.name()),
        ..DirConfig::default()
    };
    let ppo = match env {
        EnvConfig::TabularGrid(_) => PpoConfig {
            steps_per_update: 512,
            ..PpoConfig::default()
        },
        _ => PpoConfig::default(),
    };
    Some(RunConfig {
        filtration: Some(default_filtration(&env)),
        output_dir: PathBuf::from("runs").join(name),
        env,
        dir,
        ppo,
        seeds: (1..=8).collect(),
        variants,
        eval: EvalConfig::default(),
    })
}

fn broken(i: usize) -> VariantSet {
    VariantSet::One(VariantSpec::BrokenActuator { actuator_index: i })
}

fn scale(name: &str, s: f64) -> VariantSet {
    VariantSet::One(VariantSpec::ParamScale {
        param_name: name.into(),
        scale: s,
    })
}

/// 1-based line of the first occurrence of `"key"` in the source text.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl RunConfig {
    pub fn filtration(&self) -> FiltrationSpec {
        self.filtration
            .clone()
            .unwrap_or_else(|| default_filtration(&self.env))
    }

    pub fn handle(&self) -> EnvHandle {
        EnvHandle::new(self.env.clone())
    }

    /// Parses and validates a config. Errors name the offending field and,
    /// where it can be located, its line.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.inner();
            CliError::Config(format!(
                "{origin}:{}:{}: field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })?;
        cfg.validate().map_err(|(field, msg)| {
            let key = field.rsplit('.').next().unwrap_or(&field);
            let key = key.split('[').next().unwrap_or(key);
            let at = line_of(text, key).map_or(String::new(), |l| format!("{l}:"));
            CliError::Config(format!("{origin}:{at} field `{field}`: {msg}"))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Semantic checks, reporting the field at fault.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let field = |f: &'static str| move |e: dirlab::Error| (f.to_string(), e.to_string());
        self.env.validate().map_err(field("env"))?;
        let dim = self.env.spec().obs_dim;
        self.filtration().validate_for(dim).map_err(field("filtration"))?;
        self.dir.validate().map_err(field("dir"))?;
        self.ppo.validate().map_err(field("ppo"))?;
        if self.seeds.is_empty() {
            return Err(("seeds".into(), "at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(("seeds".into(), "seeds must be distinct".into()));
        }
        let base = self.handle();
        for (i, set) in self.variants.iter().enumerate() {
            set.apply(&base)
                .map_err(|e| (format!("variants[{i}]"), e.to_string()))?;
        }
        if self.eval.n_episodes == 0 {
            return Err(("eval.n_episodes".into(), "must be at least 1".into()));
        }
        Ok(())
    }

    /// Pretty JSON with the filtration resolved, so it reparses to the same
    /// run.
    pub fn to_json(&self) -> String {
        let mut resolved = self.clone();
        resolved.filtration = Some(self.filtration());
        let mut s = serde_json::to_string_pretty(&resolved).expect("config serializes");
        s.push('\n');
        s
    }
}
