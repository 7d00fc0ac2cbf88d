//! Library side of the `dir-lab` command: run configuration, the train and
//! adapt drivers, and the diagnostics.
//!
//! Exit codes are a stable contract: 0 success, 1 a diagnostic check failed,
//! 2 configuration or usage error, 3 training failure, 4 corrupt archive.

pub mod config;
pub mod diag;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use dirlab::dir::{run_open_ended, PolicyArchive};
use dirlab::env::EnvHandle;
use dirlab::evalkit::{few_shot_adapt, write_adaptation_csv, AdaptationResult};

pub use config::{preset, RunConfig, VariantSet};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("check failed: {0}")]
    Check(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("archive error: {0}")]
    Archive(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Training(_) => 3,
            CliError::Archive(_) => 4,
        }
    }
}

/// Maps library errors raised while running (not while configuring).
fn runtime(e: dirlab::Error) -> CliError {
    match e {
        dirlab::Error::Corrupt(m) => CliError::Archive(m),
        dirlab::Error::InvalidArgument(m) | dirlab::Error::Usage(m) => CliError::Config(m),
        other => CliError::Training(other.to_string()),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Training(format!("{}: {e}", path.display()))
}

/// Runs `f` on a pool sized by `DIRLAB_THREADS` (all cores when unset).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let threads = match std::env::var("DIRLAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("DIRLAB_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Trains one archive per configured seed under `<out>/seed_<s>/`. With
/// `resume`, existing archives of the same run are continued; otherwise an
/// existing archive is an error.
pub fn cmd_train(cfg: &RunConfig, out: &Path, resume: bool) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let cfg_path = out.join("config.json");
    fs::write(&cfg_path, cfg.to_json()).map_err(|e| io_err(&cfg_path, e))?;
    let results: Vec<Result<PathBuf, CliError>> = with_pool(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| train_seed(cfg, out, seed, resume))
            .collect()
    })?;
    results.into_iter().collect()
}

fn train_seed(cfg: &RunConfig, out: &Path, seed: u64, resume: bool) -> Result<PathBuf, CliError> {
    let dir = seed_dir(out, seed);
    let fresh = PolicyArchive::new(cfg.handle(), cfg.filtration(), cfg.dir.clone(), cfg.ppo.clone(), seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut archive = if dir.join("meta.json").exists() {
        if !resume {
            return Err(CliError::Config(format!(
                "{} already holds an archive; pass --resume to continue it",
                dir.display()
            )));
        }
        let existing = PolicyArchive::load(&dir).map_err(|e| CliError::Archive(e.to_string()))?;
        if !existing.same_run(&fresh) {
            return Err(CliError::Config(format!(
                "{} was trained with a different configuration",
                dir.display()
            )));
        }
        existing
    } else {
        fresh
    };
    run_open_ended(&mut archive, Some(&dir)).map_err(|e| match e {
        dirlab::Error::Corrupt(m) => CliError::Archive(m),
        other => CliError::Training(format!("seed {seed}: {other}")),
    })?;
    Ok(dir)
}

pub fn load_archive(dir: &Path) -> Result<PolicyArchive, CliError> {
    PolicyArchive::load(dir).map_err(|e| CliError::Archive(format!("{}: {e}", dir.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptationSummary {
    pub archive: String,
    pub n_policies: usize,
    pub n_episodes: usize,
    pub seed: u64,
    pub results: Vec<AdaptationResult>,
}

/// Evaluates the archive on the unvaried environment followed by every
/// variant set.
pub fn cmd_adapt(
    archive: &PolicyArchive,
    variants: &[VariantSet],
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<AdaptationResult>, CliError> {
    let base = archive.env.clone();
    let mut handles: Vec<EnvHandle> = vec![base.clone()];
    for (i, set) in variants.iter().enumerate() {
        handles.push(
            set.apply(&base)
                .map_err(|e| CliError::Config(format!("variants[{i}]: {e}")))?,
        );
    }
    let results: Vec<Result<AdaptationResult, CliError>> = with_pool(|| {
        handles
            .par_iter()
            .map(|h| few_shot_adapt(archive, h, n_episodes, seed).map_err(runtime))
            .collect()
    })?;
    results.into_iter().collect()
}

/// Writes `adaptation.csv` and `adaptation.json` into `out`.
pub fn write_adaptation(out: &Path, summary: &AdaptationSummary) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut csv = Vec::new();
    write_adaptation_csv(&mut csv, &summary.results).map_err(runtime)?;
    let p = out.join("adaptation.csv");
    fs::write(&p, csv).map_err(|e| io_err(&p, e))?;
    let mut json = serde_json::to_string_pretty(summary).expect("summary serializes");
    json.push('\n');
    let p = out.join("adaptation.json");
    fs::write(&p, json).map_err(|e| io_err(&p, e))
}

/// Reads a variant matrix: a JSON array of variant sets.
pub fn load_variants(path: &Path) -> Result<Vec<VariantSet>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        CliError::Config(format!(
            "{}:{}:{}: field `{}`: {inner}",
            path.display(),
            inner.line(),
            inner.column(),
            e.path()
        ))
    })
}
