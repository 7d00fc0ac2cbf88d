//! `dir-lab`: train diverse policy populations, adapt them to varied
//! environments and run the diagnostics.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use dirlab::env::{EnvConfig, EnvHandle, FiltrationSpec};
use dirlab::evalkit::VarianceExperimentConfig;
use dirlab::ppo::PpoConfig;
use dirlab_cli::config::{preset, RunConfig, PRESET_NAMES};
use dirlab_cli::diag::{self, KlCeInput, MiInput, KLCE_TOL};
use dirlab_cli::{cmd_adapt, cmd_train, load_archive, load_variants, write_adaptation, AdaptationSummary, CliError};

#[derive(Parser)]
#[command(name = "dir-lab", version, about = "Diverse policy populations regulated by a state filtration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one archive per seed.
    Train {
        /// Run configuration (JSON).
        #[arg(short, long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Use a built-in preset instead of a config file.
        #[arg(long)]
        preset: Option<String>,
        /// Output directory; overrides the config's `output_dir`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Continue existing archives of the same run.
        #[arg(long)]
        resume: bool,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Few-shot adaptation of an archive to environment variants.
    Adapt {
        #[arg(short, long)]
        archive: PathBuf,
        /// JSON array of variant sets; the unvaried environment is always
        /// evaluated first.
        #[arg(short, long)]
        variants: Option<PathBuf>,
        #[arg(short = 'n', long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for `adaptation.csv` and `adaptation.json`; defaults to
        /// the archive directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Diagnostics.
    Diag {
        #[command(subcommand)]
        kind: Diag,
    },
    /// List presets or print one as JSON.
    Preset { name: Option<String> },
}

#[derive(Args)]
struct ArchiveArgs {
    #[arg(short, long)]
    archive: PathBuf,
    #[arg(short = 'n', long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Diag {
    /// Inverse-model spread across a nested filtration chain.
    IdmVariance {
        /// Environment preset providing the dynamics.
        #[arg(long, default_value = "two_link_arm")]
        env: String,
        /// Filtration levels separated by `;`, indices by `,`. Defaults to
        /// the arm's full / no second-joint velocity / no second joint chain.
        #[arg(long)]
        chain: Option<String>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Policy 1 of this archive is the behavior policy; otherwise one is
        /// trained with plain PPO.
        #[arg(long)]
        behavior_archive: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        behavior_updates: usize,
        /// Training passes over the behavior data per inverse model.
        #[arg(long)]
        epochs: Option<usize>,
        /// Inverse model learning rate.
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Exact conditional mutual information on tabular instances.
    Mi {
        /// JSON with `mdp`, `policies` and `filtration`.
        #[arg(short, long, conflicts_with = "random_instances")]
        input: Option<PathBuf>,
        #[arg(long)]
        random_instances: Option<usize>,
        #[arg(long, default_value_t = 3)]
        policies: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// KL versus cross-entropy gap identity on tabular instances.
    Klce {
        /// JSON with `mdp`, `policy_k`, `policy_i` and `filtration`.
        #[arg(short, long, conflicts_with = "random_instances")]
        input: Option<PathBuf>,
        #[arg(long)]
        random_instances: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Determinant diversity of an archive.
    DiversityScore {
        #[arg(short, long)]
        archive: PathBuf,
        #[arg(long, default_value_t = 256)]
        probe: usize,
        #[arg(long, default_value_t = 1.0)]
        length_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Per-policy mean returns, worst first.
    Percentile(ArchiveArgs),
    /// Per-episode behavior descriptors.
    Descriptors(ArchiveArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<CliError>().map_or(3, CliError::exit_code);
            eprintln!("dir-lab: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}

/// Writes to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let mut buf = Vec::new();
            write(&mut buf)?;
            fs::write(p, buf).with_context(|| format!("writing {}", p.display()))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_chain(text: &str) -> Result<Vec<FiltrationSpec>, CliError> {
    text.split(';')
        .map(|level| {
            let keep = level
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(format!("--chain: {e}")))?;
            FiltrationSpec::new(keep).map_err(|e| CliError::Config(format!("--chain: {e}")))
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            config,
            preset: preset_name,
            out,
            resume,
            print_config,
        } => {
            let cfg = match (config, preset_name) {
                (Some(path), _) => RunConfig::load(&path)?,
                (None, Some(name)) => preset(&name)
                    .ok_or_else(|| CliError::Config(format!("unknown preset {name:?} (known: {PRESET_NAMES:?})")))?,
                (None, None) => return Err(CliError::Config("pass --config or --preset".into()).into()),
            };
            if print_config {
                print!("{}", cfg.to_json());
                return Ok(());
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            for dir in cmd_train(&cfg, &out, resume)? {
                println!("{}", dir.display());
            }
        }
        Command::Adapt {
            archive,
            variants,
            episodes,
            seed,
            out,
        } => {
            let arch = load_archive(&archive)?;
            let sets = match variants {
                Some(p) => load_variants(&p)?,
                None => Vec::new(),
            };
            if episodes == 0 {
                return Err(CliError::Config("--episodes must be at least 1".into()).into());
            }
            let results = cmd_adapt(&arch, &sets, episodes, seed)?;
            let summary = AdaptationSummary {
                archive: archive.display().to_string(),
                n_policies: arch.len(),
                n_episodes: episodes,
                seed,
                results,
            };
            let out = out.unwrap_or(archive);
            write_adaptation(&out, &summary)?;
            for r in &summary.results {
                println!("{}: selected policy {} (mean return {})", r.variant, r.selected, r.selected_return);
            }
        }
        Command::Diag { kind } => run_diag(kind)?,
        Command::Preset { name } => match name {
            None => PRESET_NAMES.iter().for_each(|n| println!("{n}")),
            Some(n) => {
                let cfg = preset(&n).ok_or_else(|| CliError::Config(format!("unknown preset {n:?}")))?;
                print!("{}", cfg.to_json());
            }
        },
    }
    Ok(())
}

fn run_diag(kind: Diag) -> anyhow::Result<()> {
    match kind {
        Diag::IdmVariance {
            env,
            chain,
            seeds,
            behavior_archive,
            behavior_updates,
            epochs,
            learning_rate,
            seed,
            out,
        } => {
            let cfg = preset(&env).ok_or_else(|| CliError::Config(format!("unknown environment preset {env:?}")))?;
            let handle = EnvHandle::new(cfg.env.clone());
            let chain = match chain {
                Some(c) => parse_chain(&c)?,
                None if matches!(cfg.env, EnvConfig::TwoLinkArm(_)) => diag::arm_chain(),
                None => return Err(CliError::Config("--chain is required for this environment".into()).into()),
            };
            let behavior = match behavior_archive {
                Some(dir) => {
                    let arch = load_archive(&dir)?;
                    arch.entries()
                        .first()
                        .map(|e| e.policy.clone())
                        .ok_or_else(|| CliError::Config("the behavior archive is empty".into()))?
                }
                None => diag::train_behavior(&handle, &PpoConfig::default(), behavior_updates, seed)?,
            };
            let seed_list: Vec<u64> = (1..=seeds).collect();
            let defaults = VarianceExperimentConfig::default();
            let config = VarianceExperimentConfig {
                epochs: epochs.unwrap_or(defaults.epochs),
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                ..defaults
            };
            let report = diag::idm_variance(&handle, &chain, &behavior, &seed_list, &config)?;
            emit(out.as_deref(), |w| report.write_csv(w).map_err(|e| CliError::Training(e.to_string())))?;
        }
        Diag::Mi {
            input,
            random_instances,
            policies,
            seed,
            out,
        } => {
            let rows = match (input, random_instances) {
                (Some(p), _) => {
                    let inp: MiInput = diag::parse_json(&read(&p)?, &p.display().to_string())?;
                    vec![diag::mi_exact(&inp)?]
                }
                (None, Some(n)) => diag::mi_random(n, seed, policies)?,
                (None, None) => return Err(CliError::Config("pass --input or --random-instances".into()).into()),
            };
            emit(out.as_deref(), |w| diag::write_mi_csv(w, &rows))?;
        }
        Diag::Klce {
            input,
            random_instances,
            seed,
            out,
        } => {
            let rows = match (input, random_instances) {
                (Some(p), _) => {
                    let inp: KlCeInput = diag::parse_json(&read(&p)?, &p.display().to_string())?;
                    vec![diag::klce(&inp)?]
                }
                (None, Some(n)) => diag::klce_random(n, seed)?,
                (None, None) => return Err(CliError::Config("pass --input or --random-instances".into()).into()),
            };
            let mut worst = 0.0;
            emit(out.as_deref(), |w| {
                worst = diag::write_klce_csv(w, &rows)?;
                Ok(())
            })?;
            eprintln!("max gap error: {worst:e} over {} instances", rows.len());
            if !(worst < KLCE_TOL) {
                return Err(CliError::Check(format!("gap identity error {worst:e} exceeds {KLCE_TOL:e}")).into());
            }
        }
        Diag::DiversityScore {
            archive,
            probe,
            length_scale,
            seed,
            out,
        } => {
            let arch = load_archive(&archive)?;
            let score = diag::diversity(&arch, probe, length_scale, seed)?;
            let mut json = serde_json::to_string_pretty(&score)?;
            json.push('\n');
            emit(out.as_deref(), |w| w.write_all(json.as_bytes()).map_err(|e| CliError::Training(e.to_string())))?;
        }
        Diag::Percentile(a) => {
            let arch = load_archive(&a.archive)?;
            emit(a.out.as_deref(), |w| diag::percentile(w, &arch, a.episodes, a.seed))?;
        }
        Diag::Descriptors(a) => {
            let arch = load_archive(&a.archive)?;
            emit(a.out.as_deref(), |w| diag::descriptors(w, &arch, a.episodes, a.seed))?;
        }
    }
    Ok(())
}
