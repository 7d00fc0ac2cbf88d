//! The append-only policy archive and its directory layout.
//!
//! ```text
//! meta.json        run configuration, master seed, per-entry metadata
//! policy_<k>.bin   policy network with its distribution head
//! value_<k>.bin    value network
//! idm_<k>.bin      frozen inverse dynamics model with its filtration header
//! log_<k>.csv      per-update training diagnostics
//! ```
//!
//! Entries are numbered from 1 in training order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DirConfig;
use crate::env::{EnvHandle, EnvSpec, FiltrationSpec};
use crate::error::{Error, Result};
use crate::idm::Idm;
use crate::nnkit::{io, DistNet, Mlp};
use crate::ppo::{read_diagnostics, write_diagnostics, DiagnosticsRow, PpoConfig};

pub const ARCHIVE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryMeta {
    pub index: usize,
    pub seed: u64,
    pub steps: usize,
    pub updates: usize,
    /// Mean extrinsic return of the last training episodes.
    pub final_mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveMeta {
    pub format: u32,
    pub env: EnvHandle,
    pub filtration: FiltrationSpec,
    pub dir: DirConfig,
    pub ppo: PpoConfig,
    pub master_seed: u64,
    pub entries: Vec<EntryMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub meta: EntryMeta,
    pub policy: DistNet,
    pub value: Mlp,
    pub idm: Idm,
    pub log: Vec<DiagnosticsRow>,
}

/// Ordered population of trained policies and their frozen inverse models.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArchive {
    pub env: EnvHandle,
    pub filtration: FiltrationSpec,
    pub dir: DirConfig,
    pub ppo: PpoConfig,
    pub master_seed: u64,
    entries: Vec<ArchiveEntry>,
}

impl PolicyArchive {
    pub fn new(
        env: EnvHandle,
        filtration: FiltrationSpec,
        dir: DirConfig,
        ppo: PpoConfig,
        master_seed: u64,
    ) -> Result<Self> {
        env.config.validate()?;
        for v in &env.variants {
            v.validate(&env.config)?;
        }
        filtration.validate_for(env.spec().obs_dim)?;
        dir.validate()?;
        ppo.validate()?;
        Ok(PolicyArchive {
            env,
            filtration,
            dir,
            ppo,
            master_seed,
            entries: Vec::new(),
        })
    }

    pub fn spec(&self) -> EnvSpec {
        self.env.spec()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn policies(&self) -> Vec<&DistNet> {
        self.entries.iter().map(|e| &e.policy).collect()
    }

    pub fn idms(&self) -> Vec<&Idm> {
        self.entries.iter().map(|e| &e.idm).collect()
    }

    /// Appends the next entry. Its index must continue the sequence and its
    /// inverse model must be frozen.
    pub fn push(&mut self, entry: ArchiveEntry) -> Result<()> {
        if entry.meta.index != self.entries.len() + 1 {
            return Err(Error::usage(format!(
                "entry {} appended to an archive of {}",
                entry.meta.index,
                self.entries.len()
            )));
        }
        if !entry.idm.is_frozen() {
            return Err(Error::usage("archived inverse models must be frozen"));
        }
        self.entries.push(entry);
        Ok(())
    }

    /// A copy holding only the first `n` entries.
    pub fn truncated(&self, n: usize) -> PolicyArchive {
        let mut out = self.clone();
        out.entries.truncate(n);
        out
    }

    /// Same run configuration, compared field by field.
    pub fn same_run(&self, other: &PolicyArchive) -> bool {
        self.env == other.env
            && self.filtration == other.filtration
            && self.dir == other.dir
            && self.ppo == other.ppo
            && self.master_seed == other.master_seed
    }

    pub fn meta(&self) -> ArchiveMeta {
        ArchiveMeta {
            format: ARCHIVE_FORMAT,
            env: self.env.clone(),
            filtration: self.filtration.clone(),
            dir: self.dir.clone(),
            ppo: self.ppo.clone(),
            master_seed: self.master_seed,
            entries: self.entries.iter().map(|e| e.meta.clone()).collect(),
        }
    }

    /// Writes every entry's files, then `meta.json` last, each through a
    /// temporary file and a rename, so an interrupted save leaves the
    /// previous archive readable.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for e in &self.entries {
            let k = e.meta.index;
            write_atomic(&dir.join(format!("policy_{k}.bin")), &io::encode_dist_net(&e.policy))?;
            write_atomic(&dir.join(format!("value_{k}.bin")), &io::encode_mlp(&e.value))?;
            write_atomic(&dir.join(format!("idm_{k}.bin")), &e.idm.encode())?;
            let mut log = Vec::new();
            write_diagnostics(&mut log, &e.log)?;
            write_atomic(&dir.join(format!("log_{k}.csv")), &log)?;
        }
        let mut meta = serde_json::to_vec_pretty(&self.meta())?;
        meta.push(b'\n');
        write_atomic(&dir.join("meta.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let corrupt = |what: &str, e: Error| Error::Corrupt(format!("{what}: {e}"));
        let text = fs::read(dir.join("meta.json"))?;
        let meta: ArchiveMeta = serde_json::from_slice(&text)
            .map_err(|e| Error::Corrupt(format!("meta.json: {e}")))?;
        if meta.format != ARCHIVE_FORMAT {
            return Err(Error::Corrupt(format!("unsupported archive format {}", meta.format)));
        }
        let mut archive = PolicyArchive::new(
            meta.env,
            meta.filtration,
            meta.dir,
            meta.ppo,
            meta.master_seed,
        )
        .map_err(|e| corrupt("meta.json", e))?;
        let spec = archive.spec();
        for em in meta.entries {
            let k = em.index;
            let read = |name: String| -> Result<Vec<u8>> {
                fs::read(dir.join(&name)).map_err(|e| Error::Corrupt(format!("{name}: {e}")))
            };
            let policy = io::decode_dist_net(&read(format!("policy_{k}.bin"))?)
                .map_err(|e| corrupt(&format!("policy_{k}.bin"), e))?;
            let value = io::decode_mlp(&read(format!("value_{k}.bin"))?)
                .map_err(|e| corrupt(&format!("value_{k}.bin"), e))?;
            let idm = Idm::decode(&read(format!("idm_{k}.bin"))?, &spec)
                .map_err(|e| corrupt(&format!("idm_{k}.bin"), e))?;
            let log = read_diagnostics(read(format!("log_{k}.csv"))?.as_slice())
                .map_err(|e| corrupt(&format!("log_{k}.csv"), e))?;
            if policy.input_dim() != spec.obs_dim || value.input_dim() != spec.obs_dim {
                return Err(Error::Corrupt(format!("entry {k} does not match the environment")));
            }
            archive
                .push(ArchiveEntry {
                    meta: em,
                    policy,
                    value,
                    idm,
                    log,
                })
                .map_err(|e| corrupt("meta.json", e))?;
        }
        Ok(archive)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
