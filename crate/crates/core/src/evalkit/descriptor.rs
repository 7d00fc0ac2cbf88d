use serde::{Deserialize, Serialize};

use super::run_episodes;
use crate::env::EnvHandle;
use crate::error::{Error, Result};
use crate::nnkit::DistNet;

/// Per-channel duty fractions of a policy, averaged over episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDescriptor {
    pub channel_names: Vec<String>,
    /// Mean over episodes of each channel's per-episode fraction.
    pub channels: Vec<f64>,
    /// `per_episode[e][c]`.
    pub per_episode: Vec<Vec<f64>>,
    /// Mean fraction of steps each actuator was active.
    pub activity: Vec<f64>,
}

/// Runs `n_episodes` deterministic episodes and records the fraction of
/// steps each descriptor channel was on.
pub fn behavior_descriptor(
    policy: &DistNet,
    handle: &EnvHandle,
    n_episodes: usize,
    seed: u64,
) -> Result<BehaviorDescriptor> {
    let spec = handle.spec();
    if spec.descriptor_channels.is_empty() {
        return Err(Error::usage(format!("{} exposes no descriptor channels", spec.name)));
    }
    if n_episodes == 0 {
        return Err(Error::invalid("descriptors need at least one episode"));
    }
    let eps = run_episodes(policy, handle, n_episodes, seed, false)?;
    let n = eps.len() as f64;
    let mean_of = |rows: Vec<&[f64]>, width: usize| -> Vec<f64> {
        (0..width)
            .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n)
            .collect()
    };
    let n_ch = spec.descriptor_channels.len();
    let channels = mean_of(eps.iter().map(|e| e.channels.as_slice()).collect(), n_ch);
    let n_act = eps.iter().map(|e| e.activity.len()).min().unwrap_or(0);
    let activity = mean_of(eps.iter().map(|e| e.activity.as_slice()).collect(), n_act);
    Ok(BehaviorDescriptor {
        channel_names: spec.descriptor_channels.clone(),
        channels,
        per_episode: eps.into_iter().map(|e| e.channels).collect(),
        activity,
    })
}

/// Euclidean distance between two descriptors' mean channels.
pub fn descriptor_distance(a: &BehaviorDescriptor, b: &BehaviorDescriptor) -> f64 {
    a.channels
        .iter()
        .zip(&b.channels)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Smallest pairwise distance in a population, `None` below two members.
pub fn min_pairwise_distance(descriptors: &[BehaviorDescriptor]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..descriptors.len() {
        for j in i + 1..descriptors.len() {
            let d = descriptor_distance(&descriptors[i], &descriptors[j]);
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best
}

/// Writes `policy_idx,episode,channel_0..` rows, policies numbered from 1.
pub fn write_descriptor_csv<W: std::io::Write>(out: W, descriptors: &[BehaviorDescriptor]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n_ch = descriptors.first().map_or(0, |d| d.channels.len());
    let mut header = vec!["policy_idx".to_string(), "episode".to_string()];
    header.extend((0..n_ch).map(|c| format!("channel_{c}")));
    w.write_record(&header)?;
    for (k, d) in descriptors.iter().enumerate() {
        for (e, vals) in d.per_episode.iter().enumerate() {
            let mut row = vec![(k + 1).to_string(), e.to_string()];
            row.extend(vals.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
