use serde::{Deserialize, Serialize};

use super::mean_return;
use crate::dir::PolicyArchive;
use crate::env::EnvHandle;
use crate::error::{Error, Result};
use crate::nnkit::DistNet;

/// Per-policy mean returns in one environment variant and the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationResult {
    pub variant: String,
    pub seed: u64,
    pub n_episodes: usize,
    /// Mean return of entry `k` at position `k - 1`.
    pub mean_returns: Vec<f64>,
    /// 1-based index of the selected policy.
    pub selected: usize,
    pub selected_return: f64,
}

/// 1-based index of the largest value; ties go to the lowest index.
pub fn select_best(mean_returns: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in mean_returns.iter().enumerate() {
        if best.is_none_or(|b| *r > mean_returns[b]) {
            best = Some(i);
        }
    }
    best.map(|b| b + 1)
}

/// Evaluates every policy for `n_episodes` deterministic episodes in the
/// given environment and selects the best one.
pub fn few_shot_adapt_policies(
    policies: &[&DistNet],
    handle: &EnvHandle,
    n_episodes: usize,
    seed: u64,
) -> Result<AdaptationResult> {
    if policies.is_empty() {
        return Err(Error::usage("adaptation needs at least one policy"));
    }
    if n_episodes == 0 {
        return Err(Error::invalid("adaptation needs at least one episode"));
    }
    let mean_returns = policies
        .iter()
        .map(|p| mean_return(p, handle, n_episodes, seed))
        .collect::<Result<Vec<_>>>()?;
    let selected = select_best(&mean_returns).expect("nonempty");
    Ok(AdaptationResult {
        variant: handle.variant_label(),
        seed,
        n_episodes,
        selected_return: mean_returns[selected - 1],
        mean_returns,
        selected,
    })
}

/// Few-shot adaptation of an archive to a (possibly varied) environment.
pub fn few_shot_adapt(
    archive: &PolicyArchive,
    handle: &EnvHandle,
    n_episodes: usize,
    seed: u64,
) -> Result<AdaptationResult> {
    let (a, b) = (handle.spec(), archive.spec());
    if a.name != b.name || a.obs_dim != b.obs_dim || a.action_space.row_dim() != b.action_space.row_dim() {
        return Err(Error::invalid("the environment does not match the archive"));
    }
    few_shot_adapt_policies(&archive.policies(), handle, n_episodes, seed)
}

/// Writes `variant,policy_idx,mean_return,selected` rows for every result.
pub fn write_adaptation_csv<W: std::io::Write>(out: W, results: &[AdaptationResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variant", "policy_idx", "mean_return", "selected"])?;
    for res in results {
        for (i, r) in res.mean_returns.iter().enumerate() {
            w.write_record([
                res.variant.clone(),
                (i + 1).to_string(),
                r.to_string(),
                u8::from(i + 1 == res.selected).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_lowest_index() {
        assert_eq!(select_best(&[1.0, 3.0, 3.0]), Some(2));
        assert_eq!(select_best(&[2.0, 2.0]), Some(1));
        assert_eq!(select_best(&[-5.0]), Some(1));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn csv_marks_the_selection() {
        let res = AdaptationResult {
            variant: "broken0".into(),
            seed: 1,
            n_episodes: 20,
            mean_returns: vec![1.0, 2.5],
            selected: 2,
            selected_return: 2.5,
        };
        let mut buf = Vec::new();
        write_adaptation_csv(&mut buf, &[res]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "variant,policy_idx,mean_return,selected\nbroken0,1,1,0\nbroken0,2,2.5,1\n"
        );
    }
}
