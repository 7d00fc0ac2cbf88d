//! Inverse dynamics models `T(a | f(s), f(s'))`: learned networks and the
//! exact table on tabular MDPs.

mod learned;
mod tabular;

use ndarray::Array2;

pub use learned::{Idm, IdmTrainer};
pub use tabular::{pair_distribution, tabular_inverse_dynamics, InverseDynamicsTable, PairKey};

use crate::error::Result;

/// Anything that scores an action given a (filtered) transition.
pub trait InverseModel: Sync {
    /// `log T(a | f(s), f(s'))` for every row. Discrete actions are stored as
    /// indices in the first column of `actions`.
    fn log_probs(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        next_states: &Array2<f64>,
    ) -> Result<Vec<f64>>;

    fn is_frozen(&self) -> bool;
}

/// Per-level, per-seed inference spread of inverse models.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IdmVarianceReport {
    /// Kept indices of each filtration level, finest first.
    pub levels: Vec<Vec<usize>>,
    pub seeds: Vec<u64>,
    /// `values[level][seed]`: mean predicted std (continuous) or mean
    /// predicted entropy (discrete).
    pub values: Vec<Vec<f64>>,
}

impl IdmVarianceReport {
    pub fn level_means(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len().max(1) as f64)
            .collect()
    }

    /// Whether seed `j`'s values are weakly increasing across levels, up to
    /// `tol`.
    pub fn seed_monotone(&self, j: usize, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1][j] >= w[0][j] - tol)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["filtration_level", "seed", "mean_std_or_entropy"])?;
        for (l, row) in self.values.iter().enumerate() {
            for (seed, v) in self.seeds.iter().zip(row) {
                w.write_record([l.to_string(), seed.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
