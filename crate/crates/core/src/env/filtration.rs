use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A coordinate projection `f(s) = s[keep_indices]`.
///
/// Indices are strictly increasing. A filtration `g` is coarser than `f`
/// when `g` keeps a subset of the coordinates `f` keeps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FiltrationSpec {
    keep: Vec<usize>,
}

impl FiltrationSpec {
    pub fn new(keep: Vec<usize>) -> Result<Self> {
        if keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "filtration indices must be strictly increasing, got {keep:?}"
            )));
        }
        Ok(FiltrationSpec { keep })
    }

    pub fn identity(dim: usize) -> Self {
        FiltrationSpec {
            keep: (0..dim).collect(),
        }
    }

    /// Keeps nothing: every state maps to the same empty vector.
    pub fn empty() -> Self {
        FiltrationSpec { keep: Vec::new() }
    }

    /// Keeps each of `dim` coordinates independently with probability 1/2.
    pub fn random(rng: &mut crate::seed::Rng, dim: usize) -> Self {
        use rand::Rng as _;
        FiltrationSpec {
            keep: (0..dim).filter(|_| rng.random::<bool>()).collect(),
        }
    }

    pub fn keep_indices(&self) -> &[usize] {
        &self.keep
    }

    pub fn output_dim(&self) -> usize {
        self.keep.len()
    }

    pub fn validate_for(&self, dim: usize) -> Result<()> {
        match self.keep.last() {
            Some(&last) if last >= dim => Err(Error::invalid(format!(
                "filtration index {last} out of range for state dimension {dim}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.validate_for(state.len())?;
        Ok(self.keep.iter().map(|&i| state[i]).collect())
    }

    /// Like [`apply`](Self::apply) for callers that already validated the
    /// dimension.
    pub fn apply_unchecked(&self, state: &[f64]) -> Vec<f64> {
        self.keep.iter().map(|&i| state[i]).collect()
    }

    /// The same projection expressed in the coordinates of an already
    /// filtered vector.
    pub fn induced(&self) -> FiltrationSpec {
        FiltrationSpec::identity(self.keep.len())
    }

    /// True when `self` keeps a subset of what `finer` keeps.
    pub fn is_coarsening_of(&self, finer: &FiltrationSpec) -> bool {
        self.keep.iter().all(|i| finer.keep.binary_search(i).is_ok())
    }

    /// Drops one kept coordinate, `None` if `index` is not kept.
    pub fn without(&self, index: usize) -> Option<FiltrationSpec> {
        let pos = self.keep.iter().position(|&i| i == index)?;
        let mut keep = self.keep.clone();
        keep.remove(pos);
        Some(FiltrationSpec { keep })
    }
}

impl TryFrom<Vec<usize>> for FiltrationSpec {
    type Error = Error;

    fn try_from(keep: Vec<usize>) -> Result<Self> {
        FiltrationSpec::new(keep)
    }
}

impl From<FiltrationSpec> for Vec<usize> {
    fn from(f: FiltrationSpec) -> Self {
        f.keep
    }
}
