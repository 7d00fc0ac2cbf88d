use crate::error::{Error, Result};

/// Similarity of policy `k` to the rest of a population at one state:
/// `1/(M-1) · Σ_{j≠k} exp(-‖μ_k - μ_j‖² / 2)`, where `μ_j` are the policies'
/// mean actions at that state.
pub fn dvd_similarity(mean_actions: &[Vec<f64>], k: usize) -> Result<f64> {
    let m = mean_actions.len();
    if m < 2 {
        return Err(Error::usage("similarity needs at least two policies"));
    }
    if k >= m {
        return Err(Error::invalid(format!("policy index {k} out of range")));
    }
    let total: f64 = (0..m)
        .filter(|&j| j != k)
        .map(|j| {
            let d2: f64 = mean_actions[k]
                .iter()
                .zip(&mean_actions[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            (-d2 / 2.0).exp()
        })
        .sum();
    Ok(total / (m - 1) as f64)
}

/// Bonus of the DvD-style baseline: `coef · (1 - similarity)`, so
/// dissimilar behavior is rewarded.
pub fn dvd_style_bonus(mean_actions: &[Vec<f64>], k: usize, coef: f64) -> Result<f64> {
    Ok(coef * (1.0 - dvd_similarity(mean_actions, k)?))
}
