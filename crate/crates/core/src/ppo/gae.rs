use super::{PpoConfig, RolloutBatch};

/// Generalized advantage estimation over the refined rewards.
///
/// Returns raw (unnormalized) advantages and the value targets
/// `advantages + values`. Episode ends cut the recursion; the bootstrap
/// after a step is `next_values[t]`, which is 0 for true terminals.
pub fn compute_gae(batch: &RolloutBatch, config: &PpoConfig) -> (Vec<f64>, Vec<f64>) {
    let n = batch.len();
    let (g, l) = (config.gamma, config.gae_lambda);
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = batch.refined_rewards[t] + g * batch.next_values[t] - batch.values[t];
        if batch.dones[t] {
            running = 0.0;
        }
        running = delta + g * l * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(&batch.values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts and scales to mean 0 and standard deviation 1. Constant inputs map
/// to zeros.
pub fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}
