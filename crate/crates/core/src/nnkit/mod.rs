//! Minimal neural-network substrate: MLPs, a reverse-mode tape, distribution
//! heads, Adam, a finite-difference checker and a binary parameter format.

mod adam;
mod dist;
pub mod io;
mod mlp;
mod tape;

pub use adam::AdamState;
pub use dist::{
    ActionDist, BoundDistNet, CategoricalHead, DistNet, GaussianHead, Head, LOG_STD_MAX,
    LOG_STD_MIN, PROB_FLOOR,
};
pub use mlp::{Activation, BoundMlp, Dense, Mlp};
pub use tape::{Gradients, Tape, Var};

use ndarray::Array2;

/// Compares `analytic` gradients against central differences of `loss` over
/// every entry of `params`. Returns the largest relative error, where the
/// denominator is floored at `1e-6` so that vanishing gradients are compared
/// absolutely.
pub fn max_relative_fd_error(
    params: &mut [Array2<f64>],
    analytic: &[Array2<f64>],
    h: f64,
    mut loss: impl FnMut(&[Array2<f64>]) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..params.len() {
        for idx in ndarray::indices(params[t].dim()) {
            let orig = params[t][idx];
            params[t][idx] = orig + h;
            let plus = loss(params);
            params[t][idx] = orig - h;
            let minus = loss(params);
            params[t][idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[t][idx];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}
