use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Hidden-layer nonlinearity. Output layers are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

/// One affine layer; `weight` is `inputs × outputs`, `bias` is `1 × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Feed-forward network: tanh between layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Orthogonal initialization: a Gaussian matrix orthonormalized by QR and
/// scaled by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Array2<f64> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let gauss = DMatrix::<f64>::from_fn(big, small, |_, _| StandardNormal.sample(rng));
    let qr = gauss.qr();
    let (q, r) = (qr.q(), qr.r());
    // Sign correction makes the distribution uniform over orthogonal matrices.
    let q = DMatrix::from_fn(big, small, |i, j| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        q[(i, j)] * s
    });
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
        gain * v
    })
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`. Hidden layers get gain √2, the
    /// output layer `output_gain`; biases start at zero.
    pub fn new(sizes: &[usize], output_gain: f64, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let gain = if l + 1 == n {
                    output_gain
                } else {
                    std::f64::consts::SQRT_2
                };
                Dense {
                    weight: orthogonal(sizes[l], sizes[l + 1], gain, rng),
                    bias: Array2::zeros((1, sizes[l + 1])),
                }
            })
            .collect();
        Mlp {
            layers,
            activation: Activation::Tanh,
        }
    }

    /// Builds a network from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.dim() != (1, layer.outputs()) {
                return Err(Error::invalid(format!("layer {l}: bias shape")));
            }
            if l > 0 && layers[l - 1].outputs() != layer.inputs() {
                return Err(Error::invalid(format!("layer {l}: dimensions do not chain")));
            }
        }
        Ok(Mlp {
            layers,
            activation: Activation::Tanh,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x).into_raw_vec_and_offset().0)
    }

    /// Forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.dot(&self.layers[0].weight) + &self.layers[0].bias;
        for layer in &self.layers[1..] {
            h.mapv_inplace(f64::tanh);
            h = h.dot(&layer.weight) + &layer.bias;
        }
        h
    }

    /// Parameter tensors in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Records the parameters as leaves of `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            params: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                .collect(),
        }
    }
}

/// An [`Mlp`] whose parameters live on a tape.
pub struct BoundMlp<'t> {
    params: Vec<(Var<'t>, Var<'t>)>,
}

impl<'t> BoundMlp<'t> {
    pub fn forward(&self, x: Var<'t>) -> Var<'t> {
        let mut h = x;
        for (l, (w, b)) in self.params.iter().enumerate() {
            if l > 0 {
                h = h.tanh();
            }
            h = h.matmul(*w).add_row(*b);
        }
        h
    }

    /// Parameter leaves in [`Mlp::tensors`] order.
    pub fn vars(&self) -> Vec<Var<'t>> {
        self.params.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }
}
