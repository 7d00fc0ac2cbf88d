use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::InverseModel;
use crate::env::{ActionSpace, ActionValue, EnvSpec, FiltrationSpec};
use crate::error::{Error, Result};
use crate::nnkit::{io, ActionDist, AdamState, DistNet, Head, Mlp, Tape};
use crate::seed::Rng;

/// A learned inverse dynamics model over a filtered view of the state.
///
/// The network input is `[f(s) / scale, f(s') / scale]`. With an empty
/// filtration the input is a single constant zero, so the model reduces to
/// an unconditional action distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Idm {
    pub net: DistNet,
    filtration: FiltrationSpec,
    scale: Vec<f64>,
    frozen: bool,
}

fn input_dim(kept: usize) -> usize {
    (2 * kept).max(1)
}

impl Idm {
    pub fn new(
        spec: &EnvSpec,
        filtration: FiltrationSpec,
        hidden: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        filtration.validate_for(spec.obs_dim)?;
        let mut sizes = vec![input_dim(filtration.output_dim())];
        sizes.extend(hidden);
        sizes.push(spec.action_space.head_dim());
        let head = match &spec.action_space {
            ActionSpace::Continuous { low, .. } => Head::gaussian(low.len(), 0.0),
            ActionSpace::Discrete { n } => Head::categorical(*n),
        };
        let net = DistNet::new(Mlp::new(&sizes, 0.01, rng), head)?;
        Self::from_parts(net, filtration, spec, false)
    }

    pub fn from_parts(
        net: DistNet,
        filtration: FiltrationSpec,
        spec: &EnvSpec,
        frozen: bool,
    ) -> Result<Self> {
        filtration.validate_for(spec.obs_dim)?;
        if net.input_dim() != input_dim(filtration.output_dim()) {
            return Err(Error::invalid(format!(
                "inverse model takes {} inputs but the filtration keeps {} coordinates",
                net.input_dim(),
                filtration.output_dim()
            )));
        }
        if net.head.action_dim() != spec.action_space.head_dim() {
            return Err(Error::invalid("inverse model head does not match the action space"));
        }
        let scale = filtration.apply_unchecked(&spec.obs_scale);
        Ok(Idm {
            net,
            filtration,
            scale,
            frozen,
        })
    }

    pub fn filtration(&self) -> &FiltrationSpec {
        &self.filtration
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    fn input_row(&self, s: &[f64], s_next: &[f64], out: &mut [f64]) {
        let k = self.scale.len();
        for (j, &i) in self.filtration.keep_indices().iter().enumerate() {
            out[j] = s[i] / self.scale[j];
            out[k + j] = s_next[i] / self.scale[j];
        }
    }

    /// Network inputs for paired rows of `states` and `next_states`.
    pub fn inputs(&self, states: &Array2<f64>, next_states: &Array2<f64>) -> Result<Array2<f64>> {
        let d = self.net.input_dim();
        if states.dim() != next_states.dim() {
            return Err(Error::invalid("state and next-state batches differ in shape"));
        }
        self.filtration.validate_for(states.ncols())?;
        let mut x = Array2::zeros((states.nrows(), d));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let s = states.row(i);
            let n = next_states.row(i);
            self.input_row(
                s.as_slice().expect("standard layout"),
                n.as_slice().expect("standard layout"),
                row.as_slice_mut().expect("standard layout"),
            );
        }
        Ok(x)
    }

    pub fn dist(&self, s: &[f64], s_next: &[f64]) -> Result<ActionDist> {
        if s.len() != s_next.len() {
            return Err(Error::invalid("state and next state differ in length"));
        }
        self.filtration.validate_for(s.len())?;
        let mut x = vec![0.0; self.net.input_dim()];
        self.input_row(s, s_next, &mut x);
        self.net.dist(&x)
    }

    pub fn log_prob(&self, s: &[f64], a: &ActionValue, s_next: &[f64]) -> Result<f64> {
        self.dist(s, s_next)?.log_prob(a)
    }

    /// Mean predicted standard deviation (Gaussian head, averaged over action
    /// components) or mean predicted entropy (categorical head) over the
    /// probe pairs.
    pub fn inference_spread(&self, states: &Array2<f64>, next_states: &Array2<f64>) -> Result<f64> {
        if states.nrows() == 0 {
            return Err(Error::invalid("inference spread needs at least one probe pair"));
        }
        let x = self.inputs(states, next_states)?;
        let dists = self.net.dist_batch(x.view());
        let total: f64 = dists
            .iter()
            .map(|d| match d {
                ActionDist::Gaussian(g) => g.std().iter().sum::<f64>() / g.std().len() as f64,
                ActionDist::Categorical(c) => c.entropy(),
            })
            .sum();
        Ok(total / dists.len() as f64)
    }

    pub fn encode(&self) -> Vec<u8> {
        io::encode_with_filtration(&self.net, self.filtration.keep_indices())
    }

    /// Decodes a stored model; stored models are frozen.
    pub fn decode(bytes: &[u8], spec: &EnvSpec) -> Result<Self> {
        let (net, keep) = io::decode_with_filtration(bytes)?;
        let filtration = FiltrationSpec::new(keep).map_err(|e| Error::Corrupt(e.to_string()))?;
        Self::from_parts(net, filtration, spec, true).map_err(|e| Error::Corrupt(e.to_string()))
    }

    /// Negative mean log-likelihood and its gradients on the given rows.
    pub fn nll_and_grads(&self, x: &Array2<f64>, actions: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)> {
        let tape = Tape::new();
        let bound = self.net.bind(&tape);
        let xv = tape.leaf(x.clone());
        let loss = bound.log_prob(&tape, xv, actions).mean().neg();
        let grads = tape.backward(loss)?;
        Ok((loss.item(), grads.collect(&bound.vars())))
    }
}

impl InverseModel for Idm {
    fn log_probs(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        next_states: &Array2<f64>,
    ) -> Result<Vec<f64>> {
        let x = self.inputs(states, next_states)?;
        let dists = self.net.dist_batch(x.view());
        dists
            .iter()
            .zip(actions.rows())
            .map(|(d, a)| match d {
                ActionDist::Gaussian(g) => g.log_prob(a.as_slice().expect("standard layout")),
                ActionDist::Categorical(c) => c.log_prob(a[0] as usize),
            })
            .collect()
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }
}

/// Maximum-likelihood training state for one [`Idm`].
#[derive(Debug, Clone)]
pub struct IdmTrainer {
    adam: AdamState,
    batch_size: usize,
}

impl IdmTrainer {
    pub fn new(idm: &Idm, learning_rate: f64, batch_size: usize) -> Self {
        IdmTrainer {
            adam: AdamState::new(&idm.net.tensors(), learning_rate),
            batch_size: batch_size.max(1),
        }
    }

    /// Takes `n_grad_steps` minibatch steps, cycling through shuffled passes
    /// over the data. Returns the mean log-likelihood of the minibatches seen.
    pub fn train(
        &mut self,
        idm: &mut Idm,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        next_states: &Array2<f64>,
        n_grad_steps: usize,
        rng: &mut Rng,
    ) -> Result<f64> {
        if idm.frozen {
            return Err(Error::usage("cannot train a frozen inverse dynamics model"));
        }
        let n = states.nrows();
        if n == 0 || actions.nrows() != n {
            return Err(Error::invalid("inverse model training needs a nonempty aligned batch"));
        }
        let x = idm.inputs(states, next_states)?;
        let mut order: Vec<usize> = (0..n).collect();
        let mut cursor = n;
        let mut total = 0.0;
        for step in 0..n_grad_steps {
            if cursor >= n {
                order.shuffle(rng);
                cursor = 0;
            }
            let end = (cursor + self.batch_size).min(n);
            let idx = &order[cursor..end];
            cursor = end;
            let (nll, grads) =
                idm.nll_and_grads(&x.select(Axis(0), idx), &actions.select(Axis(0), idx))?;
            if !nll.is_finite() {
                return Err(Error::Divergence(format!(
                    "inverse model loss non-finite at step {step}"
                )));
            }
            total -= nll;
            self.adam.step(&mut idm.net.tensors_mut(), &grads)?;
            idm.net.project();
        }
        Ok(total / n_grad_steps.max(1) as f64)
    }

    /// Steps needed for one pass over `n` rows.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}
