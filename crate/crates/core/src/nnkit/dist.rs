//! Distribution heads over actions.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{BoundMlp, Mlp};
use super::tape::{Tape, Var};
use crate::env::ActionValue;
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Floor applied to categorical probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-8;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// A diagonal Gaussian evaluated at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// A categorical distribution evaluated at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalHead {
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Gaussian(GaussianHead),
    Categorical(CategoricalHead),
}

impl GaussianHead {
    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        if action.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "action has {} components, distribution has {}",
                action.len(),
                self.mean.len()
            )));
        }
        Ok(action
            .iter()
            .zip(&self.mean)
            .zip(&self.log_std)
            .map(|((a, m), ls)| {
                let z = (a - m) * (-ls).exp();
                -0.5 * z * z - ls - HALF_LN_2PI
            })
            .sum())
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().sum::<f64>() + 0.5 * self.mean.len() as f64 * (1.0 + (2.0 * PI).ln())
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|ls| ls.exp()).collect()
    }

    /// Reparameterized draw `mean + std * z`.
    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect()
    }
}

impl CategoricalHead {
    pub fn log_probs(&self) -> Vec<f64> {
        let max = self.logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + self.logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        self.logits.iter().map(|&x| x - lse).collect()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs().into_iter().map(f64::exp).collect()
    }

    pub fn log_prob(&self, index: usize) -> Result<f64> {
        let lp = self.log_probs();
        let v = lp.get(index).ok_or_else(|| {
            Error::invalid(format!("action {index} outside [0, {})", lp.len()))
        })?;
        Ok(v.max(PROB_FLOOR.ln()))
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs()
            .iter()
            .map(|&p| p * p.max(PROB_FLOOR).ln())
            .sum::<f64>()
    }

    /// Index of the largest logit; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.logits.iter().enumerate() {
            if l > self.logits[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let probs = self.probs();
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

impl ActionDist {
    pub fn log_prob(&self, action: &ActionValue) -> Result<f64> {
        match (self, action) {
            (ActionDist::Gaussian(g), ActionValue::Continuous(a)) => g.log_prob(a),
            (ActionDist::Categorical(c), ActionValue::Discrete(i)) => c.log_prob(*i),
            _ => Err(Error::invalid("action kind does not match the distribution")),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Gaussian(g) => g.entropy(),
            ActionDist::Categorical(c) => c.entropy(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> ActionValue {
        match self {
            ActionDist::Gaussian(g) => ActionValue::Continuous(g.sample(rng)),
            ActionDist::Categorical(c) => ActionValue::Discrete(c.sample(rng)),
        }
    }

    /// The deterministic action: the Gaussian mean or the categorical argmax.
    pub fn mode(&self) -> ActionValue {
        match self {
            ActionDist::Gaussian(g) => ActionValue::Continuous(g.mean.clone()),
            ActionDist::Categorical(c) => ActionValue::Discrete(c.argmax()),
        }
    }
}

/// Output parameterization of a [`DistNet`].
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    /// Network outputs the mean; `log_std` is a state-independent `1×A` row
    /// kept inside `[log_std_min, log_std_max]`.
    Gaussian {
        log_std: Array2<f64>,
        log_std_min: f64,
        log_std_max: f64,
    },
    /// Network outputs `n` logits.
    Categorical { n: usize },
}

impl Head {
    pub fn gaussian(dim: usize, init_log_std: f64) -> Self {
        Head::Gaussian {
            log_std: Array2::from_elem((1, dim), init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)),
            log_std_min: LOG_STD_MIN,
            log_std_max: LOG_STD_MAX,
        }
    }

    pub fn categorical(n: usize) -> Self {
        Head::Categorical { n }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Head::Gaussian { log_std, .. } => log_std.ncols(),
            Head::Categorical { n } => *n,
        }
    }
}

/// A network followed by a distribution head: policies and IDMs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistNet {
    pub net: Mlp,
    pub head: Head,
}

impl DistNet {
    pub fn new(net: Mlp, head: Head) -> Result<Self> {
        if net.output_dim() != head.action_dim() {
            return Err(Error::invalid(format!(
                "network emits {} outputs but head needs {}",
                net.output_dim(),
                head.action_dim()
            )));
        }
        Ok(DistNet { net, head })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn dist(&self, input: &[f64]) -> Result<ActionDist> {
        let out = self.net.forward(input)?;
        Ok(self.dist_from_output(out))
    }

    fn dist_from_output(&self, out: Vec<f64>) -> ActionDist {
        match &self.head {
            Head::Gaussian {
                log_std,
                log_std_min,
                log_std_max,
            } => ActionDist::Gaussian(GaussianHead {
                mean: out,
                log_std: log_std.iter().map(|v| v.clamp(*log_std_min, *log_std_max)).collect(),
            }),
            Head::Categorical { .. } => ActionDist::Categorical(CategoricalHead { logits: out }),
        }
    }

    /// Distributions for every row of `inputs`.
    pub fn dist_batch(&self, inputs: ArrayView2<'_, f64>) -> Vec<ActionDist> {
        let out = self.net.forward_batch(inputs);
        out.rows()
            .into_iter()
            .map(|r| self.dist_from_output(r.to_vec()))
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut t = self.net.tensors();
        if let Head::Gaussian { log_std, .. } = &self.head {
            t.push(log_std);
        }
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut t = self.net.tensors_mut();
        if let Head::Gaussian { log_std, .. } = &mut self.head {
            t.push(log_std);
        }
        t
    }

    /// Re-imposes the log-std bounds after a parameter update.
    pub fn project(&mut self) {
        if let Head::Gaussian {
            log_std,
            log_std_min,
            log_std_max,
        } = &mut self.head
        {
            log_std.mapv_inplace(|v| v.clamp(*log_std_min, *log_std_max));
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundDistNet<'t> {
        let mlp = self.net.bind(tape);
        let log_std = match &self.head {
            Head::Gaussian { log_std, .. } => Some(tape.leaf(log_std.clone())),
            Head::Categorical { .. } => None,
        };
        BoundDistNet { mlp, log_std }
    }
}

/// A [`DistNet`] recorded on a tape.
pub struct BoundDistNet<'t> {
    mlp: BoundMlp<'t>,
    log_std: Option<Var<'t>>,
}

impl<'t> BoundDistNet<'t> {
    /// Parameter leaves in [`DistNet::tensors`] order.
    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = self.mlp.vars();
        v.extend(self.log_std);
        v
    }

    pub fn output(&self, x: Var<'t>) -> Var<'t> {
        self.mlp.forward(x)
    }

    /// Per-row log-likelihood (`B×1`). Continuous actions are the rows of
    /// `actions`; discrete actions are stored as indices in its first column.
    pub fn log_prob(&self, tape: &'t Tape, x: Var<'t>, actions: &Array2<f64>) -> Var<'t> {
        let out = self.output(x);
        let rows = actions.nrows();
        match self.log_std {
            Some(ls) => {
                let dim = actions.ncols() as f64;
                let ls_b = ls.broadcast_rows(rows);
                let a = tape.leaf(actions.clone());
                let z = a.sub(out).mul(ls_b.neg().exp());
                z.square()
                    .scale(-0.5)
                    .sub(ls_b)
                    .sum_cols()
                    .add_scalar(-dim * HALF_LN_2PI)
            }
            None => {
                let idx: Vec<usize> = actions.column(0).iter().map(|&v| v as usize).collect();
                out.log_softmax().gather(&idx)
            }
        }
    }

    /// Per-row entropy (`B×1`).
    pub fn entropy(&self, tape: &'t Tape, x: Var<'t>) -> Var<'t> {
        match self.log_std {
            Some(ls) => {
                let rows = x.shape().0;
                let dim = ls.shape().1 as f64;
                let ent = ls.sum().add_scalar(0.5 * dim * (1.0 + (2.0 * PI).ln()));
                let ones = tape.leaf(Array2::ones((rows, 1)));
                ones.matmul(ent)
            }
            None => {
                let lp = self.output(x).log_softmax();
                lp.exp().mul(lp).sum_cols().neg()
            }
        }
    }
}
