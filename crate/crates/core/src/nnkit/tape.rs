//! Tensor-level reverse-mode differentiation.
//!
//! Every value on the tape is a 2-D array; scalars are `1×1`. Operations act on
//! whole minibatches, so the per-node bookkeeping is amortized over the batch.

use std::cell::RefCell;

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `B×n` plus a `1×n` row broadcast down the batch.
    AddRow(usize, usize),
    /// `1×n` repeated to `rows×n`.
    BroadcastRows(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Square(usize),
    Min(usize, usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    Mean(usize),
    /// Row sums, `B×n → B×1`.
    SumCols(usize),
    LogSoftmax(usize),
    /// One column per row, `B×n → B×1`.
    Gather(usize, Vec<usize>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Records a computation so that it can be differentiated.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

/// Gradients of a scalar with respect to every node of the tape.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros if the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Array2<f64> {
        match &self.grads[var.idx] {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[var.idx]),
        }
    }

    pub fn collect(&self, vars: &[Var<'_>]) -> Vec<Array2<f64>> {
        vars.iter().map(|v| self.wrt(*v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            idx: nodes.len() - 1,
        }
    }

    /// Records a leaf. Parameters and constants are both leaves; only the
    /// caller decides which gradients it reads back.
    pub fn leaf(&self, value: Array2<f64>) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    /// Reverse sweep from `loss`, which must be a `1×1` node.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes.is_empty() {
            return Err(Error::usage("backward called on an empty tape"));
        }
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::usage("loss was recorded on a different tape"));
        }
        if nodes[loss.idx].value.dim() != (1, 1) {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.idx].value.dim()
            )));
        }

        let shapes: Vec<_> = nodes.iter().map(|n| n.value.dim()).collect();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; nodes.len()];
        grads[loss.idx] = Some(Array2::ones((1, 1)));

        for i in (0..=loss.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&nodes[*b].value.t());
                    let gb = nodes[*a].value.t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, r) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *r, gr);
                    accumulate(&mut grads, *a, g);
                }
                Op::BroadcastRows(a) => {
                    let ga = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * &nodes[*b].value;
                    let gb = &g * &nodes[*a].value;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g * &node.value),
                Op::Ln(a) => accumulate(&mut grads, *a, g / &nodes[*a].value),
                Op::Square(a) => accumulate(&mut grads, *a, g * &nodes[*a].value * 2.0),
                Op::Min(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    let mut ga = g.clone();
                    let mut gb = g;
                    Zip::from(&mut ga)
                        .and(&mut gb)
                        .and(va)
                        .and(vb)
                        .for_each(|da, db, &x, &y| {
                            if x <= y {
                                *db = 0.0;
                            } else {
                                *da = 0.0;
                            }
                        });
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&nodes[*a].value).for_each(|d, &x| {
                        if x < *lo || x > *hi {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(shapes[*a], g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let (r, c) = shapes[*a];
                    let ga = Array2::from_elem((r, c), g[[0, 0]] / (r * c) as f64);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let ga = g
                        .broadcast(shapes[*a])
                        .expect("column gradient broadcasts over its row")
                        .to_owned();
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmax(a) => {
                    // d x_j = g_j - softmax_j * sum_k g_k
                    let row_sums = g.sum_axis(Axis(1));
                    let mut ga = g;
                    for ((mut grow, yrow), s) in ga
                        .rows_mut()
                        .into_iter()
                        .zip(node.value.rows())
                        .zip(row_sums.iter())
                    {
                        for (d, &y) in grow.iter_mut().zip(yrow.iter()) {
                            *d -= y.exp() * s;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gather(a, idx) => {
                    let mut ga = Array2::zeros(shapes[*a]);
                    for (r, &c) in idx.iter().enumerate() {
                        ga[[r, c]] += g[[r, 0]];
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
        }

        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], idx: usize, g: Array2<f64>) {
    match &mut grads[idx] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Array2<f64> {
        self.tape.nodes.borrow()[self.idx].value.clone()
    }

    /// The single entry of a `1×1` value.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.idx].value[[0, 0]]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.idx].value.dim()
    }

    fn unary(self, op: Op, f: impl FnOnce(&Array2<f64>) -> Array2<f64>) -> Var<'t> {
        let value = f(&self.tape.nodes.borrow()[self.idx].value);
        self.tape.push(value, op)
    }

    fn binary(
        self,
        other: Var<'t>,
        op: Op,
        f: impl FnOnce(&Array2<f64>, &Array2<f64>) -> Array2<f64>,
    ) -> Var<'t> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.idx].value, &nodes[other.idx].value)
        };
        self.tape.push(value, op)
    }

    fn assert_same_shape(&self, other: &Var<'t>, what: &str) {
        assert_eq!(self.shape(), other.shape(), "{what}: shape mismatch");
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        let (_, k) = self.shape();
        assert_eq!(k, rhs.shape().0, "matmul: inner dimensions differ");
        self.binary(rhs, Op::MatMul(self.idx, rhs.idx), |a, b| a.dot(b))
    }

    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        assert_eq!(row.shape(), (1, self.shape().1), "add_row: bias shape");
        self.binary(row, Op::AddRow(self.idx, row.idx), |a, r| a + r)
    }

    pub fn broadcast_rows(self, rows: usize) -> Var<'t> {
        assert_eq!(self.shape().0, 1, "broadcast_rows: expects a single row");
        let cols = self.shape().1;
        self.unary(Op::BroadcastRows(self.idx), |a| {
            a.broadcast((rows, cols)).expect("row broadcast").to_owned()
        })
    }

    pub fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.assert_same_shape(&rhs, "add");
        self.binary(rhs, Op::Add(self.idx, rhs.idx), |a, b| a + b)
    }

    pub fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.assert_same_shape(&rhs, "sub");
        self.binary(rhs, Op::Sub(self.idx, rhs.idx), |a, b| a - b)
    }

    pub fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.assert_same_shape(&rhs, "mul");
        self.binary(rhs, Op::Mul(self.idx, rhs.idx), |a, b| a * b)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.idx, c), |a| a * c)
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.idx), |a| a + c)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.idx), |a| a.mapv(f64::tanh))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.idx), |a| a.mapv(f64::exp))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln(self.idx), |a| a.mapv(f64::ln))
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square(self.idx), |a| a.mapv(|x| x * x))
    }

    pub fn min(self, rhs: Var<'t>) -> Var<'t> {
        self.assert_same_shape(&rhs, "min");
        self.binary(rhs, Op::Min(self.idx, rhs.idx), |a, b| {
            let mut out = a.clone();
            Zip::from(&mut out).and(b).for_each(|x, &y| *x = x.min(y));
            out
        })
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.idx, lo, hi), |a| a.mapv(|x| x.clamp(lo, hi)))
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum(self.idx), |a| Array2::from_elem((1, 1), a.sum()))
    }

    pub fn mean(self) -> Var<'t> {
        self.unary(Op::Mean(self.idx), |a| {
            Array2::from_elem((1, 1), a.sum() / a.len() as f64)
        })
    }

    pub fn sum_cols(self) -> Var<'t> {
        self.unary(Op::SumCols(self.idx), |a| {
            a.sum_axis(Axis(1)).insert_axis(Axis(1))
        })
    }

    pub fn log_softmax(self) -> Var<'t> {
        self.unary(Op::LogSoftmax(self.idx), |a| {
            let mut out = a.clone();
            for mut row in out.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
                row.mapv_inplace(|x| x - lse);
            }
            out
        })
    }

    pub fn gather(self, indices: &[usize]) -> Var<'t> {
        let (rows, cols) = self.shape();
        assert_eq!(rows, indices.len(), "gather: one index per row");
        assert!(indices.iter().all(|&c| c < cols), "gather: index out of range");
        let idx = indices.to_vec();
        self.unary(Op::Gather(self.idx, idx.clone()), |a| {
            Array2::from_shape_fn((rows, 1), |(r, _)| a[[r, idx[r]]])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let w = tape.scalar(0.7);
        let x = tape.scalar(3.0);
        let loss = w.mul(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w)[[0, 0]], 3.0);
        assert_eq!(g.wrt(x)[[0, 0]], 0.7);
    }

    #[test]
    fn tanh_slope_at_origin() {
        let tape = Tape::new();
        let w = tape.scalar(0.0);
        let x = tape.scalar(1.0);
        let loss = w.mul(x).tanh();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w)[[0, 0]], 1.0);
    }

    #[test]
    fn empty_tape_is_a_usage_error() {
        let tape = Tape::new();
        let other = Tape::new();
        let loss = other.scalar(1.0);
        assert!(matches!(tape.backward(loss), Err(Error::Usage(_))));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let v = tape.leaf(array![[1.0, 2.0]]);
        assert!(matches!(tape.backward(v), Err(Error::Usage(_))));
    }

    #[test]
    fn reused_node_accumulates() {
        // loss = sum(x * x) through a shared node
        let tape = Tape::new();
        let x = tape.leaf(array![[1.0, -2.0, 3.0]]);
        let loss = x.mul(x).sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x), array![[2.0, -4.0, 6.0]]);
    }

    #[test]
    fn log_softmax_gather_matches_closed_form() {
        let tape = Tape::new();
        let logits = tape.leaf(array![[0.3, -1.2, 2.0]]);
        let lp = logits.log_softmax().gather(&[2]).sum();
        let g = tape.backward(lp).unwrap().wrt(logits);
        let z: f64 = [0.3f64, -1.2, 2.0].iter().map(|x| x.exp()).sum();
        let p = [0.3f64.exp() / z, (-1.2f64).exp() / z, 2.0f64.exp() / z];
        for j in 0..3 {
            let expect = if j == 2 { 1.0 - p[j] } else { -p[j] };
            assert!((g[[0, j]] - expect).abs() < 1e-12);
        }
    }
}
