//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op evaluates eagerly with the kernels in [`crate::tensor`] and
//! records its parents. [`Tape::backward`] replays the record in reverse
//! and returns one gradient per parameter leaf. Constant leaves (graph
//! features, frozen inputs) and everything computed only from constants
//! carry no gradient.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{BinaryOp, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Binary(BinaryOp, Var, Var),
    Sigmoid(Var),
    Relu(Var),
    Tanh(Var),
    OneMinus(Var),
    AddConst(Var),
    ScaleConst(Var, T),
    Scale { x: Var, s: Var },
    Linear { x: Var, w: Var, b: Var },
    ConcatCols(Vec<Var>),
    GatherRows { x: Var, index: Arc<[usize]> },
    ScatterAddRows { x: Var, index: Arc<[usize]> },
    SumRows(Var),
    SumAll(Var),
    CrossEntropy { logits: Var, label: usize, probs: Tensor<T> },
    MeanSquaredError { x: Var, target: Tensor<T> },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    is_param: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to the parameter leaves of a tape.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` for constants and for parameters the loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when the loss ignores it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros_like(like))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            is_param: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.0].is_param = true;
        v
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let value = Tensor::apply_binary(op, self.value(a), self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Hadamard, a, b)
    }

    fn unary(&mut self, x: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.needs(&[x]);
        self.push(value, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).sigmoid();
        self.unary(x, v, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).relu();
        self.unary(x, v, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).tanh();
        self.unary(x, v, Op::Tanh(x))
    }

    /// `1 − x`
    pub fn one_minus(&mut self, x: Var) -> Var {
        let v = self.value(x).one_minus();
        self.unary(x, v, Op::OneMinus(x))
    }

    /// `x + c` elementwise.
    pub fn add_const(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).map(|a| a + c);
        self.unary(x, v, Op::AddConst(x))
    }

    pub fn scale_const(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).scale(c);
        self.unary(x, v, Op::ScaleConst(x, c))
    }

    /// `s · x` where `s` holds a single element.
    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "scale",
                left: vec![1],
                right: sv.shape().to_vec(),
            });
        }
        let k = sv.data()[0];
        let v = self.value(x).scale(k);
        let rg = self.needs(&[x, s]);
        Ok(self.push(v, Op::Scale { x, s }, rg))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let v = Tensor::linear(self.value(x), self.value(w), self.value(b))?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(v, Op::Linear { x, w, b }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat_cols(&values)?;
        let rg = self.needs(parts);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn gather_rows(&mut self, x: Var, index: Arc<[usize]>) -> Result<Var> {
        let v = self.value(x).gather_rows(&index)?;
        let rg = self.needs(&[x]);
        Ok(self.push(v, Op::GatherRows { x, index }, rg))
    }

    /// Sums row `i` of `x` into row `index[i]` of an `n`-row zero matrix.
    pub fn scatter_add_rows(&mut self, x: Var, index: Arc<[usize]>, n: usize) -> Result<Var> {
        let v = self.value(x).scatter_add_rows(&index, n)?;
        let rg = self.needs(&[x]);
        Ok(self.push(v, Op::ScatterAddRows { x, index }, rg))
    }

    pub fn sum_rows(&mut self, x: Var) -> Var {
        let v = self.value(x).sum_rows();
        self.unary(x, v, Op::SumRows(x))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.unary(x, v, Op::SumAll(x))
    }

    /// `−log softmax(logits)[label]`, stabilized by max subtraction.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let l = self.value(logits);
        if l.rank() != 1 || l.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "cross_entropy expects a non-empty logit vector, got {:?}",
                l.shape()
            )));
        }
        if label >= l.len() {
            return Err(Error::IndexOutOfRange {
                what: "class label",
                index: label,
                len: l.len(),
            });
        }
        let max = l.data().iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = l.data().iter().map(|&x| (x - max).exp()).collect();
        let z: T = exps.iter().copied().sum();
        let loss = z.ln() - (l.data()[label] - max);
        let probs = Tensor::from_vec(exps.into_iter().map(|e| e / z).collect());
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                label,
                probs,
            },
            rg,
        ))
    }

    /// Mean over all elements of `(x − target)²`.
    pub fn mean_squared_error(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        let xv = self.value(x);
        let diff = xv.sub(target)?;
        let n = T::from_usize(diff.len().max(1)).expect("element count fits");
        let loss = diff.data().iter().map(|&d| d * d).sum::<T>() / n;
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MeanSquaredError {
                x,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].is_param {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => match kind {
                BinaryOp::Add => {
                    self.accumulate(grads, *a, g.clone())?;
                    self.accumulate(grads, *b, g.clone())?;
                }
                BinaryOp::Sub => {
                    self.accumulate(grads, *a, g.clone())?;
                    self.accumulate(grads, *b, g.scale(-T::one()))?;
                }
                BinaryOp::Hadamard => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    self.accumulate(grads, *a, ga)?;
                    self.accumulate(grads, *b, gb)?;
                }
            },
            Op::Sigmoid(x) => {
                let local = out.map(|y| y * (T::one() - y));
                self.accumulate(grads, *x, g.hadamard(&local)?)?;
            }
            Op::Relu(x) => {
                let mask = self
                    .value(*x)
                    .map(|v| if v > T::zero() { T::one() } else { T::zero() });
                self.accumulate(grads, *x, g.hadamard(&mask)?)?;
            }
            Op::Tanh(x) => {
                let local = out.map(|y| T::one() - y * y);
                self.accumulate(grads, *x, g.hadamard(&local)?)?;
            }
            Op::OneMinus(x) => self.accumulate(grads, *x, g.scale(-T::one()))?,
            Op::AddConst(x) => self.accumulate(grads, *x, g.clone())?,
            Op::ScaleConst(x, c) => self.accumulate(grads, *x, g.scale(*c))?,
            Op::Scale { x, s } => {
                let k = self.value(*s).data()[0];
                self.accumulate(grads, *x, g.scale(k))?;
                let gs = g.hadamard(self.value(*x))?.sum();
                let shape = self.value(*s).shape().to_vec();
                self.accumulate(grads, *s, Tensor::new(shape, vec![gs])?)?;
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (out_dim, in_dim) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.rows();
                if self.nodes[x.0].requires_grad {
                    let mut gx = Tensor::zeros_like(xv);
                    for r in 0..rows {
                        let gr = g.row(r);
                        let dst = gx.row_mut(r);
                        for (o, &go) in gr.iter().enumerate() {
                            let wr = &wv.data()[o * in_dim..(o + 1) * in_dim];
                            for (d, &wi) in dst.iter_mut().zip(wr) {
                                *d += go * wi;
                            }
                        }
                    }
                    self.accumulate(grads, *x, gx)?;
                }
                if self.nodes[w.0].requires_grad {
                    let mut gw = Tensor::zeros_like(wv);
                    for r in 0..rows {
                        let xr = xv.row(r);
                        for (o, &go) in g.row(r).iter().enumerate() {
                            let dst = &mut gw.data_mut()[o * in_dim..(o + 1) * in_dim];
                            for (d, &xi) in dst.iter_mut().zip(xr) {
                                *d += go * xi;
                            }
                        }
                    }
                    self.accumulate(grads, *w, gw)?;
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = Tensor::zeros(&[out_dim]);
                    for r in 0..rows {
                        for (d, &go) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *d += go;
                        }
                    }
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::ConcatCols(parts) => {
                let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).cols()).collect();
                for (p, gp) in parts.iter().zip(g.split_cols(&widths)?) {
                    let gp = gp.reshape(self.value(*p).shape().to_vec())?;
                    self.accumulate(grads, *p, gp)?;
                }
            }
            Op::GatherRows { x, index } => {
                let xv = self.value(*x);
                let gx = g.scatter_add_rows(index, xv.rows())?.reshape(xv.shape().to_vec())?;
                self.accumulate(grads, *x, gx)?;
            }
            Op::ScatterAddRows { x, index } => {
                let gx = g.gather_rows(index)?;
                self.accumulate(grads, *x, gx)?;
            }
            Op::SumRows(x) => {
                let xv = self.value(*x);
                let mut gx = Tensor::zeros_like(xv);
                for r in 0..xv.rows() {
                    gx.row_mut(r).copy_from_slice(g.data());
                }
                self.accumulate(grads, *x, gx)?;
            }
            Op::SumAll(x) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, Tensor::full(xv.shape(), g.data()[0]))?;
            }
            Op::CrossEntropy {
                logits,
                label,
                probs,
            } => {
                let mut gl = probs.clone();
                gl.data_mut()[*label] -= T::one();
                self.accumulate(grads, *logits, gl.scale(g.data()[0]))?;
            }
            Op::MeanSquaredError { x, target } => {
                let diff = self.value(*x).sub(target)?;
                let n = T::from_usize(diff.len().max(1)).expect("element count fits");
                let k = g.data()[0] * (T::one() + T::one()) / n;
                self.accumulate(grads, *x, diff.scale(k))?;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Tape::backward`].
pub fn grad_backward<T: Scalar>(tape: &Tape<T>, loss: Var) -> Result<Gradients<T>> {
    tape.backward(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        let sq = tape.hadamard(x, x).unwrap();
        let loss = tape.sum_all(sq);
        let g = grad_backward(&tape, loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(Tensor::matrix(1, 1, vec![0.0]).unwrap());
        let b = tape.constant(Tensor::zeros(&[1]));
        let x = tape.constant(Tensor::from_vec(vec![1.0]));
        let pre = tape.linear(x, w, b).unwrap();
        let loss = tape.sigmoid(pre);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.25]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.relu(x);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::from_vec(vec![3.0]));
        let p = tape.param(Tensor::from_vec(vec![2.0]));
        let y = tape.hadamard(c, p).unwrap();
        let loss = tape.sum_all(y);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap().data(), &[3.0]);
    }

    #[test]
    fn reused_param_accumulates() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::from_vec(vec![1.5]));
        let a = tape.scale_const(p, 2.0);
        let b = tape.add(a, p).unwrap();
        let loss = tape.sum_all(b);
        assert_eq!(tape.backward(loss).unwrap().get(p).unwrap().data(), &[3.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut tape = Tape::<f64>::new();
        let l = tape.param(Tensor::from_vec(vec![0.0, 0.0]));
        let loss = tape.cross_entropy(l, 0).unwrap();
        assert!((tape.value(loss).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(tape.cross_entropy(l, 2).is_err());
    }
}
