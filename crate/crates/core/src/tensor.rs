//! Dense row-major tensors and the forward kernels the layers are built from.
//!
//! Kernels treat a rank-1 tensor of length `d` as a single row, so the same
//! code path serves one node and a whole `n × d` state matrix. Zero-sized
//! dimensions are legal (a graph without edges has an `0 × d` edge-state
//! matrix).

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Hadamard,
}

impl BinaryOp {
    #[inline]
    fn eval<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Hadamard => a * b,
        }
    }

    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Hadamard => "hadamard",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(&other.shape)
    }

    pub fn ones_like(other: &Self) -> Self {
        Self::ones(&other.shape)
    }

    /// Rank-1 tensor.
    pub fn from_vec(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_f64_slice(data: &[f64]) -> Self {
        Self::from_vec(data.iter().map(|&x| T::from_f64_lossy(x)).collect())
    }

    /// Shape `[1]`; used for scalar parameters such as epsilon.
    pub fn scalar(value: T) -> Self {
        Self::from_vec(vec![value])
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(d: usize) -> Self {
        let mut t = Self::zeros(&[d, d]);
        for i in 0..d {
            t.data[i * d + i] = T::one();
        }
        t
    }

    /// Stacks equally long rows into a matrix. `cols` is needed when `rows` is empty.
    pub fn from_rows(rows: &[Vec<T>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of rows when viewed as a matrix (1 for a rank-1 tensor).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Row width when viewed as a matrix.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has rank >= 1")
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn row_tensor(&self, i: usize) -> Self {
        Self::from_vec(self.row(i).to_vec())
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() || shape.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|x| U::from_f64_lossy(x.to_f64_exact()))
                .collect(),
        }
    }

    fn ensure_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn apply_binary(op: BinaryOp, a: &Self, b: &Self) -> Result<Self> {
        a.ensure_same_shape(b, op.name())?;
        Ok(Self {
            shape: a.shape.clone(),
            data: a
                .data
                .iter()
                .zip(&b.data)
                .map(|(&x, &y)| op.eval(x, y))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::apply_binary(BinaryOp::Add, self, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::apply_binary(BinaryOp::Sub, self, other)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        Self::apply_binary(BinaryOp::Hadamard, self, other)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.ensure_same_shape(other, "add_assign")?;
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid_scalar)
    }

    pub fn relu(&self) -> Self {
        self.map(|x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn tanh(&self) -> Self {
        self.map(|x| x.tanh())
    }

    pub fn one_minus(&self) -> Self {
        self.map(|x| T::one() - x)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Concatenates rank-1 tensors.
    pub fn concat(parts: &[&Self]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Empty("concat"));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            if p.rank() != 1 {
                return Err(invalid(format!(
                    "concat expects rank-1 parts, got shape {:?}",
                    p.shape
                )));
            }
            if p.is_empty() {
                return Err(Error::Empty("concat part"));
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Self::from_vec(data))
    }

    /// Inverse of [`Tensor::concat`].
    pub fn split(&self, lengths: &[usize]) -> Result<Vec<Self>> {
        if self.rank() != 1 || lengths.iter().sum::<usize>() != self.len() {
            return Err(Error::ShapeMismatch {
                op: "split",
                left: self.shape.clone(),
                right: lengths.to_vec(),
            });
        }
        let mut out = Vec::with_capacity(lengths.len());
        let mut start = 0;
        for &l in lengths {
            out.push(Self::from_vec(self.data[start..start + l].to_vec()));
            start += l;
        }
        Ok(out)
    }

    /// Row-wise concatenation of matrices (or rank-1 tensors) with equal row counts.
    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("concat_cols"))?;
        let rows = first.rows();
        let rank = first.rank();
        for p in parts {
            if p.rows() != rows || p.rank() != rank {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: first.shape.clone(),
                    right: p.shape.clone(),
                });
            }
        }
        let cols: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        let shape = if rank == 1 { vec![cols] } else { vec![rows, cols] };
        Self::new(shape, data)
    }

    /// Splits columns back into blocks of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Self>> {
        if widths.iter().sum::<usize>() != self.cols() {
            return Err(Error::ShapeMismatch {
                op: "split_cols",
                left: self.shape.clone(),
                right: widths.to_vec(),
            });
        }
        let rows = self.rows();
        let mut out: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
        for r in 0..rows {
            let row = self.row(r);
            let mut start = 0;
            for (block, &w) in out.iter_mut().zip(widths) {
                block.extend_from_slice(&row[start..start + w]);
                start += w;
            }
        }
        out.into_iter()
            .zip(widths)
            .map(|(data, &w)| {
                if self.rank() == 1 {
                    Ok(Self::from_vec(data))
                } else {
                    Self::matrix(rows, w, data)
                }
            })
            .collect()
    }

    /// `x · Wᵀ + b` applied to every row of `x`; `w` is `[out × in]`, `b` is `[out]`.
    pub fn linear(x: &Self, w: &Self, b: &Self) -> Result<Self> {
        if w.rank() != 2 || b.rank() != 1 || b.len() != w.shape[0] || x.cols() != w.shape[1] {
            return Err(Error::ShapeMismatch {
                op: "linear",
                left: x.shape.clone(),
                right: w.shape.clone(),
            });
        }
        let (out_dim, in_dim) = (w.shape[0], w.shape[1]);
        let rows = x.rows();
        let mut data = Vec::with_capacity(rows * out_dim);
        for r in 0..rows {
            let xr = x.row(r);
            for o in 0..out_dim {
                let wr = &w.data[o * in_dim..(o + 1) * in_dim];
                let mut acc = T::zero();
                for (&wi, &xi) in wr.iter().zip(xr) {
                    acc += wi * xi;
                }
                data.push(acc + b.data[o]);
            }
        }
        let shape = if x.rank() == 1 {
            vec![out_dim]
        } else {
            vec![rows, out_dim]
        };
        Self::new(shape, data)
    }

    /// Matrix whose row `i` is row `index[i]` of `self`.
    pub fn gather_rows(&self, index: &[usize]) -> Result<Self> {
        let rows = self.rows();
        let cols = self.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= rows {
                return Err(Error::IndexOutOfRange {
                    what: "rows",
                    index: i,
                    len: rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::matrix(index.len(), cols, data)
    }

    /// `out[index[i]] += self[i]`, accumulated in row order into `n` zero rows.
    pub fn scatter_add_rows(&self, index: &[usize], n: usize) -> Result<Self> {
        if index.len() != self.rows() {
            return Err(Error::ShapeMismatch {
                op: "scatter_add_rows",
                left: self.shape.clone(),
                right: vec![index.len()],
            });
        }
        let cols = self.cols();
        let mut out = Self::zeros(&[n, cols]);
        for (i, &dst) in index.iter().enumerate() {
            if dst >= n {
                return Err(Error::IndexOutOfRange {
                    what: "scatter target",
                    index: dst,
                    len: n,
                });
            }
            let src = self.row(i);
            for (o, &s) in out.row_mut(dst).iter_mut().zip(src) {
                *o += s;
            }
        }
        Ok(out)
    }

    /// Column sums as a rank-1 tensor (sum pooling over rows).
    pub fn sum_rows(&self) -> Self {
        let cols = self.cols();
        let mut out = vec![T::zero(); cols];
        for r in 0..self.rows() {
            for (o, &x) in out.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        Self::from_vec(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    pub fn linf_norm(&self) -> T {
        self.data.iter().map(|x| x.abs()).fold(T::zero(), T::max)
    }

    pub fn l2_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the largest entry; first one wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, &x) in self.data.iter().enumerate() {
            match best {
                Some((_, b)) if x <= b => {}
                _ => best = Some((i, x)),
            }
        }
        best.map(|(i, _)| i)
    }
}

#[inline]
pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl<T: Scalar> Serialize for Tensor<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TensorRepr {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x.to_f64_exact()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Tensor<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TensorRepr::deserialize(deserializer)?;
        let data = repr.data.into_iter().map(T::from_f64_lossy).collect();
        Tensor::new(repr.shape, data).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64_slice(v)
    }

    #[test]
    fn binary_ops() {
        let h = Tensor::apply_binary(BinaryOp::Hadamard, &t(&[1.0, 2.0]), &t(&[3.0, 4.0])).unwrap();
        assert_eq!(h.data(), &[3.0, 8.0]);
        let a = Tensor::apply_binary(BinaryOp::Add, &t(&[0.0, 0.0]), &t(&[5.0, -5.0])).unwrap();
        assert_eq!(a.data(), &[5.0, -5.0]);
        let x = t(&[0.3, -1.7, 2.0]);
        assert_eq!(x.hadamard(&Tensor::ones_like(&x)).unwrap(), x);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let err = t(&[1.0, 2.0]).add(&t(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { op: "add", .. }));
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(t(&[0.0]).sigmoid().data(), &[0.5]);
        assert!((1.0 - t(&[50.0]).sigmoid().data()[0]).abs() <= 1e-20);
        assert!(t(&[-50.0]).sigmoid().data()[0] < 1e-21);
        assert!(t(&[-50.0]).sigmoid().data()[0] > 0.0);
    }

    #[test]
    fn concat_examples() {
        let c = Tensor::concat(&[&t(&[1.0, 2.0]), &t(&[3.0])]).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 3.0]);
        let empty = Tensor::<f64>::from_vec(vec![]);
        assert!(Tensor::concat(&[&t(&[1.0]), &empty]).is_err());
        assert!(Tensor::<f64>::concat(&[]).is_err());
        let d = 4;
        let gate_in = Tensor::concat(&[&Tensor::<f64>::ones(&[d]), &Tensor::zeros(&[d])]).unwrap();
        assert_eq!(gate_in.len(), 2 * d);
    }

    #[test]
    fn linear_rows() {
        let w = Tensor::matrix(2, 3, vec![1.0, 0.0, 2.0, 0.0, 1.0, -1.0]).unwrap();
        let b = t(&[0.5, -0.5]);
        let x = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 0.0, 1.0, 1.0]).unwrap();
        let y = Tensor::linear(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert_eq!(y.data(), &[7.5, -1.5, 2.5, -0.5]);
        let y1 = Tensor::linear(&t(&[1.0, 2.0, 3.0]), &w, &b).unwrap();
        assert_eq!(y1.shape(), &[2]);
    }

    #[test]
    fn gather_scatter() {
        let x = Tensor::matrix(3, 1, vec![1.0, 10.0, 100.0]).unwrap();
        let g = x.gather_rows(&[2, 0, 0]).unwrap();
        assert_eq!(g.data(), &[100.0, 1.0, 1.0]);
        let s = g.scatter_add_rows(&[1, 1, 0], 3).unwrap();
        assert_eq!(s.data(), &[1.0, 101.0, 0.0]);
        assert!(x.gather_rows(&[3]).is_err());
        let empty = Tensor::<f64>::zeros(&[0, 4]);
        assert_eq!(empty.scatter_add_rows(&[], 2).unwrap(), Tensor::zeros(&[2, 4]));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let x = t(&[0.1, 1.0 / 3.0, -2.5e-300, std::f64::consts::PI]);
        let s = serde_json::to_string(&x).unwrap();
        let y: Tensor<f64> = serde_json::from_str(&s).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn concat_then_split_recovers_parts(
                a in prop::collection::vec(-1e6f64..1e6, 1..6),
                b in prop::collection::vec(-1e6f64..1e6, 1..6),
                c in prop::collection::vec(-1e6f64..1e6, 1..6),
            ) {
                let parts = [Tensor::from_vec(a), Tensor::from_vec(b), Tensor::from_vec(c)];
                let joined = Tensor::concat(&[&parts[0], &parts[1], &parts[2]]).unwrap();
                let lens: Vec<usize> = parts.iter().map(|p| p.len()).collect();
                let back = joined.split(&lens).unwrap();
                prop_assert_eq!(back.as_slice(), parts.as_slice());
            }

            #[test]
            fn sigmoid_is_open_unit_and_symmetric(x in -50.0f64..50.0) {
                let s = sigmoid_scalar(x);
                prop_assert!(s > 0.0 && s < 1.0 || (x > 36.0 && s == 1.0));
                prop_assert!((s + sigmoid_scalar(-x) - 1.0).abs() <= f64::EPSILON);
            }
        }
    }
}
