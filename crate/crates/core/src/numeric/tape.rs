//! Matrix-valued reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and the ids of its
//! inputs. `backward` walks the nodes in reverse recording order and
//! accumulates adjoints, returning gradients for the nodes registered as
//! parameters. Parameters are borrowed, so building a graph over a model
//! does not copy its weights.

use std::borrow::Cow;
use std::collections::BTreeMap;

use super::matrix::{Matrix, Scalar};
use super::ops::{self, Binary, Unary};
use crate::error::{Error, Result};

/// Probability clamp used by the binary cross-entropy node.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T, K> {
    Leaf,
    Param(K),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Unary(Var, Unary),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    LookupRow(Var, usize),
    MaskedSoftmax(Var),
    Sum(Var),
    SumSquares(Var),
    BinaryCrossEntropy(Var, T),
    SoftmaxCrossEntropy(Var, Vec<T>),
    SquaredError(Var, T),
}

impl<T, K> Op<T, K> {
    fn any_input(&self, mut f: impl FnMut(Var) -> bool) -> bool {
        match self {
            Op::Leaf | Op::Param(_) => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddBroadcast(a, b) | Op::Mul(a, b) => f(*a) || f(*b),
            Op::ConcatRows(parts) | Op::ConcatCols(parts) => parts.iter().any(|&p| f(p)),
            Op::Scale(a, _)
            | Op::Unary(a, _)
            | Op::Transpose(a)
            | Op::LookupRow(a, _)
            | Op::MaskedSoftmax(a)
            | Op::Sum(a)
            | Op::SumSquares(a)
            | Op::BinaryCrossEntropy(a, _)
            | Op::SoftmaxCrossEntropy(a, _)
            | Op::SquaredError(a, _) => f(*a),
        }
    }
}

struct Node<'a, T: Scalar, K> {
    value: Cow<'a, Matrix<T>>,
    op: Op<T, K>,
    /// Whether any parameter flows into this node.
    needs_grad: bool,
}

/// Recording of one forward computation. Confined to a single thread.
pub struct Tape<'a, T: Scalar, K = usize> {
    nodes: Vec<Node<'a, T, K>>,
}

impl<'a, T: Scalar, K: Copy + Ord> Default for Tape<'a, T, K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar, K: Copy + Ord> Tape<'a, T, K> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix<T>>, op: Op<T, K>) -> Var {
        let needs_grad =
            matches!(op, Op::Param(_)) || op.any_input(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v).as_slice()[0]
    }

    pub fn constant(&mut self, m: Matrix<T>) -> Var {
        self.push(Cow::Owned(m), Op::Leaf)
    }

    pub fn constant_ref(&mut self, m: &'a Matrix<T>) -> Var {
        self.push(Cow::Borrowed(m), Op::Leaf)
    }

    /// Registers a trainable parameter; its gradient is reported under `key`.
    pub fn param(&mut self, key: K, m: &'a Matrix<T>) -> Var {
        self.push(Cow::Borrowed(m), Op::Param(key))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Cow::Owned(value), Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Cow::Owned(value), Op::Add(a, b)))
    }

    /// `a + b` where `b` is either a column vector with `a.rows()` rows
    /// (added to every column) or a `1 x 1` scalar (added everywhere).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let value = if bv.shape() == (1, 1) {
            let s = bv.as_slice()[0];
            av.map(|x| x + s)
        } else if bv.cols() == 1 && bv.rows() == av.rows() {
            Matrix::from_fn(av.rows(), av.cols(), |r, c| av.get(r, c) + bv.get(r, 0))
        } else {
            return Err(Error::shape("add_broadcast", av.shape(), bv.shape()));
        };
        Ok(self.push(Cow::Owned(value), Op::AddBroadcast(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Cow::Owned(value), Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let value = self.value(a).scale(k);
        self.push(Cow::Owned(value), Op::Scale(a, k))
    }

    pub fn unary(&mut self, op: Unary, a: Var) -> Var {
        let value = ops::unary(op, self.value(a));
        self.push(Cow::Owned(value), Op::Unary(a, op))
    }

    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        match op {
            Binary::Add => self.add(a, b),
            Binary::Mul => self.mul(a, b),
        }
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    /// Stacks inputs vertically; all must have the same column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Degenerate("concat of zero parts".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::shape("concat_rows", self.value(*first).shape(), v.shape()));
            }
            rows += v.rows();
            data.extend_from_slice(v.as_slice());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(Cow::Owned(value), Op::ConcatRows(parts.to_vec())))
    }

    /// Places inputs side by side; all must have the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Degenerate("concat of zero parts".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::shape("concat_cols", self.value(*first).shape(), v.shape()));
            }
            cols += v.cols();
        }
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            for r in 0..rows {
                for c in 0..v.cols() {
                    value.set(r, offset + c, v.get(r, c));
                }
            }
            offset += v.cols();
        }
        Ok(self.push(Cow::Owned(value), Op::ConcatCols(parts.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(Cow::Owned(value), Op::Transpose(a))
    }

    /// Row `index` of a table, returned as a column vector.
    pub fn lookup_row(&mut self, table: Var, index: usize) -> Result<Var> {
        let t = self.value(table);
        if index >= t.rows() {
            return Err(Error::Contract(format!(
                "row {index} out of range for table with {} rows",
                t.rows()
            )));
        }
        let value = Matrix::column(t.row(index).to_vec());
        Ok(self.push(Cow::Owned(value), Op::LookupRow(table, index)))
    }

    /// Softmax over all entries of `a`, restricted to positions where `mask`
    /// is true (row-major order).
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let v = self.value(a);
        let probs = ops::masked_softmax(v.as_slice(), mask)?;
        let value = Matrix::from_vec(v.rows(), v.cols(), probs)?;
        Ok(self.push(Cow::Owned(value), Op::MaskedSoftmax(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(Cow::Owned(value), Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum_squares());
        self.push(Cow::Owned(value), Op::SumSquares(a))
    }

    /// `-(y ln p + (1 - y) ln(1 - p))` with `p` clamped to
    /// `[PROB_CLAMP, 1 - PROB_CLAMP]`. `prob` must be `1 x 1`.
    pub fn binary_cross_entropy(&mut self, prob: Var, target: T) -> Result<Var> {
        let p = self.value(prob);
        if p.shape() != (1, 1) {
            return Err(Error::shape("binary_cross_entropy", p.shape(), (1, 1)));
        }
        if target < T::zero() || target > T::one() {
            return Err(Error::Contract(format!("binary target {target} outside [0, 1]")));
        }
        let eps = T::lit(PROB_CLAMP);
        let c = p.as_slice()[0].max(eps).min(T::one() - eps);
        let loss = -(target * c.ln() + (T::one() - target) * (T::one() - c).ln());
        Ok(self.push(
            Cow::Owned(Matrix::scalar(loss)),
            Op::BinaryCrossEntropy(prob, target),
        ))
    }

    /// Categorical cross-entropy of `softmax(logits)` against a target
    /// distribution, computed through log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &[T]) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != target.len() {
            return Err(Error::shape("softmax_cross_entropy", z.shape(), (target.len(), 1)));
        }
        let max = z.as_slice().iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.as_slice().iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        let loss: T = z
            .as_slice()
            .iter()
            .zip(target)
            .map(|(&x, &t)| -t * (x - lse))
            .sum();
        Ok(self.push(
            Cow::Owned(Matrix::scalar(loss)),
            Op::SoftmaxCrossEntropy(logits, target.to_vec()),
        ))
    }

    pub fn squared_error(&mut self, pred: Var, target: T) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != (1, 1) {
            return Err(Error::shape("squared_error", p.shape(), (1, 1)));
        }
        let d = p.as_slice()[0] - target;
        Ok(self.push(Cow::Owned(Matrix::scalar(d * d)), Op::SquaredError(pred, target)))
    }

    /// Adjoints with respect to the scalar `loss` of every node that depends
    /// on a parameter. Constant subgraphs are skipped.
    pub fn adjoints(&self, loss: Var) -> Result<Adjoints<T>> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut adj: Vec<Option<Matrix<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(T::one()));

        fn accumulate<T: Scalar>(slot: &mut Option<Matrix<T>>, g: Matrix<T>) {
            match slot {
                Some(acc) => acc.add_assign(&g).expect("adjoint shape"),
                None => *slot = Some(g),
            }
        }
        let needs = |v: &Var| self.nodes[v.0].needs_grad;

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(grad) = adj[i].take() else { continue };
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    if needs(a) {
                        let bv = self.value(*b);
                        match &mut adj[a.0] {
                            Some(acc) => acc.add_matmul_nt(&grad, bv)?,
                            slot => *slot = Some(grad.matmul_nt(bv)?),
                        }
                    }
                    if needs(b) {
                        accumulate(&mut adj[b.0], self.value(*a).matmul_tn(&grad)?);
                    }
                }
                Op::Add(a, b) => {
                    if needs(a) {
                        accumulate(&mut adj[a.0], grad.clone());
                    }
                    if needs(b) {
                        accumulate(&mut adj[b.0], grad.clone());
                    }
                }
                Op::AddBroadcast(a, b) => {
                    let bv = self.value(*b);
                    let gb = if bv.shape() == (1, 1) {
                        Matrix::scalar(grad.sum())
                    } else {
                        Matrix::column(
                            (0..grad.rows())
                                .map(|r| grad.row(r).iter().copied().sum())
                                .collect(),
                        )
                    };
                    accumulate(&mut adj[a.0], grad.clone());
                    accumulate(&mut adj[b.0], gb);
                }
                Op::Mul(a, b) => {
                    if needs(a) {
                        accumulate(&mut adj[a.0], grad.hadamard(self.value(*b))?);
                    }
                    if needs(b) {
                        accumulate(&mut adj[b.0], grad.hadamard(self.value(*a))?);
                    }
                }
                Op::Scale(a, k) => accumulate(&mut adj[a.0], grad.scale(*k)),
                Op::Unary(a, op) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let local = x.zip_map(y, "unary", |xv, yv| op.derivative(xv, yv))?;
                    accumulate(&mut adj[a.0], grad.hadamard(&local)?);
                }
                Op::ConcatRows(parts) => {
                    let cols = grad.cols();
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.value(*p).rows();
                        if !needs(p) {
                            offset += rows;
                            continue;
                        }
                        let slice = grad.as_slice()[offset * cols..(offset + rows) * cols].to_vec();
                        accumulate(&mut adj[p.0], Matrix::from_vec(rows, cols, slice)?);
                        offset += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.value(*p).cols();
                        if !needs(p) {
                            offset += cols;
                            continue;
                        }
                        let piece =
                            Matrix::from_fn(grad.rows(), cols, |r, c| grad.get(r, offset + c));
                        accumulate(&mut adj[p.0], piece);
                        offset += cols;
                    }
                }
                Op::Transpose(a) => accumulate(&mut adj[a.0], grad.transpose()),
                Op::LookupRow(table, index) => {
                    let t = self.value(*table);
                    let mut g = Matrix::zeros(t.rows(), t.cols());
                    for c in 0..t.cols() {
                        g.set(*index, c, grad.as_slice()[c]);
                    }
                    accumulate(&mut adj[table.0], g);
                }
                Op::MaskedSoftmax(a) => {
                    let y = &node.value;
                    let dot: T = grad
                        .as_slice()
                        .iter()
                        .zip(y.as_slice())
                        .map(|(&g, &p)| g * p)
                        .sum();
                    let ga = y.zip_map(&grad, "softmax", |p, g| p * (g - dot))?;
                    accumulate(&mut adj[a.0], ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj[a.0], Matrix::filled(r, c, grad.as_slice()[0]));
                }
                Op::SumSquares(a) => {
                    let k = T::lit(2.0) * grad.as_slice()[0];
                    accumulate(&mut adj[a.0], self.value(*a).scale(k));
                }
                Op::BinaryCrossEntropy(p, y) => {
                    let eps = T::lit(PROB_CLAMP);
                    let s = self.scalar(*p);
                    let d = if s < eps || s > T::one() - eps {
                        T::zero()
                    } else {
                        -(*y / s) + (T::one() - *y) / (T::one() - s)
                    };
                    accumulate(&mut adj[p.0], Matrix::scalar(d * grad.as_slice()[0]));
                }
                Op::SoftmaxCrossEntropy(z, target) => {
                    let zv = self.value(*z);
                    let probs = ops::masked_softmax(zv.as_slice(), &vec![true; zv.len()])?;
                    let total: T = target.iter().copied().sum();
                    let g0 = grad.as_slice()[0];
                    let data = probs
                        .iter()
                        .zip(target)
                        .map(|(&p, &t)| (p * total - t) * g0)
                        .collect();
                    accumulate(&mut adj[z.0], Matrix::from_vec(zv.rows(), zv.cols(), data)?);
                }
                Op::SquaredError(p, y) => {
                    let d = T::lit(2.0) * (self.scalar(*p) - *y);
                    accumulate(&mut adj[p.0], Matrix::scalar(d * grad.as_slice()[0]));
                }
            }
            adj[i] = Some(grad);
        }
        Ok(Adjoints { values: adj })
    }

    /// Gradients of the scalar `loss` with respect to every registered
    /// parameter. Parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T, K>> {
        let adj = self.adjoints(loss)?;
        let mut grads = Gradients::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(key) = node.op {
                let g = match adj.values.get(i).and_then(Option::as_ref) {
                    Some(g) => g.clone(),
                    None => Matrix::zeros(node.value.rows(), node.value.cols()),
                };
                grads.accumulate(key, g)?;
            }
        }
        Ok(grads)
    }
}

/// Per-node adjoints from one backward sweep.
pub struct Adjoints<T> {
    values: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Adjoints<T> {
    /// Adjoint of `v`; `None` for nodes the loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.values.get(v.0).and_then(Option::as_ref)
    }
}

/// Gradients keyed by parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T, K> {
    map: BTreeMap<K, Matrix<T>>,
}

impl<T: Scalar, K: Copy + Ord> Default for Gradients<T, K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar, K: Copy + Ord> Gradients<T, K> {
    pub fn new() -> Self {
        Gradients {
            map: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: K) -> Option<&Matrix<T>> {
        self.map.get(&key)
    }

    pub fn get_mut(&mut self, key: K) -> Option<&mut Matrix<T>> {
        self.map.get_mut(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (K, &Matrix<T>)> {
        self.map.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn accumulate(&mut self, key: K, g: Matrix<T>) -> Result<()> {
        match self.map.get_mut(&key) {
            Some(acc) => acc.add_assign(&g),
            None => {
                self.map.insert(key, g);
                Ok(())
            }
        }
    }

    /// Adds every entry of `other` into `self`.
    pub fn merge(&mut self, other: Gradients<T, K>) -> Result<()> {
        for (k, g) in other.map {
            self.accumulate(k, g)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: T) {
        for g in self.map.values_mut() {
            *g = g.scale(k);
        }
    }
}
