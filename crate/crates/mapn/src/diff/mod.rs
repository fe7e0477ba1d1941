//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Computation graphs are built dynamically: every operation records its
//! parents, and [`DiffValue::backward`] walks the graph once in reverse
//! topological order, accumulating gradients additively across fan-out.
//! Graphs are confined to a single thread; independent workers build
//! independent graphs.
//!
//! Shape errors are programming errors and panic with the operation tag and
//! both shapes. Fallible numeric conditions (non-scalar backward root,
//! non-finite values in a gradient check) are reported as [`DiffError`].

mod store;

pub use store::{grad_check, ParamStore, StoreError};

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use thiserror::Error;

use crate::scalar::{real, Real};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

enum Op<F: Real> {
    Leaf,
    Add(DiffValue<F>, DiffValue<F>),
    Sub(DiffValue<F>, DiffValue<F>),
    Mul(DiffValue<F>, DiffValue<F>),
    Div(DiffValue<F>, DiffValue<F>),
    Neg(DiffValue<F>),
    MatMul(DiffValue<F>, DiffValue<F>),
    Dot(DiffValue<F>, DiffValue<F>),
    Concat { axis: usize, parts: Vec<DiffValue<F>> },
    Stack(Vec<DiffValue<F>>),
    Narrow { src: DiffValue<F>, axis: usize, start: usize },
    SumAxis { src: DiffValue<F>, axis: usize },
    MeanAxis { src: DiffValue<F>, axis: usize },
    SumAll(DiffValue<F>),
    Sigmoid(DiffValue<F>),
    Tanh(DiffValue<F>),
    Exp(DiffValue<F>),
    Log(DiffValue<F>),
    LeakyRelu { src: DiffValue<F>, slope: F },
    Softmax(DiffValue<F>),
    NormP { src: DiffValue<F>, p: F },
    ScaleRows { mat: DiffValue<F>, scales: DiffValue<F> },
}

impl<F: Real> Op<F> {
    fn parents(&self) -> Vec<&DiffValue<F>> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) | Op::Dot(a, b) => {
                vec![a, b]
            }
            Op::Neg(a)
            | Op::SumAll(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Softmax(a) => vec![a],
            Op::Concat { parts, .. } | Op::Stack(parts) => parts.iter().collect(),
            Op::Narrow { src, .. }
            | Op::SumAxis { src, .. }
            | Op::MeanAxis { src, .. }
            | Op::LeakyRelu { src, .. }
            | Op::NormP { src, .. } => vec![src],
            Op::ScaleRows { mat, scales } => vec![mat, scales],
        }
    }
}

struct Node<F: Real> {
    data: RefCell<Tensor<F>>,
    grad: RefCell<Option<Tensor<F>>>,
    op: Op<F>,
    requires: bool,
}

/// A node in a dynamically built computation graph.
///
/// Cloning is cheap (shared reference); the underlying value is shared.
#[derive(Clone)]
pub struct DiffValue<F: Real>(Rc<Node<F>>);

/// How a binary elementwise op pairs its operands.
#[derive(Clone, Copy, PartialEq)]
enum Pairing {
    Same,
    LeftScalar,
    RightScalar,
}

fn pairing<F: Real>(op: &str, a: &Tensor<F>, b: &Tensor<F>) -> Pairing {
    if a.shape() == b.shape() {
        Pairing::Same
    } else if b.is_scalar() {
        // checked before the left side so `[1] op []` keeps shape `[1]`
        Pairing::RightScalar
    } else if a.is_scalar() {
        Pairing::LeftScalar
    } else {
        panic!("{op}: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
    }
}

fn ew<F: Real>(op: &str, a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    match pairing(op, a, b) {
        Pairing::Same => a.zip_map(b, f),
        Pairing::LeftScalar => {
            let s = a.item();
            b.map(|x| f(s, x))
        }
        Pairing::RightScalar => {
            let s = b.item();
            a.map(|x| f(x, s))
        }
    }
}

/// Reduce a gradient back to the operand's shape (sums when the operand was
/// a broadcast scalar).
fn reduce_to<F: Real>(grad: Tensor<F>, shape: &[usize]) -> Tensor<F> {
    if grad.shape() == shape {
        grad
    } else {
        let mut t = Tensor::zeros(shape);
        t.data_mut()[0] = grad.sum();
        t
    }
}

/// Per-pass gradient scratch, keyed by node identity.
#[derive(Default)]
struct PassGrads<F: Real> {
    grads: std::collections::HashMap<usize, Tensor<F>>,
}

impl<F: Real> PassGrads<F> {
    fn add(&mut self, v: &DiffValue<F>, g: Tensor<F>) {
        self.grads
            .entry(v.ptr())
            .and_modify(|acc| *acc = acc.add(&g))
            .or_insert(g);
    }
}

impl<F: Real> DiffValue<F> {
    fn from_op(data: Tensor<F>, op: Op<F>) -> Self {
        let requires = op.parents().iter().any(|p| p.0.requires);
        DiffValue(Rc::new(Node { data: RefCell::new(data), grad: RefCell::new(None), op, requires }))
    }

    /// Trainable leaf.
    pub fn leaf(data: Tensor<F>) -> Self {
        DiffValue(Rc::new(Node { data: RefCell::new(data), grad: RefCell::new(None), op: Op::Leaf, requires: true }))
    }

    /// Non-trainable leaf (no gradient is ever propagated into it).
    pub fn constant(data: Tensor<F>) -> Self {
        DiffValue(Rc::new(Node { data: RefCell::new(data), grad: RefCell::new(None), op: Op::Leaf, requires: false }))
    }

    pub fn scalar_const(v: F) -> Self {
        Self::constant(Tensor::scalar(v))
    }

    pub fn data(&self) -> Ref<'_, Tensor<F>> {
        self.0.data.borrow()
    }

    /// Replace the stored tensor (used by optimizers and gradient checks on
    /// leaves; downstream nodes are not recomputed).
    pub fn set_data(&self, t: Tensor<F>) {
        assert_eq!(self.shape(), *t.shape(), "set_data must preserve shape");
        *self.0.data.borrow_mut() = t;
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.data.borrow().shape().to_vec()
    }

    pub fn item(&self) -> F {
        self.0.data.borrow().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires
    }

    /// Accumulated gradient, zeros if backward never reached this node.
    pub fn grad(&self) -> Tensor<F> {
        match &*self.0.grad.borrow() {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shape()),
        }
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    fn accumulate(&self, g: Tensor<F>) {
        let mut slot = self.0.grad.borrow_mut();
        match &mut *slot {
            Some(acc) => *acc = acc.add(&g),
            None => *slot = Some(g),
        }
    }

    fn ptr(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    // ---- operations ------------------------------------------------------

    pub fn add(&self, rhs: &Self) -> Self {
        let out = ew("add", &self.data(), &rhs.data(), |a, b| a + b);
        Self::from_op(out, Op::Add(self.clone(), rhs.clone()))
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let out = ew("sub", &self.data(), &rhs.data(), |a, b| a - b);
        Self::from_op(out, Op::Sub(self.clone(), rhs.clone()))
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let out = ew("mul", &self.data(), &rhs.data(), |a, b| a * b);
        Self::from_op(out, Op::Mul(self.clone(), rhs.clone()))
    }

    pub fn div(&self, rhs: &Self) -> Self {
        let out = ew("div", &self.data(), &rhs.data(), |a, b| a / b);
        Self::from_op(out, Op::Div(self.clone(), rhs.clone()))
    }

    pub fn neg(&self) -> Self {
        let out = self.data().map(|x| -x);
        Self::from_op(out, Op::Neg(self.clone()))
    }

    pub fn scale(&self, s: F) -> Self {
        self.mul(&Self::scalar_const(s))
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let out = self.data().matmul(&rhs.data());
        Self::from_op(out, Op::MatMul(self.clone(), rhs.clone()))
    }

    pub fn dot(&self, rhs: &Self) -> Self {
        let a = self.data();
        let b = rhs.data();
        assert_eq!(a.shape(), b.shape(), "dot: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
        assert_eq!(a.ndim(), 1, "dot expects vectors, got {:?}", a.shape());
        let v = a.data().iter().zip(b.data()).fold(F::zero(), |acc, (&x, &y)| acc + x * y);
        drop((a, b));
        Self::from_op(Tensor::scalar(v), Op::Dot(self.clone(), rhs.clone()))
    }

    pub fn concat(axis: usize, parts: &[Self]) -> Self {
        assert!(!parts.is_empty(), "concat of zero values");
        let datas: Vec<_> = parts.iter().map(|p| p.data().clone()).collect();
        let refs: Vec<&Tensor<F>> = datas.iter().collect();
        let out = Tensor::concat(axis, &refs);
        Self::from_op(out, Op::Concat { axis, parts: parts.to_vec() })
    }

    /// Stack one-element values into a vector.
    pub fn stack(parts: &[Self]) -> Self {
        assert!(!parts.is_empty(), "stack of zero values");
        let data: Vec<F> = parts
            .iter()
            .map(|p| {
                let d = p.data();
                assert!(d.is_scalar(), "stack expects scalars, got {:?}", d.shape());
                d.item()
            })
            .collect();
        Self::from_op(Tensor::vector(data), Op::Stack(parts.to_vec()))
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        let out = self.data().narrow(axis, start, len);
        Self::from_op(out, Op::Narrow { src: self.clone(), axis, start })
    }

    pub fn sum_axis(&self, axis: usize) -> Self {
        let out = self.data().sum_axis(axis);
        Self::from_op(out, Op::SumAxis { src: self.clone(), axis })
    }

    pub fn mean_axis(&self, axis: usize) -> Self {
        let out = self.data().mean_axis(axis);
        Self::from_op(out, Op::MeanAxis { src: self.clone(), axis })
    }

    pub fn sum_all(&self) -> Self {
        let out = Tensor::scalar(self.data().sum());
        Self::from_op(out, Op::SumAll(self.clone()))
    }

    pub fn mean_all(&self) -> Self {
        let n = self.data().len();
        self.sum_all().scale(F::one() / F::from_usize(n).unwrap())
    }

    pub fn sigmoid(&self) -> Self {
        let out = self.data().map(|x| F::one() / (F::one() + (-x).exp()));
        Self::from_op(out, Op::Sigmoid(self.clone()))
    }

    pub fn tanh(&self) -> Self {
        let out = self.data().map(|x| x.tanh());
        Self::from_op(out, Op::Tanh(self.clone()))
    }

    pub fn exp(&self) -> Self {
        let out = self.data().map(|x| x.exp());
        Self::from_op(out, Op::Exp(self.clone()))
    }

    pub fn log(&self) -> Self {
        {
            let d = self.data();
            if let Some(bad) = d.data().iter().find(|&&x| x <= F::zero()) {
                panic!("log of non-positive value {bad}");
            }
        }
        let out = self.data().map(|x| x.ln());
        Self::from_op(out, Op::Log(self.clone()))
    }

    /// Leaky ReLU; the derivative at 0 takes the positive side.
    pub fn leaky_relu(&self, slope: F) -> Self {
        let out = self.data().map(|x| if x >= F::zero() { x } else { slope * x });
        Self::from_op(out, Op::LeakyRelu { src: self.clone(), slope })
    }

    /// Softmax over a vector (max-shifted for stability).
    pub fn softmax(&self) -> Self {
        let d = self.data();
        assert_eq!(d.ndim(), 1, "softmax expects a vector, got {:?}", d.shape());
        let m = d.data().iter().cloned().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = d.data().iter().map(|&x| (x - m).exp()).collect();
        let z = exps.iter().fold(F::zero(), |a, &b| a + b);
        let out = Tensor::vector(exps.into_iter().map(|e| e / z).collect());
        drop(d);
        Self::from_op(out, Op::Softmax(self.clone()))
    }

    /// `p`-norm of a vector or matrix (entrywise), `p >= 1`.
    pub fn norm_p(&self, p: F) -> Self {
        assert!(p >= F::one(), "norm_p requires p >= 1");
        let d = self.data();
        let s = d.data().iter().fold(F::zero(), |acc, &x| acc + x.abs().powf(p));
        let out = Tensor::scalar(s.powf(F::one() / p));
        drop(d);
        Self::from_op(out, Op::NormP { src: self.clone(), p })
    }

    /// Row-broadcast product: row `i` of the matrix times `scales[i]`.
    pub fn scale_rows(&self, scales: &Self) -> Self {
        let out = self.data().scale_rows(&scales.data());
        Self::from_op(out, Op::ScaleRows { mat: self.clone(), scales: scales.clone() })
    }

    // ---- backward --------------------------------------------------------

    /// Populate gradients of all ancestors of a scalar root. Each pass
    /// computes its own contribution and adds it to the persistent `grad`
    /// slots, so two passes without [`DiffValue::zero_grad`] double them.
    pub fn backward(&self) -> Result<(), DiffError> {
        if !self.data().is_scalar() {
            return Err(DiffError::NonScalarRoot(self.shape()));
        }
        let order = self.topo_order();
        let mut pass = PassGrads::default();
        pass.add(self, Tensor::full(&self.shape(), F::one()));
        for v in order.iter().rev() {
            let grad = match pass.grads.get(&v.ptr()) {
                Some(g) => g.clone(),
                None => continue, // not reached from the root
            };
            v.propagate(&grad, &mut pass);
        }
        for v in &order {
            if let Some(g) = pass.grads.remove(&v.ptr()) {
                v.accumulate(g);
            }
        }
        Ok(())
    }

    /// Reverse-topological order via iterative post-order DFS (the graph can
    /// be deep; no recursion). Only subgraphs that require gradients are
    /// visited.
    fn topo_order(&self) -> Vec<DiffValue<F>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(DiffValue<F>, bool)> = vec![(self.clone(), false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                order.push(v);
                continue;
            }
            if !visited.insert(v.ptr()) {
                continue;
            }
            stack.push((v.clone(), true));
            for p in v.0.op.parents() {
                if p.0.requires && !visited.contains(&p.ptr()) {
                    stack.push(((*p).clone(), false));
                }
            }
        }
        order
    }

    fn propagate(&self, g: &Tensor<F>, pass: &mut PassGrads<F>) {
        match &self.0.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if a.0.requires {
                    pass.add(a, reduce_to(g.clone(), &a.shape()));
                }
                if b.0.requires {
                    pass.add(b, reduce_to(g.clone(), &b.shape()));
                }
            }
            Op::Sub(a, b) => {
                if a.0.requires {
                    pass.add(a, reduce_to(g.clone(), &a.shape()));
                }
                if b.0.requires {
                    pass.add(b, reduce_to(g.map(|x| -x), &b.shape()));
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (a.data().clone(), b.data().clone());
                if a.0.requires {
                    pass.add(a, reduce_to(ew("mul-bwd", g, &bd, |x, y| x * y), &a.shape()));
                }
                if b.0.requires {
                    pass.add(b, reduce_to(ew("mul-bwd", g, &ad, |x, y| x * y), &b.shape()));
                }
            }
            Op::Div(a, b) => {
                let (ad, bd) = (a.data().clone(), b.data().clone());
                if a.0.requires {
                    pass.add(a, reduce_to(ew("div-bwd", g, &bd, |x, y| x / y), &a.shape()));
                }
                if b.0.requires {
                    // d(a/b)/db = -a / b^2
                    let q = ew("div-bwd", &ad, &bd, |x, y| -x / (y * y));
                    pass.add(b, reduce_to(ew("div-bwd", g, &q, |x, y| x * y), &b.shape()));
                }
            }
            Op::Neg(a) => {
                if a.0.requires {
                    pass.add(a, g.map(|x| -x));
                }
            }
            Op::MatMul(a, b) => {
                let (ad, bd) = (a.data().clone(), b.data().clone());
                if bd.ndim() == 2 {
                    if a.0.requires {
                        pass.add(a, g.matmul(&bd.transpose()));
                    }
                    if b.0.requires {
                        pass.add(b, ad.transpose().matmul(g));
                    }
                } else {
                    // [m,k] x [k] -> [m]
                    if a.0.requires {
                        pass.add(a, g.outer(&bd));
                    }
                    if b.0.requires {
                        pass.add(b, ad.transpose().matmul(g));
                    }
                }
            }
            Op::Dot(a, b) => {
                let s = g.item();
                if a.0.requires {
                    pass.add(a, b.data().scale(s));
                }
                if b.0.requires {
                    pass.add(b, a.data().scale(s));
                }
            }
            Op::Concat { axis, parts } => {
                let mut offset = 0usize;
                for p in parts {
                    let len = p.shape()[*axis];
                    if p.0.requires {
                        pass.add(p, g.narrow(*axis, offset, len));
                    }
                    offset += len;
                }
            }
            Op::Stack(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if p.0.requires {
                        let mut t = Tensor::zeros(&p.shape());
                        t.data_mut()[0] = g.data()[i];
                        pass.add(p, t);
                    }
                }
            }
            Op::Narrow { src, axis, start } => {
                if src.0.requires {
                    let mut t = Tensor::zeros(&src.shape());
                    t.add_narrow(*axis, *start, g);
                    pass.add(src, t);
                }
            }
            Op::SumAxis { src, axis } => {
                if src.0.requires {
                    pass.add(src, expand_axis(g, &src.shape(), *axis, F::one()));
                }
            }
            Op::MeanAxis { src, axis } => {
                if src.0.requires {
                    let n = F::from_usize(src.shape()[*axis]).unwrap();
                    pass.add(src, expand_axis(g, &src.shape(), *axis, F::one() / n));
                }
            }
            Op::SumAll(a) => {
                if a.0.requires {
                    pass.add(a, Tensor::full(&a.shape(), g.item()));
                }
            }
            Op::Sigmoid(a) => {
                if a.0.requires {
                    let y = self.data();
                    pass.add(a, g.zip_map(&y, |gi, yi| gi * yi * (F::one() - yi)));
                }
            }
            Op::Tanh(a) => {
                if a.0.requires {
                    let y = self.data();
                    pass.add(a, g.zip_map(&y, |gi, yi| gi * (F::one() - yi * yi)));
                }
            }
            Op::Exp(a) => {
                if a.0.requires {
                    let y = self.data();
                    pass.add(a, g.zip_map(&y, |gi, yi| gi * yi));
                }
            }
            Op::Log(a) => {
                if a.0.requires {
                    let x = a.data();
                    pass.add(a, g.zip_map(&x, |gi, xi| gi / xi));
                }
            }
            Op::LeakyRelu { src, slope } => {
                if src.0.requires {
                    let x = src.data();
                    let s = *slope;
                    pass.add(src, g.zip_map(&x, |gi, xi| if xi >= F::zero() { gi } else { gi * s }));
                }
            }
            Op::Softmax(a) => {
                if a.0.requires {
                    let y = self.data();
                    let inner = g.data().iter().zip(y.data()).fold(F::zero(), |acc, (&gi, &yi)| acc + gi * yi);
                    pass.add(a, g.zip_map(&y, |gi, yi| (gi - inner) * yi));
                }
            }
            Op::NormP { src, p } => {
                if src.0.requires {
                    let x = src.data();
                    let y = self.data().item();
                    let gs = g.item();
                    let p = *p;
                    let grad = if y == F::zero() {
                        Tensor::zeros(&src.shape())
                    } else {
                        x.map(|xi| {
                            let mag = xi.abs().powf(p - F::one()) * xi.signum();
                            gs * mag / y.powf(p - F::one())
                        })
                    };
                    pass.add(src, grad);
                }
            }
            Op::ScaleRows { mat, scales } => {
                let (md, sd) = (mat.data().clone(), scales.data().clone());
                let cols = md.shape()[1];
                if mat.0.requires {
                    let mut t = g.clone();
                    for i in 0..md.shape()[0] {
                        let s = sd.data()[i];
                        for j in 0..cols {
                            t.data_mut()[i * cols + j] = t.data_mut()[i * cols + j] * s;
                        }
                    }
                    pass.add(mat, t);
                }
                if scales.0.requires {
                    let mut t = Tensor::zeros(&scales.shape());
                    for i in 0..md.shape()[0] {
                        let mut acc = F::zero();
                        for j in 0..cols {
                            acc = acc + g.data()[i * cols + j] * md.data()[i * cols + j];
                        }
                        t.data_mut()[i] = acc;
                    }
                    pass.add(scales, t);
                }
            }
        }
    }
}

/// Broadcast a reduced gradient back along `axis`, scaled by `factor`.
fn expand_axis<F: Real>(g: &Tensor<F>, target: &[usize], axis: usize, factor: F) -> Tensor<F> {
    let mut out = Tensor::zeros(target);
    let n = target[axis];
    let mut slab_shape = target.to_vec();
    slab_shape[axis] = 1;
    let mut slab = Tensor::zeros(&slab_shape);
    slab.data_mut().copy_from_slice(g.scale(factor).data());
    for i in 0..n {
        out.add_narrow(axis, i, &slab);
    }
    out
}

/// Balanced sum of many values (keeps graph depth logarithmic).
pub fn sum_tree<F: Real>(values: &[DiffValue<F>]) -> DiffValue<F> {
    assert!(!values.is_empty(), "sum_tree of zero values");
    let mut layer: Vec<DiffValue<F>> = values.to_vec();
    while layer.len() > 1 {
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        for pair in layer.chunks(2) {
            next.push(if pair.len() == 2 { pair[0].add(&pair[1]) } else { pair[0].clone() });
        }
        layer = next;
    }
    layer.pop().unwrap()
}

/// Balanced mean of many values.
pub fn mean_of<F: Real>(values: &[DiffValue<F>]) -> DiffValue<F> {
    let n = values.len();
    sum_tree(values).scale(F::one() / real::<F>(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type V = DiffValue<f64>;

    fn vec_leaf(data: Vec<f64>) -> V {
        V::leaf(Tensor::vector(data))
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let x = vec_leaf(vec![1.0, 1.0, 1.0]);
        let y = x.softmax();
        for &v in y.data().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let x = V::leaf(Tensor::scalar(0.0));
        assert_eq!(x.sigmoid().item(), 0.5);
    }

    #[test]
    fn quadratic_gradient() {
        let x = V::leaf(Tensor::scalar(3.0));
        let y = x.mul(&x);
        y.backward().unwrap();
        assert_eq!(x.grad().item(), 6.0);
    }

    #[test]
    fn fan_out_accumulates() {
        let a = V::leaf(Tensor::scalar(1.5));
        let y = a.add(&a);
        y.backward().unwrap();
        assert_eq!(a.grad().item(), 2.0);
    }

    #[test]
    fn disconnected_parameter_gets_zero_grad() {
        let w = V::leaf(Tensor::scalar(4.0));
        let x = V::leaf(Tensor::scalar(2.0));
        let y = x.mul(&x);
        y.backward().unwrap();
        assert_eq!(w.grad().item(), 0.0);
        assert_eq!(x.grad().item(), 4.0);
    }

    #[test]
    fn double_backward_doubles_gradients() {
        let x = V::leaf(Tensor::scalar(2.0));
        let y = x.mul(&x).mul(&x); // x^3, dy/dx = 12
        y.backward().unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().item(), 24.0);
    }

    #[test]
    fn non_scalar_root_errors() {
        let x = vec_leaf(vec![1.0, 2.0]);
        assert!(matches!(x.backward(), Err(DiffError::NonScalarRoot(_))));
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn add_shape_mismatch_panics() {
        let a = vec_leaf(vec![1.0, 2.0]);
        let b = vec_leaf(vec![1.0, 2.0, 3.0]);
        let _ = a.add(&b);
    }

    #[test]
    #[should_panic(expected = "log of non-positive value")]
    fn log_of_zero_panics() {
        let a = vec_leaf(vec![0.0]);
        let _ = a.log();
    }

    /// Central finite difference of a scalar function of one leaf.
    fn numeric_grad(build: &dyn Fn(&V) -> V, leaf: &V, eps: f64) -> Tensor<f64> {
        let base = leaf.data().clone();
        let mut out = Tensor::zeros(base.shape());
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus.data_mut()[i] += eps;
            leaf.set_data(plus);
            let fp = build(leaf).item();
            let mut minus = base.clone();
            minus.data_mut()[i] -= eps;
            leaf.set_data(minus);
            let fm = build(leaf).item();
            out.data_mut()[i] = (fp - fm) / (2.0 * eps);
        }
        leaf.set_data(base);
        out
    }

    fn check_op(name: &str, build: &dyn Fn(&V) -> V, shapes: &[Vec<usize>], rng: &mut ChaCha8Rng, lo: f64, hi: f64) {
        for shape in shapes {
            for _ in 0..4 {
                let t = Tensor::from_fn(shape, |_| rng.gen_range(lo..hi));
                let leaf = V::leaf(t);
                let y = build(&leaf);
                y.backward().unwrap();
                let analytic = leaf.grad();
                let numeric = numeric_grad(build, &leaf, 1e-6);
                for i in 0..analytic.len() {
                    let (a, n) = (analytic.data()[i], numeric.data()[i]);
                    let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
                    assert!(rel < 1e-6, "{name}: shape {shape:?} elem {i}: analytic {a} vs numeric {n} (rel {rel})");
                }
            }
        }
    }

    /// Randomized gradient test for every registered op, away from
    /// non-differentiable points.
    #[test]
    fn randomized_gradient_checks_all_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let vecs = vec![vec![3], vec![7]];
        let mats = vec![vec![2, 3], vec![4, 2]];

        check_op("sigmoid", &|x| x.sigmoid().sum_all(), &vecs, &mut rng, -2.0, 2.0);
        check_op("tanh", &|x| x.tanh().sum_all(), &vecs, &mut rng, -2.0, 2.0);
        check_op("exp", &|x| x.exp().sum_all(), &vecs, &mut rng, -2.0, 2.0);
        check_op("log", &|x| x.log().sum_all(), &vecs, &mut rng, 0.5, 3.0);
        check_op("leaky", &|x| x.leaky_relu(0.01).sum_all(), &vecs, &mut rng, 0.3, 2.0);
        check_op("leaky-neg", &|x| x.leaky_relu(0.01).sum_all(), &vecs, &mut rng, -2.0, -0.3);
        check_op("softmax", &|x| {
            let w = V::constant(Tensor::from_fn(&x.shape(), |i| (i as f64 + 1.0) * 0.37));
            x.softmax().mul(&w).sum_all()
        }, &vecs, &mut rng, -2.0, 2.0);
        check_op("norm2", &|x| x.norm_p(2.0), &vecs, &mut rng, 0.4, 2.0);
        check_op("norm3", &|x| x.norm_p(3.0), &vecs, &mut rng, 0.4, 2.0);
        check_op("mean_axis", &|x| x.mean_axis(0).norm_p(2.0), &mats, &mut rng, -2.0, 2.0);
        check_op("sum_axis1", &|x| x.sum_axis(1).norm_p(2.0), &mats, &mut rng, -2.0, 2.0);
        check_op("narrow", &|x| x.narrow(0, 1, 1).sum_all(), &mats, &mut rng, -2.0, 2.0);
        check_op("neg", &|x| x.neg().norm_p(2.0), &vecs, &mut rng, 0.2, 2.0);

        check_op("matmul-lhs", &|x| {
            let w = V::constant(Tensor::from_fn(&[x.shape()[1], 2], |i| 0.3 * (i as f64 - 2.0)));
            x.matmul(&w).norm_p(2.0)
        }, &mats, &mut rng, 0.3, 2.0);
        check_op("matvec-rhs", &|x| {
            let m = V::constant(Tensor::from_fn(&[4, x.shape()[0]], |i| 0.21 * (i as f64 - 5.0)));
            m.matmul(x).norm_p(2.0)
        }, &vecs, &mut rng, 0.3, 2.0);
        check_op("dot", &|x| {
            let w = V::constant(Tensor::from_fn(&x.shape(), |i| 0.5 - 0.2 * i as f64));
            x.dot(&w)
        }, &vecs, &mut rng, -2.0, 2.0);
        check_op("div", &|x| {
            let w = V::constant(Tensor::from_fn(&x.shape(), |i| 1.0 + 0.3 * i as f64));
            x.div(&w).sum_all()
        }, &vecs, &mut rng, 0.5, 2.0);
        check_op("div-rhs", &|x| {
            let w = V::constant(Tensor::from_fn(&x.shape(), |i| 1.0 + 0.3 * i as f64));
            w.div(x).sum_all()
        }, &vecs, &mut rng, 0.5, 2.0);
        check_op("scalar-broadcast-mul", &|x| {
            let s = x.narrow(0, 0, 1).sum_all();
            let w = V::constant(Tensor::from_fn(&x.shape(), |i| 0.1 * (i as f64 + 1.0)));
            x.mul(&w).sum_all().mul(&s)
        }, &vecs, &mut rng, 0.3, 2.0);
        check_op("scale_rows-mat", &|x| {
            let v = V::constant(Tensor::from_fn(&[x.shape()[0]], |i| 0.5 + 0.25 * i as f64));
            x.scale_rows(&v).norm_p(2.0)
        }, &mats, &mut rng, 0.3, 2.0);
        check_op("scale_rows-vec", &|x| {
            let m = V::constant(Tensor::from_fn(&[x.shape()[0], 3], |i| 0.2 + 0.1 * i as f64));
            m.scale_rows(x).norm_p(2.0)
        }, &vecs, &mut rng, 0.3, 2.0);
        check_op("concat", &|x| {
            let other = V::constant(Tensor::from_fn(&x.shape(), |i| 0.4 * i as f64));
            V::concat(0, &[x.clone(), other]).norm_p(2.0)
        }, &vecs, &mut rng, 0.3, 2.0);
        check_op("stack", &|x| {
            let s1 = x.narrow(0, 0, 1).sum_all();
            let s2 = x.narrow(0, 1, 1).sum_all().mul(&V::scalar_const(2.0));
            V::stack(&[s1, s2]).norm_p(2.0)
        }, &vecs, &mut rng, 0.3, 2.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let build = || {
            let x = V::leaf(Tensor::vector(vec![0.3, -0.7, 1.1]));
            let w = V::constant(Tensor::from_fn(&[3, 3], |i| (i as f64).sin()));
            w.matmul(&x).tanh().norm_p(2.0).item()
        };
        let a = build();
        let b = build();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn works_with_f32() {
        let x: DiffValue<f32> = DiffValue::leaf(Tensor::scalar(3.0f32));
        let y = x.mul(&x);
        y.backward().unwrap();
        assert_eq!(x.grad().item(), 6.0f32);
    }

    #[test]
    fn sum_tree_matches_chain() {
        let xs: Vec<V> = (0..17).map(|i| V::leaf(Tensor::scalar(i as f64 * 0.5))).collect();
        let total = sum_tree(&xs);
        assert!((total.item() - (0..17).map(|i| i as f64 * 0.5).sum::<f64>()).abs() < 1e-12);
        total.backward().unwrap();
        for x in &xs {
            assert_eq!(x.grad().item(), 1.0);
        }
    }
}
