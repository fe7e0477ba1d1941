//! Dense row-major arrays with at most three axes.
//!
//! Deliberately small: just the storage and kernels the autodiff layer and
//! the graph pipeline need. Shape `[]` is a scalar, `[n]` a vector,
//! `[r, c]` a matrix.

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert!(shape.len() <= 3, "tensors support at most 3 axes, got {shape:?}");
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "shape {shape:?} does not match data length {}", data.len());
        Tensor { shape, data }
    }

    pub fn scalar(v: F) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<F>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![F::zero(); n] }
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> F) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(|i| f(i)).collect() }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when the tensor holds exactly one element (shape `[]` or `[1]`…).
    #[inline]
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a one-element tensor.
    #[inline]
    pub fn item(&self) -> F {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> F {
        debug_assert_eq!(self.ndim(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch {:?} vs {:?}", self.shape, other.shape);
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn scale(&self, s: F) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sum(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &x| acc + x)
    }

    /// Matrix product. Accepts `[m,k]x[k,n] -> [m,n]` and `[m,k]x[k] -> [m]`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.ndim(), 2, "matmul lhs must be 2-d, got {:?}", self.shape);
        let (m, k) = (self.shape[0], self.shape[1]);
        match rhs.ndim() {
            2 => {
                assert_eq!(rhs.shape[0], k, "matmul inner dims {:?} x {:?}", self.shape, rhs.shape);
                let n = rhs.shape[1];
                let mut out = vec![F::zero(); m * n];
                for i in 0..m {
                    for p in 0..k {
                        let a = self.data[i * k + p];
                        if a == F::zero() {
                            continue;
                        }
                        let row = &rhs.data[p * n..(p + 1) * n];
                        let dst = &mut out[i * n..(i + 1) * n];
                        for (d, &b) in dst.iter_mut().zip(row) {
                            *d = *d + a * b;
                        }
                    }
                }
                Tensor::new(vec![m, n], out)
            }
            1 => {
                assert_eq!(rhs.shape[0], k, "matmul inner dims {:?} x {:?}", self.shape, rhs.shape);
                let mut out = vec![F::zero(); m];
                for i in 0..m {
                    let mut acc = F::zero();
                    for p in 0..k {
                        acc = acc + self.data[i * k + p] * rhs.data[p];
                    }
                    out[i] = acc;
                }
                Tensor::vector(out)
            }
            _ => panic!("matmul rhs must be 1-d or 2-d, got {:?}", rhs.shape),
        }
    }

    pub fn transpose(&self) -> Self {
        assert_eq!(self.ndim(), 2, "transpose needs a matrix, got {:?}", self.shape);
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![F::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    /// Outer product of two vectors: `[m] x [n] -> [m,n]`.
    pub fn outer(&self, rhs: &Self) -> Self {
        assert_eq!(self.ndim(), 1);
        assert_eq!(rhs.ndim(), 1);
        let (m, n) = (self.shape[0], rhs.shape[0]);
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = self.data[i] * rhs.data[j];
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Sum along `axis`, dropping that axis.
    pub fn sum_axis(&self, axis: usize) -> Self {
        assert!(axis < self.ndim(), "sum_axis {axis} out of range for {:?}", self.shape);
        let mut out_shape = self.shape.clone();
        out_shape.remove(axis);
        let mut out = Tensor::zeros(&out_shape);
        let strides = strides_of(&self.shape);
        for (flat, &v) in self.data.iter().enumerate() {
            let mut idx = unflatten(flat, &strides);
            idx.remove(axis);
            let oflat = flatten(&idx, &out_shape);
            out.data[oflat] = out.data[oflat] + v;
        }
        out
    }

    pub fn mean_axis(&self, axis: usize) -> Self {
        let n = self.shape[axis];
        assert!(n > 0, "mean over empty axis");
        self.sum_axis(axis).scale(F::one() / F::from_usize(n).unwrap())
    }

    /// Concatenate along `axis`; all parts must agree on the other axes.
    pub fn concat(axis: usize, parts: &[&Tensor<F>]) -> Self {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let ndim = parts[0].ndim();
        assert!(axis < ndim, "concat axis {axis} out of range for {:?}", parts[0].shape);
        let mut out_shape = parts[0].shape.clone();
        out_shape[axis] = parts.iter().map(|p| p.shape[axis]).sum();
        for p in parts {
            assert_eq!(p.ndim(), ndim, "concat rank mismatch");
            for d in 0..ndim {
                if d != axis {
                    assert_eq!(p.shape[d], parts[0].shape[d], "concat shape mismatch on axis {d}");
                }
            }
        }
        if ndim == 1 {
            let mut data = Vec::with_capacity(out_shape[0]);
            for p in parts {
                data.extend_from_slice(&p.data);
            }
            return Tensor::vector(data);
        }
        // 2-d concat
        let mut out = Tensor::zeros(&out_shape);
        let mut offset = 0usize;
        for p in parts {
            let (r, c) = (p.shape[0], p.shape[1]);
            match axis {
                0 => {
                    let dst = offset * out_shape[1];
                    out.data[dst..dst + r * c].copy_from_slice(&p.data);
                    offset += r;
                }
                _ => {
                    for i in 0..r {
                        for j in 0..c {
                            out.data[i * out_shape[1] + offset + j] = p.data[i * c + j];
                        }
                    }
                    offset += c;
                }
            }
        }
        out
    }

    /// Contiguous slab `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        assert!(axis < self.ndim(), "narrow axis {axis} out of range for {:?}", self.shape);
        assert!(start + len <= self.shape[axis], "narrow [{start}, {start}+{len}) exceeds axis of size {}", self.shape[axis]);
        let mut out_shape = self.shape.clone();
        out_shape[axis] = len;
        let strides = strides_of(&self.shape);
        let mut out = Tensor::zeros(&out_shape);
        let out_strides = strides_of(&out_shape);
        for oflat in 0..out.data.len() {
            let mut idx = unflatten(oflat, &out_strides);
            idx[axis] += start;
            out.data[oflat] = self.data[idx.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>()];
        }
        out
    }

    /// Scatter-add `src` into the `[start, start+len)` slab along `axis`.
    pub fn add_narrow(&mut self, axis: usize, start: usize, src: &Tensor<F>) {
        let strides = strides_of(&self.shape);
        let src_strides = strides_of(src.shape());
        for sflat in 0..src.data.len() {
            let mut idx = unflatten(sflat, &src_strides);
            idx[axis] += start;
            let dflat: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            self.data[dflat] = self.data[dflat] + src.data[sflat];
        }
    }

    /// Multiply row `i` of a matrix by `v[i]`.
    pub fn scale_rows(&self, v: &Tensor<F>) -> Self {
        assert_eq!(self.ndim(), 2);
        assert_eq!(v.ndim(), 1);
        assert_eq!(self.shape[0], v.shape[0], "scale_rows: {} rows vs {} scales", self.shape[0], v.shape[0]);
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = self.clone();
        for i in 0..r {
            let s = v.data[i];
            for j in 0..c {
                out.data[i * c + j] = out.data[i * c + j] * s;
            }
        }
        out
    }

    pub fn frobenius(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &x| acc + x * x).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn unflatten(mut flat: usize, strides: &[usize]) -> Vec<usize> {
    strides
        .iter()
        .map(|&s| {
            let i = flat / s;
            flat %= s;
            i
        })
        .collect()
}

fn flatten(idx: &[usize], shape: &[usize]) -> usize {
    let strides = strides_of(shape);
    idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matrix_vector() {
        let m = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = Tensor::vector(vec![1.0, 0.0, -1.0]);
        assert_eq!(m.matmul(&v).data(), &[-2.0, -2.0]);
    }

    #[test]
    fn matmul_matrix_matrix() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(a.matmul(&b).data(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn sum_and_mean_axis() {
        let m = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.sum_axis(1).data(), &[6.0, 15.0]);
        assert_eq!(m.sum_axis(0).data(), &[5.0, 7.0, 9.0]);
        assert_eq!(m.mean_axis(1).data(), &[2.0, 5.0]);
    }

    #[test]
    fn concat_and_narrow_roundtrip() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0]);
        let c = Tensor::concat(0, &[&a, &b]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0]);
        assert_eq!(c.narrow(0, 1, 2).data(), &[2.0, 3.0]);

        let m = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let n = Tensor::matrix(2, 1, vec![9.0, 8.0]);
        let cat = Tensor::concat(1, &[&m, &n]);
        assert_eq!(cat.shape(), &[2, 3]);
        assert_eq!(cat.data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        assert_eq!(cat.narrow(1, 2, 1).data(), &[9.0, 8.0]);
    }

    #[test]
    fn scale_rows_matches_manual() {
        let m = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let v = Tensor::vector(vec![10.0, 0.5]);
        assert_eq!(m.scale_rows(&v).data(), &[10.0, 20.0, 1.5, 2.0]);
    }

    #[test]
    fn generic_over_f32() {
        let a: Tensor<f32> = Tensor::vector(vec![1.0, 2.0]);
        assert_eq!(a.sum(), 3.0f32);
    }
}
