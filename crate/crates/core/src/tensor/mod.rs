//! Dense row-major `f32` arrays and the handful of operations the network needs.

mod gemm;

pub(crate) use gemm::{gemm, MatRef};

use std::fmt;

use crate::error::{ensure, Error, Result};

/// Highest rank a [`Tensor`] may have: a batch of `(height, width, channels)` maps.
pub const MAX_RANK: usize = 4;

/// Extents of a tensor, outermost first. Never empty, never zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(extents: &[usize]) -> Result<Self> {
        ensure!(
            !extents.is_empty() && extents.len() <= MAX_RANK,
            "a shape needs between 1 and {MAX_RANK} axes, got {}",
            extents.len()
        );
        ensure!(extents.iter().all(|&e| e >= 1), "shape {extents:?} has a zero extent");
        Ok(Self(extents.to_vec()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Number of elements.
    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        let head = &self.data[..self.data.len().min(PREVIEW)];
        let ellipsis = if self.data.len() > PREVIEW { ", .." } else { "" };
        write!(f, "Tensor{:?} {head:?}{ellipsis}", self.shape)
    }
}

impl Tensor {
    /// Wraps `data` as a tensor of the given shape; the length must match exactly.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let shape = Shape::new(shape)?;
        ensure!(
            data.len() == shape.numel(),
            "data length {} does not match shape {shape} ({} elements)",
            data.len(),
            shape.numel()
        );
        Ok(Self { shape, data })
    }

    /// A tensor of zeros.
    ///
    /// # Panics
    ///
    /// Panics if `shape` is not a valid [`Shape`].
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    /// # Panics
    ///
    /// Panics if `shape` is not a valid [`Shape`].
    pub fn full(shape: &[usize], value: f32) -> Self {
        let shape = Shape::new(shape).expect("invalid tensor shape");
        let data = vec![value; shape.numel()];
        Self { shape, data }
    }

    pub fn identity(n: usize) -> Result<Self> {
        ensure!(n >= 1, "identity needs n >= 1");
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    pub fn from_slice(data: &[f32]) -> Result<Self> {
        Self::new(&[data.len()], data.to_vec())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        ensure!(!items.is_empty(), "cannot stack zero tensors");
        let inner = items[0].dims();
        ensure!(inner.len() < MAX_RANK, "stacking rank-{} tensors exceeds the rank limit", inner.len());
        let mut data = Vec::with_capacity(items.len() * items[0].len());
        for t in items {
            ensure!(t.dims() == inner, "cannot stack {} with {}", t.shape, items[0].shape);
            data.extend_from_slice(&t.data);
        }
        let mut dims = vec![items.len()];
        dims.extend_from_slice(inner);
        Self::new(&dims, data)
    }

    /// Splits along the leading axis.
    pub fn unstack(&self) -> Result<Vec<Tensor>> {
        ensure!(self.rank() >= 2, "unstack needs a tensor of rank 2 or more");
        let inner = &self.dims()[1..];
        let step: usize = inner.iter().product();
        self.data.chunks_exact(step).map(|c| Self::new(inner, c.to_vec())).collect()
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        ensure!(self.shape == other.shape, "shape mismatch: {} vs {}", self.shape, other.shape);
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }

    /// Bit patterns of every element, for exact comparisons and digests.
    pub fn to_bits(&self) -> Vec<u32> {
        self.data.iter().map(|v| v.to_bits()).collect()
    }
}

/// `(m, k) × (k, n) → (m, n)`.
///
/// Each output element accumulates its `k` products in ascending order with
/// one fused multiply-add per term, so results are reproducible bit for bit.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    ensure!(a.rank() == 2 && b.rank() == 2, "matmul needs two rank-2 tensors, got {} and {}", a.shape, b.shape);
    let (m, k) = (a.dims()[0], a.dims()[1]);
    let (k2, n) = (b.dims()[0], b.dims()[1]);
    ensure!(k == k2, "matmul inner extents differ: {} vs {}", a.shape, b.shape);
    let mut out = vec![0.0; m * n];
    gemm(MatRef::row_major(a.data(), m, k), MatRef::row_major(b.data(), k, n), &mut out, false);
    Tensor::new(&[m, n], out)
}

/// Output extent of a valid (unpadded), stride-1 convolution.
pub fn conv_output_extent(input: usize, kernel: usize) -> Result<usize> {
    if kernel == 0 || input < kernel {
        return Err(Error::Contract(format!(
            "a {kernel}-wide kernel does not fit in an extent of {input}"
        )));
    }
    Ok(input - kernel + 1)
}
