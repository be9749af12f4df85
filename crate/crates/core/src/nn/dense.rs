use rand::Rng;

use super::{batch_view, glorot_uniform, with_batch};
use crate::error::{ensure, Error, Result};
use crate::tensor::{gemm, MatRef, Tensor};

/// Fully connected layer `y = xᵀW + b` with `W` stored `(in_features, out_features)`.
#[derive(Clone, Debug)]
pub struct Dense {
    weights: Tensor,
    bias: Tensor,
    grad_weights: Tensor,
    grad_bias: Tensor,
    cached_input: Option<Tensor>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self> {
        ensure!(in_features >= 1 && out_features >= 1, "dense extents must be positive");
        Ok(Self {
            weights: Tensor::zeros(&[in_features, out_features]),
            bias: Tensor::zeros(&[out_features]),
            grad_weights: Tensor::zeros(&[in_features, out_features]),
            grad_bias: Tensor::zeros(&[out_features]),
            cached_input: None,
        })
    }

    pub fn glorot<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Result<Self> {
        let mut layer = Self::new(in_features, out_features)?;
        let init = glorot_uniform(rng, in_features, out_features, in_features * out_features);
        layer.weights = Tensor::new(layer.weights.dims(), init)?;
        Ok(layer)
    }

    pub fn in_features(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn grad_weights(&self) -> &Tensor {
        &self.grad_weights
    }

    pub fn grad_bias(&self) -> &Tensor {
        &self.grad_bias
    }

    pub fn set_weights(&mut self, weights: Tensor) -> Result<()> {
        ensure!(weights.shape() == self.weights.shape(), "weights must have shape {}", self.weights.shape());
        self.weights = weights;
        Ok(())
    }

    pub fn set_bias(&mut self, bias: Tensor) -> Result<()> {
        ensure!(bias.shape() == self.bias.shape(), "bias must have shape {}", self.bias.shape());
        self.bias = bias;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.in_features() * self.out_features() + self.out_features()
    }

    pub(crate) fn parts_mut(&mut self) -> [(&mut Tensor, &Tensor); 2] {
        [(&mut self.weights, &self.grad_weights), (&mut self.bias, &self.grad_bias)]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.infer(x)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let (n, item, batched) = batch_view(x, 1, "dense")?;
        let (fin, fout) = (self.in_features(), self.out_features());
        ensure!(item[0] == fin, "dense layer expects {fin} features, got {}", item[0]);
        let mut out = Vec::with_capacity(n * fout);
        for _ in 0..n {
            out.extend_from_slice(self.bias.data());
        }
        gemm(MatRef::row_major(x.data(), n, fin), MatRef::row_major(self.weights.data(), fin, fout), &mut out, true);
        with_batch(n, &[fout], batched, out)
    }

    /// Fills the parameter gradients (summed over the batch) and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        let (n, _, batched) = batch_view(x, 1, "dense")?;
        let (fin, fout) = (self.in_features(), self.out_features());
        ensure!(grad_out.len() == n * fout, "dense gradient has {} elements, expected {}", grad_out.len(), n * fout);
        let g = grad_out.data();

        gemm(
            MatRef::transposed(x.data(), n, fin),
            MatRef::row_major(g, n, fout),
            self.grad_weights.data_mut(),
            false,
        );
        let gb = self.grad_bias.data_mut();
        gb.fill(0.0);
        for row in g.chunks_exact(fout) {
            for (acc, &v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
        // Computed as (W·Gᵀ)ᵀ so the large weight matrix is streamed row by row.
        let mut grad_in_t = vec![0.0f32; fin * n];
        gemm(
            MatRef::row_major(self.weights.data(), fin, fout),
            MatRef::transposed(g, n, fout),
            &mut grad_in_t,
            false,
        );
        let mut grad_in = vec![0.0f32; n * fin];
        for (i, row) in grad_in_t.chunks_exact(n).enumerate() {
            for (s, &v) in row.iter().enumerate() {
                grad_in[s * fin + i] = v;
            }
        }
        with_batch(n, &[fin], batched, grad_in)
    }
}
