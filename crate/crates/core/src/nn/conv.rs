use rand::Rng;

use super::{batch_view, glorot_uniform, with_batch};
use crate::error::{ensure, Error, Result};
use crate::tensor::{conv_output_extent, gemm, MatRef, Tensor};

/// Valid (unpadded), stride-1 2-D cross-correlation over `(height, width, channels)` maps.
///
/// Weights are laid out `(kernel, kernel, in_channels, out_channels)`, so the
/// flattened kernel is a `(kernel·kernel·in_channels) × out_channels` matrix
/// whose rows follow the same `(ky, kx, c)` order as an unrolled input patch.
#[derive(Clone, Debug)]
pub struct Conv2d {
    kernel: usize,
    in_channels: usize,
    out_channels: usize,
    weights: Tensor,
    bias: Tensor,
    grad_weights: Tensor,
    grad_bias: Tensor,
    cached_input: Option<Tensor>,
}

impl Conv2d {
    /// A layer with zero weights and bias.
    pub fn new(kernel: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        ensure!(kernel >= 1 && in_channels >= 1 && out_channels >= 1, "convolution extents must be positive");
        let wshape = [kernel, kernel, in_channels, out_channels];
        Ok(Self {
            kernel,
            in_channels,
            out_channels,
            weights: Tensor::zeros(&wshape),
            bias: Tensor::zeros(&[out_channels]),
            grad_weights: Tensor::zeros(&wshape),
            grad_bias: Tensor::zeros(&[out_channels]),
            cached_input: None,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(kernel: usize, in_channels: usize, out_channels: usize, rng: &mut R) -> Result<Self> {
        let mut layer = Self::new(kernel, in_channels, out_channels)?;
        let area = kernel * kernel;
        let len = layer.weights.len();
        let init = glorot_uniform(rng, area * in_channels, area * out_channels, len);
        layer.weights = Tensor::new(layer.weights.dims(), init)?;
        Ok(layer)
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
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

    /// `(kernel² · in_channels + 1) · out_channels`.
    pub fn param_count(&self) -> usize {
        (self.kernel * self.kernel * self.in_channels + 1) * self.out_channels
    }

    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        ensure!(input.len() == 3, "convolution input must be (height, width, channels), got {input:?}");
        ensure!(input[2] == self.in_channels, "expected {} input channels, got {}", self.in_channels, input[2]);
        Ok(vec![
            conv_output_extent(input[0], self.kernel)?,
            conv_output_extent(input[1], self.kernel)?,
            self.out_channels,
        ])
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
        let (n, item, batched) = batch_view(x, 3, "conv2d")?;
        let out_item = self.output_dims(&item)?;
        let (h, w, cin) = (item[0], item[1], item[2]);
        let (oh, ow) = (out_item[0], out_item[1]);
        let in_len = h * w * cin;
        let out_len = oh * ow * self.out_channels;
        let mut out = vec![0.0f32; n * out_len];
        let span = wide_rows(oh, w, self.kernel);
        let mut wide = vec![0.0f32; span * self.out_channels];
        for (sample, dst) in x.data().chunks_exact(in_len).zip(out.chunks_exact_mut(out_len)) {
            for row in wide.chunks_exact_mut(self.out_channels) {
                row.copy_from_slice(self.bias.data());
            }
            correlate(sample, w, cin, self.kernel, self.weights.data(), self.out_channels, &mut wide, true);
            narrow(&wide, w, ow, self.out_channels, dst);
        }
        with_batch(n, &out_item, batched, out)
    }

    /// Fills the parameter gradients and returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        self.backward_impl(grad_out, true).map(|g| g.expect("input gradient was requested"))
    }

    /// Like [`Conv2d::backward`] but skips the input gradient, which a first layer never needs.
    pub(crate) fn backward_params_only(&mut self, grad_out: &Tensor) -> Result<()> {
        self.backward_impl(grad_out, false).map(|_| ())
    }

    fn backward_impl(&mut self, grad_out: &Tensor, want_input_grad: bool) -> Result<Option<Tensor>> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("conv2d backward called before forward".into()))?;
        let (n, item, batched) = batch_view(x, 3, "conv2d")?;
        let out_item = self.output_dims(&item)?;
        let mut expected = if batched { vec![n] } else { vec![] };
        expected.extend_from_slice(&out_item);
        ensure!(grad_out.dims() == expected.as_slice(), "gradient shape {} does not match output {expected:?}", grad_out.shape());

        let (h, w, cin) = (item[0], item[1], item[2]);
        let (oh, ow, cout) = (out_item[0], out_item[1], self.out_channels);
        let k = self.kernel;
        let positions = oh * ow;

        self.grad_bias.data_mut().fill(0.0);
        self.grad_weights.data_mut().fill(0.0);
        // Output gradient widened to the input width; the extra columns stay zero.
        let span = wide_rows(oh, w, k);
        let mut gwide = vec![0.0f32; span * cout];
        let run = k * cin;
        for (sample, g) in x.data().chunks_exact(h * w * cin).zip(grad_out.data().chunks_exact(positions * cout)) {
            for row in g.chunks_exact(cout) {
                for (gb, &v) in self.grad_bias.data_mut().iter_mut().zip(row) {
                    *gb += v;
                }
            }
            for (y, src) in g.chunks_exact(ow * cout).enumerate() {
                gwide[y * w * cout..][..ow * cout].copy_from_slice(src);
            }
            let gw = MatRef::row_major(&gwide, span, cout);
            for (ky, part) in self.grad_weights.data_mut().chunks_exact_mut(run * cout).enumerate() {
                let rows = MatRef { data: &sample[ky * w * cin..], rows: run, cols: span, row_stride: 1, col_stride: cin };
                gemm(rows, gw, part, true);
            }
        }
        if !want_input_grad {
            return Ok(None);
        }

        // The input gradient is a full correlation of the output gradient
        // with the spatially flipped kernel, channels swapped.
        let flipped = self.flipped_kernel();
        let (ph, pw) = (oh + 2 * (k - 1), ow + 2 * (k - 1));
        let mut padded = vec![0.0f32; ph * pw * cout];
        let span = wide_rows(h, pw, k);
        let mut wide = vec![0.0f32; span * cin];
        let mut grad_in = vec![0.0f32; n * h * w * cin];
        for (g, dst) in grad_out.data().chunks_exact(positions * cout).zip(grad_in.chunks_exact_mut(h * w * cin)) {
            for y in 0..oh {
                let src = &g[y * ow * cout..(y + 1) * ow * cout];
                let at = ((y + k - 1) * pw + (k - 1)) * cout;
                padded[at..at + ow * cout].copy_from_slice(src);
            }
            correlate(&padded, pw, cout, k, &flipped, cin, &mut wide, false);
            narrow(&wide, pw, w, cin, dst);
        }
        with_batch(n, &item, batched, grad_in).map(Some)
    }

    /// `flipped[(ky, kx, co), ci] = weights[k-1-ky, k-1-kx, ci, co]`.
    fn flipped_kernel(&self) -> Vec<f32> {
        let (k, cin, cout) = (self.kernel, self.in_channels, self.out_channels);
        let w = self.weights.data();
        let mut out = vec![0.0f32; k * k * cout * cin];
        for ky in 0..k {
            for kx in 0..k {
                let src_base = ((k - 1 - ky) * k + (k - 1 - kx)) * cin * cout;
                let dst_base = (ky * k + kx) * cout * cin;
                for ci in 0..cin {
                    for co in 0..cout {
                        out[dst_base + co * cin + ci] = w[src_base + ci * cout + co];
                    }
                }
            }
        }
        out
    }
}

/// Rows of a correlation output computed at the full input width `w`: every
/// position up to the last valid one, including the `k - 1` overhanging columns
/// at the end of each row.
fn wide_rows(out_h: usize, w: usize, k: usize) -> usize {
    (out_h - 1) * w + w - k + 1
}

/// Rows of the wide output handled per block, so the block stays in cache
/// while every kernel row is added in.
const BLOCK: usize = 512;

/// `wide += Σ_ky rows_ky · kernel_ky` over an `(·, w, c)` map, where row `i` of
/// `rows_ky` is the `k·c` values starting at position `i + ky·w`. The products
/// are accumulated in `(ky, kx, c)` order, the order of an unrolled patch.
/// With `accumulate` unset the first kernel row overwrites `wide`.
#[allow(clippy::too_many_arguments)]
fn correlate(x: &[f32], w: usize, c: usize, k: usize, kernel: &[f32], cout: usize, wide: &mut [f32], accumulate: bool) {
    let run = k * c;
    let span = wide.len() / cout;
    for (block, part) in wide.chunks_mut(BLOCK * cout).enumerate() {
        let start = block * BLOCK;
        let rows = part.len() / cout;
        debug_assert!(start + rows <= span);
        for ky in 0..k {
            let a = MatRef { data: &x[(ky * w + start) * c..], rows, cols: run, row_stride: c, col_stride: 1 };
            let b = MatRef::row_major(&kernel[ky * run * cout..][..run * cout], run, cout);
            gemm(a, b, part, accumulate || ky > 0);
        }
    }
}

/// Copies the valid `out_w` columns of each wide row into a packed map.
fn narrow(wide: &[f32], w: usize, out_w: usize, c: usize, dst: &mut [f32]) {
    for (y, row) in dst.chunks_exact_mut(out_w * c).enumerate() {
        row.copy_from_slice(&wide[y * w * c..][..out_w * c]);
    }
}
