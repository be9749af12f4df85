//! Layers of the tamper classifier and the model that stacks them.
//!
//! Every layer accepts either a single example or a batch with one extra
//! leading axis, and returns the same form it was given. `forward` caches what
//! `backward` needs; `infer` is the read-only evaluation path.

mod activation;
mod conv;
mod dense;
mod dropout;
mod model;
mod pool;

pub use activation::{relu, softmax, Relu, Softmax};
pub use conv::Conv2d;
pub use dense::Dense;
pub use dropout::Dropout;
pub use model::{build_paper_model, Flatten, Layer, LayerSummary, Model, PAPER_INPUT};
pub use pool::MaxPool2d;

use rand::distributions::Distribution;
use rand::Rng;

use crate::error::{ensure, Result};
use crate::tensor::Tensor;

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// Splits `x` into `(batch, item_dims)`, treating a tensor of rank `item_rank`
/// as a batch of one.
pub(crate) fn batch_view(x: &Tensor, item_rank: usize, what: &str) -> Result<(usize, Vec<usize>, bool)> {
    let dims = x.dims();
    if dims.len() == item_rank {
        Ok((1, dims.to_vec(), false))
    } else {
        ensure!(
            dims.len() == item_rank + 1,
            "{what} expects a rank-{item_rank} example or a rank-{} batch, got {}",
            item_rank + 1,
            x.shape()
        );
        Ok((dims[0], dims[1..].to_vec(), true))
    }
}

/// Builds a tensor of `n` items of shape `item`, with or without the batch axis.
pub(crate) fn with_batch(n: usize, item: &[usize], batched: bool, data: Vec<f32>) -> Result<Tensor> {
    if batched {
        let mut dims = vec![n];
        dims.extend_from_slice(item);
        Tensor::new(&dims, data)
    } else {
        Tensor::new(item, data)
    }
}

/// Uniform Glorot initialisation: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, len: usize) -> Vec<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let dist = rand::distributions::Uniform::new(-limit, limit);
    (0..len).map(|_| dist.sample(rng)).collect()
}
